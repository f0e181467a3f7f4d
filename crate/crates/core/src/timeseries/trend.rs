use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{ObservationSeries, TimeseriesError};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMethod {
    MannKendall,
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendDirection {
    Increasing,
    Decreasing,
    #[serde(rename = "none")]
    NoTrend,
}

impl TrendDirection {
    pub fn flipped(self) -> Self {
        match self {
            TrendDirection::Increasing => TrendDirection::Decreasing,
            TrendDirection::Decreasing => TrendDirection::Increasing,
            TrendDirection::NoTrend => TrendDirection::NoTrend,
        }
    }
}

/// Outcome of a monotone-trend test. `slope` is per day: Sen's slope for
/// Mann-Kendall, the least-squares slope for OLS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub method: TrendMethod,
    pub slope: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_statistic: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub p_value: f64,
    pub significance: f64,
    pub direction: TrendDirection,
    pub n_obs: usize,
}

fn check_alpha(alpha: f64) -> Result<(), TimeseriesError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(TimeseriesError::InvalidParameter(format!(
            "significance {alpha} outside (0, 1)"
        )))
    }
}

fn direction(p_value: f64, alpha: f64, sign: f64) -> TrendDirection {
    if p_value >= alpha || sign == 0.0 {
        TrendDirection::NoTrend
    } else if sign > 0.0 {
        TrendDirection::Increasing
    } else {
        TrendDirection::Decreasing
    }
}

fn two_sided_normal(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * n.cdf(-z.abs())).clamp(0.0, 1.0)
}

/// Mann-Kendall monotone-trend test with Sen's slope.
///
/// `S = Σ_{i<j} sign(v_j − v_i)`, `tau = S / (n(n−1)/2)`. The p-value is
/// two-sided from the normal approximation with tie-adjusted variance and a
/// ±1 continuity correction. Below 4 observations S and tau are still
/// reported but p is 1 (no test).
pub fn mann_kendall(
    series: &ObservationSeries,
    alpha: f64,
) -> Result<TrendResult, TimeseriesError> {
    check_alpha(alpha)?;
    let n = series.len();
    if n < 2 {
        return Err(TimeseriesError::InsufficientData { needed: 2, got: n });
    }
    let obs = series.observations();
    let mut s: i64 = 0;
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = obs[j].value - obs[i].value;
            s += if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            };
            let dt = obs[j].t - obs[i].t;
            if dt != 0.0 {
                slopes.push(d / dt);
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let tau = s as f64 / pairs;

    let p_value = if n < 4 {
        1.0
    } else {
        let mut ties: HashMap<u64, u64> = HashMap::new();
        for o in obs {
            // +0.0 and -0.0 are the same value
            *ties.entry((o.value + 0.0).to_bits()).or_default() += 1;
        }
        let nf = n as f64;
        let tie_term: f64 = ties
            .values()
            .filter(|&&c| c > 1)
            .map(|&c| {
                let c = c as f64;
                c * (c - 1.0) * (2.0 * c + 5.0)
            })
            .sum();
        let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
        if var <= 0.0 || s == 0 {
            1.0
        } else {
            let z = (s - s.signum()) as f64 / var.sqrt();
            two_sided_normal(z)
        }
    };

    Ok(TrendResult {
        method: TrendMethod::MannKendall,
        slope: median(&mut slopes).unwrap_or(0.0),
        intercept: None,
        s_statistic: Some(s),
        tau: Some(tau),
        rmse: None,
        p_value,
        significance: alpha,
        direction: direction(p_value, alpha, s as f64),
        n_obs: n,
    })
}

/// Least-squares line through the observations (unweighted); the p-value
/// comes from the slope's t-statistic with n − 2 degrees of freedom.
pub fn ols_slope(series: &ObservationSeries, alpha: f64) -> Result<TrendResult, TimeseriesError> {
    check_alpha(alpha)?;
    let n = series.len();
    if n < 3 {
        return Err(TimeseriesError::InsufficientData { needed: 3, got: n });
    }
    let obs = series.observations();
    let nf = n as f64;
    let t_mean = obs.iter().map(|o| o.t).sum::<f64>() / nf;
    let v_mean = obs.iter().map(|o| o.value).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for o in obs {
        let dt = o.t - t_mean;
        sxx += dt * dt;
        sxy += dt * (o.value - v_mean);
    }
    if sxx == 0.0 {
        return Err(TimeseriesError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = v_mean - slope * t_mean;
    let rss: f64 = obs
        .iter()
        .map(|o| {
            let r = o.value - (intercept + slope * o.t);
            r * r
        })
        .sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    let p_value = if se == 0.0 {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let dist = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom");
        (2.0 * dist.cdf(-(slope / se).abs())).clamp(0.0, 1.0)
    };
    Ok(TrendResult {
        method: TrendMethod::Ols,
        slope,
        intercept: Some(intercept),
        s_statistic: None,
        tau: None,
        rmse: Some((rss / nf).sqrt()),
        p_value,
        significance: alpha,
        direction: direction(p_value, alpha, slope),
        n_obs: n,
    })
}

pub(crate) fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}
