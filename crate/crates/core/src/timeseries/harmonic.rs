use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::lstsq::weighted_lstsq;
use super::{ObservationSeries, TimeseriesError};

pub const DEFAULT_PERIOD_DAYS: f64 = 365.0;

/// Single-harmonic seasonal model
/// `value(t) = mu + beta·t + alpha1·cos(2πt/N) + alpha2·sin(2πt/N)`
/// where the trend term is present only when fitted with one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub mu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Linear trend per day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub period_days: f64,
    pub n_obs: usize,
    pub rmse: f64,
    pub rank_ok: bool,
    /// 1-norm condition estimate of the column-equilibrated design.
    pub condition: f64,
    /// Absent when there are no residual degrees of freedom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<HarmonicStderr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicStderr {
    pub mu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl HarmonicFit {
    pub fn n_coefficients(&self) -> usize {
        if self.beta.is_some() {
            4
        } else {
            3
        }
    }

    /// Seasonal amplitude √(α₁² + α₂²).
    pub fn amplitude(&self) -> f64 {
        self.alpha1.hypot(self.alpha2)
    }

    /// Phase φ in radians with `α₁cos θ + α₂sin θ = A·cos(θ − φ)`.
    pub fn phase(&self) -> f64 {
        self.alpha2.atan2(self.alpha1)
    }

    /// Seasonal part only, `α₁cos(2πt/N) + α₂sin(2πt/N)`.
    pub fn seasonal(&self, t: f64) -> f64 {
        let w = TAU * t / self.period_days;
        self.alpha1 * w.cos() + self.alpha2 * w.sin()
    }
}

/// Evaluates the fitted model at day `t`.
pub fn predict(fit: &HarmonicFit, t: f64) -> f64 {
    fit.mu + fit.beta.unwrap_or(0.0) * t + fit.seasonal(t)
}

/// Ordinary (optionally weighted) least-squares fit of the harmonic model.
///
/// Needs at least 3 observations, or 4 with the trend term. A design whose
/// condition estimate exceeds [`super::MAX_CONDITION`] (for example all
/// observations at one time, or a span too short to separate the cosine and
/// sine terms) is reported as [`TimeseriesError::RankDeficient`].
pub fn fit_harmonic(
    series: &ObservationSeries,
    include_trend: bool,
    period_days: f64,
) -> Result<HarmonicFit, TimeseriesError> {
    if !(period_days > 0.0 && period_days.is_finite()) {
        return Err(TimeseriesError::InvalidParameter(format!(
            "period {period_days} must be positive"
        )));
    }
    let p = if include_trend { 4 } else { 3 };
    let n = series.len();
    if n < p {
        return Err(TimeseriesError::InsufficientData { needed: p, got: n });
    }
    let obs = series.observations();
    let mut columns = vec![
        vec![1.0; n],
        obs.iter()
            .map(|o| (TAU * o.t / period_days).cos())
            .collect(),
        obs.iter()
            .map(|o| (TAU * o.t / period_days).sin())
            .collect(),
    ];
    if include_trend {
        columns.push(obs.iter().map(|o| o.t).collect());
    }
    let y: Vec<f64> = obs.iter().map(|o| o.value).collect();
    let w: Vec<f64> = obs.iter().map(|o| o.weight).collect();

    let sol = weighted_lstsq(&columns, &y, &w)
        .map_err(|condition| TimeseriesError::RankDeficient { condition })?;

    let mut fit = HarmonicFit {
        mu: sol.coef[0],
        alpha1: sol.coef[1],
        alpha2: sol.coef[2],
        beta: include_trend.then(|| sol.coef[3]),
        period_days,
        n_obs: n,
        rmse: 0.0,
        rank_ok: true,
        condition: sol.condition,
        stderr: None,
    };
    let (mut rss, mut wsum) = (0.0, 0.0);
    for o in obs {
        let r = o.value - predict(&fit, o.t);
        rss += o.weight * r * r;
        wsum += o.weight;
    }
    fit.rmse = (rss / wsum).sqrt();
    if n > p {
        let sigma2 = rss / (n - p) as f64;
        let se = |j: usize| (sigma2 * sol.inv_normal[j][j]).max(0.0).sqrt();
        fit.stderr = Some(HarmonicStderr {
            mu: se(0),
            alpha1: se(1),
            alpha2: se(2),
            beta: include_trend.then(|| se(3)),
        });
    }
    Ok(fit)
}

/// Subtracts the fitted seasonal cycle, leaving mean, trend and residual.
pub fn deseasonalize(
    series: &ObservationSeries,
    fit: &HarmonicFit,
) -> Result<ObservationSeries, TimeseriesError> {
    series.with_values(
        series
            .observations()
            .iter()
            .map(|o| o.value - fit.seasonal(o.t)),
    )
}
