use std::f64::consts::TAU;

use chrono::{Datelike, Duration, NaiveDate};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sitewatch_core::timeseries::*;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 1, 1).unwrap()
}

fn series(pairs: &[(f64, f64)]) -> ObservationSeries {
    ObservationSeries::from_pairs(Variable::Ndvi, epoch(), pairs).unwrap()
}

fn design_row(t: f64, trend: bool, period: f64) -> Vec<f64> {
    let w = TAU * t / period;
    let mut row = vec![1.0, w.cos(), w.sin()];
    if trend {
        row.push(t);
    }
    row
}

/// Solves (XᵀWX)β = XᵀWy by Gaussian elimination with partial pivoting.
fn normal_equations(obs: &[Observation], trend: bool, period: f64) -> Vec<f64> {
    let p = if trend { 4 } else { 3 };
    let mut a = vec![vec![0.0; p + 1]; p];
    for o in obs {
        let x = design_row(o.t, trend, period);
        for i in 0..p {
            for j in 0..p {
                a[i][j] += o.weight * x[i] * x[j];
            }
            a[i][p] += o.weight * x[i] * o.value;
        }
    }
    for k in 0..p {
        let piv = (k..p)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, piv);
        for i in k + 1..p {
            let f = a[i][k] / a[k][k];
            for j in k..=p {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][p] - s) / a[i][i];
    }
    beta
}

fn weighted_rss(obs: &[Observation], coef: &[f64], trend: bool, period: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let pred: f64 = design_row(o.t, trend, period)
                .iter()
                .zip(coef)
                .map(|(x, b)| x * b)
                .sum();
            o.weight * (o.value - pred).powi(2)
        })
        .sum()
}

fn coefficients(fit: &HarmonicFit) -> Vec<f64> {
    let mut c = vec![fit.mu, fit.alpha1, fit.alpha2];
    c.extend(fit.beta);
    c
}

fn brute_force_s(v: &[f64]) -> i64 {
    let mut s = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            s += (v[j] > v[i]) as i64 - (v[j] < v[i]) as i64;
        }
    }
    s
}

fn random_series(rng: &mut ChaCha8Rng, n: usize, weighted: bool) -> ObservationSeries {
    let obs = (0..n)
        .map(|_| Observation {
            t: rng.gen_range(0.0..3650.0),
            value: rng.gen_range(-1.0..1.0),
            weight: if weighted {
                rng.gen_range(0.2..3.0)
            } else {
                1.0
            },
        })
        .collect();
    ObservationSeries::new(Variable::Ndvi, epoch(), obs).unwrap()
}

#[test]
fn recovers_noiseless_seasonal_signal() {
    let pairs: Vec<_> = (0..730)
        .map(|d| {
            let t = d as f64;
            (
                t,
                0.5 + 0.2 * (TAU * t / 365.0).cos() - 0.1 * (TAU * t / 365.0).sin(),
            )
        })
        .collect();
    let fit = fit_harmonic(&series(&pairs), false, DEFAULT_PERIOD_DAYS).unwrap();
    assert!((fit.mu - 0.5).abs() <= 1e-8);
    assert!((fit.alpha1 - 0.2).abs() <= 1e-8);
    assert!((fit.alpha2 + 0.1).abs() <= 1e-8);
    assert!(fit.beta.is_none());
    assert!(fit.rank_ok);
    assert_eq!(fit.n_obs, 730);

    let oracle = normal_equations(series(&pairs).observations(), false, 365.0);
    for (a, b) in coefficients(&fit).iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn recovers_decade_trend() {
    let pairs: Vec<_> = (0..3650)
        .map(|d| {
            let t = d as f64;
            (t, 0.6 - 2.74e-5 * t + 0.15 * (TAU * t / 365.0).sin())
        })
        .collect();
    let fit = fit_harmonic(&series(&pairs), true, 365.0).unwrap();
    assert!((fit.beta.unwrap() + 2.74e-5).abs() <= 1e-8);
    assert!((fit.mu - 0.6).abs() <= 1e-8);
    assert!((fit.alpha2 - 0.15).abs() <= 1e-8);
    let se = fit.stderr.unwrap();
    assert!(se.beta.unwrap() < 1e-12);
}

#[test]
fn residual_sum_of_squares_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let n = rng.gen_range(10..=200);
        let trend = case % 2 == 0;
        let s = random_series(&mut rng, n, case % 3 == 0);
        let fit = fit_harmonic(&s, trend, 365.0).unwrap();
        let ours = weighted_rss(s.observations(), &coefficients(&fit), trend, 365.0);
        let theirs = weighted_rss(
            s.observations(),
            &normal_equations(s.observations(), trend, 365.0),
            trend,
            365.0,
        );
        assert!(
            (ours - theirs).abs() <= 1e-9 * theirs,
            "case {case}: {ours} vs {theirs}"
        );
        let wsum: f64 = s.observations().iter().map(|o| o.weight).sum();
        assert!((fit.rmse - (ours / wsum).sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn residuals_orthogonal_to_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let trend = case % 2 == 1;
        let n = rng.gen_range(5..120);
        let s = random_series(&mut rng, n, case % 4 == 0);
        let fit = fit_harmonic(&s, trend, 365.0).unwrap();
        let obs = s.observations();
        let r: Vec<f64> = obs
            .iter()
            .map(|o| o.weight.sqrt() * (o.value - predict(&fit, o.t)))
            .collect();
        let y_norm = obs
            .iter()
            .map(|o| o.weight * o.value * o.value)
            .sum::<f64>()
            .sqrt();
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..fit.n_coefficients() {
            let c: Vec<f64> = obs
                .iter()
                .map(|o| o.weight.sqrt() * design_row(o.t, trend, 365.0)[j])
                .collect();
            let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
            let eps = 1e-6 * c_norm * y_norm;
            assert!(
                dot.abs() / (c_norm * r_norm + eps) <= 1e-8,
                "case {case} column {j}"
            );
        }
    }
}

#[test]
fn exact_interpolation_at_full_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trend in [false, true] {
        for _ in 0..20 {
            let n = if trend { 4 } else { 3 };
            let s = random_series(&mut rng, n, false);
            match fit_harmonic(&s, trend, 365.0) {
                Ok(fit) => assert!(fit.rmse <= 1e-10, "{}", fit.rmse),
                Err(TimeseriesError::RankDeficient { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn shift_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trend in [false, true] {
        let s = random_series(&mut rng, 60, false);
        let c = 3.25;
        let shifted = s
            .with_values(s.values().map(|v| v + c).collect::<Vec<_>>())
            .unwrap();
        let (a, b) = (
            fit_harmonic(&s, trend, 365.0).unwrap(),
            fit_harmonic(&shifted, trend, 365.0).unwrap(),
        );
        assert!((b.mu - a.mu - c).abs() <= 1e-10);
        assert!((b.alpha1 - a.alpha1).abs() <= 1e-10);
        assert!((b.alpha2 - a.alpha2).abs() <= 1e-10);
        if trend {
            assert!((b.beta.unwrap() - a.beta.unwrap()).abs() <= 1e-10);
        }
    }
}

#[test]
fn time_origin_coherence() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_series(&mut rng, 80, false);
    let moved: Vec<_> = s
        .observations()
        .iter()
        .map(|o| (o.t + 365.0, o.value))
        .collect();
    let moved = series(&moved);

    let (a, b) = (
        fit_harmonic(&s, false, 365.0).unwrap(),
        fit_harmonic(&moved, false, 365.0).unwrap(),
    );
    for (x, y) in coefficients(&a).iter().zip(&coefficients(&b)) {
        assert!((x - y).abs() <= 1e-8);
    }

    // With a trend the intercept absorbs the shift: mu' = mu - beta * N.
    let (a, b) = (
        fit_harmonic(&s, true, 365.0).unwrap(),
        fit_harmonic(&moved, true, 365.0).unwrap(),
    );
    let beta = a.beta.unwrap();
    assert!((b.beta.unwrap() - beta).abs() <= 1e-8);
    assert!((b.alpha1 - a.alpha1).abs() <= 1e-8);
    assert!((b.alpha2 - a.alpha2).abs() <= 1e-8);
    assert!((b.mu - (a.mu - beta * 365.0)).abs() <= 1e-8);
}

#[test]
fn mann_kendall_matches_pairwise_oracle_exhaustively() {
    for n in 2..=7usize {
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let vals: Vec<f64> = (0..n)
                .map(|_| {
                    let v = (c % 3 + 1) as f64;
                    c /= 3;
                    v
                })
                .collect();
            let pairs: Vec<_> = vals
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64, v))
                .collect();
            let r = mann_kendall(&series(&pairs), 0.05).unwrap();
            let s = brute_force_s(&vals);
            assert_eq!(r.s_statistic, Some(s), "{vals:?}");
            assert_eq!(r.tau, Some(s as f64 / (n * (n - 1) / 2) as f64));
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
    for n in 2..=7 {
        let up: Vec<_> = (0..n).map(|i| (i as f64, i as f64)).collect();
        let down: Vec<_> = (0..n).map(|i| (i as f64, -(i as f64))).collect();
        assert_eq!(mann_kendall(&series(&up), 0.05).unwrap().tau, Some(1.0));
        assert_eq!(mann_kendall(&series(&down), 0.05).unwrap().tau, Some(-1.0));
    }
}

#[test]
fn mann_kendall_rejection_rate_under_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 4000;
    let mut rejected = 0;
    let mut vals: Vec<f64> = (1..=40).map(f64::from).collect();
    for _ in 0..trials {
        vals.shuffle(&mut rng);
        let pairs: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64, v))
            .collect();
        let r = mann_kendall(&series(&pairs), 0.05).unwrap();
        assert_eq!(r.s_statistic, Some(brute_force_s(&vals)));
        if r.direction != TrendDirection::NoTrend {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / trials as f64;
    assert!((0.02..=0.08).contains(&rate), "rejection rate {rate}");
}

#[test]
fn mann_kendall_antisymmetry_and_sen_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let n = rng.gen_range(4..60);
        let s = random_series(&mut rng, n, false);
        let neg = s
            .with_values(s.values().map(|v| -v).collect::<Vec<_>>())
            .unwrap();
        let (a, b) = (
            mann_kendall(&s, 0.05).unwrap(),
            mann_kendall(&neg, 0.05).unwrap(),
        );
        assert_eq!(b.s_statistic, a.s_statistic.map(|x| -x));
        assert_eq!(b.tau, a.tau.map(|x| -x));
        assert_eq!(b.direction, a.direction.flipped());
        assert_eq!(b.p_value, a.p_value);

        let k = rng.gen_range(0.1..20.0);
        let scaled = s
            .with_values(s.values().map(|v| v * k).collect::<Vec<_>>())
            .unwrap();
        let c = mann_kendall(&scaled, 0.05).unwrap();
        assert!((c.slope - k * a.slope).abs() <= 1e-12 * (k * a.slope).abs().max(1e-300));
    }
}

#[test]
fn ols_matches_closed_form_on_noisy_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let pairs: Vec<_> = (0..10)
        .map(|i| (i as f64, 1.0 + 0.5 * i as f64 + noise.sample(&mut rng)))
        .collect();
    let r = ols_slope(&series(&pairs), 0.05).unwrap();
    let n = pairs.len() as f64;
    let (sx, sy) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let sxy: f64 = pairs.iter().map(|&(x, y)| x * y).sum();
    let sxx: f64 = pairs.iter().map(|&(x, _)| x * x).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    assert!((r.slope - slope).abs() < 1e-12);
    assert!((r.intercept.unwrap() - intercept).abs() < 1e-12);
    assert!((r.slope - 0.5).abs() < 0.1);
    assert_eq!(r.direction, TrendDirection::Increasing);
}

#[test]
fn annual_mean_matches_group_by() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut pairs = Vec::new();
    for year in 2014..2024 {
        let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).unwrap();
        let base = (jan1 - epoch()).num_days() as f64;
        for _ in 0..(if year < 2020 { 4 } else { 3 }) {
            pairs.push((
                base + rng.gen_range(0.0..365.0f64).floor(),
                rng.gen_range(0.0..1.0),
            ));
        }
    }
    let s = series(&pairs);
    assert_eq!(s.len(), 36);
    let annual = annual_aggregate(&s, AnnualStatistic::Mean);
    assert_eq!(annual.len(), 10);

    let mut oracle: std::collections::BTreeMap<i32, (f64, usize)> = Default::default();
    for o in s.observations() {
        let year = (epoch() + Duration::days(o.t as i64)).year();
        let e = oracle.entry(year).or_default();
        e.0 += o.value;
        e.1 += 1;
    }
    for ((year, (sum, count)), (y, v)) in oracle.iter().zip(annual_values(&annual).unwrap()) {
        assert_eq!(*year, y);
        assert!((sum / *count as f64 - v).abs() <= 1e-12);
    }
}

#[test]
fn dips_match_interior_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let vals: Vec<f64> = (0..20).map(|_| rng.gen_range(0..6) as f64).collect();
        let pairs: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mid = NaiveDate::from_ymd_opt(2000 + i as i32, 7, 2).unwrap();
                ((mid - epoch()).num_days() as f64, v)
            })
            .collect();
        let s = series(&pairs);
        let expected: Vec<i32> = (1..19)
            .filter(|&i| vals[i] < vals[i - 1] && vals[i] < vals[i + 1])
            .map(|i| 2000 + i as i32)
            .collect();
        assert_eq!(detect_dips(&s).unwrap(), expected);
    }
}

#[test]
fn series_json_roundtrip_revalidates() {
    let s = series(&[(3.0, 0.1), (1.0, 0.2)]);
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<ObservationSeries>(&text).unwrap(), s);
    let bad = text.replace("\"weight\":1.0", "\"weight\":-1.0");
    assert!(serde_json::from_str::<ObservationSeries>(&bad).is_err());
}

proptest! {
    #[test]
    fn change_ratio_of_a_year_with_itself_is_one(vals in prop::collection::vec(0.01f64..100.0, 1..12), pick in 0usize..12) {
        let pairs: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| ((NaiveDate::from_ymd_opt(2014 + i as i32, 6, 1).unwrap() - epoch()).num_days() as f64, v))
            .collect();
        let s = series(&pairs);
        let year = 2014 + (pick % vals.len()) as i32;
        prop_assert_eq!(change_ratio(&s, year, year).unwrap(), 1.0);
    }

    #[test]
    fn trend_invariants_hold(vals in prop::collection::vec(-5.0f64..5.0, 4..40)) {
        let pairs: Vec<_> = vals.iter().enumerate().map(|(i, &v)| (i as f64 * 30.0, v)).collect();
        for r in [mann_kendall(&series(&pairs), 0.05).unwrap(), ols_slope(&series(&pairs), 0.05).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert_eq!(r.direction == TrendDirection::NoTrend, r.p_value >= 0.05 || r.slope == 0.0 && r.s_statistic.unwrap_or(1) == 0);
            if let Some(tau) = r.tau {
                prop_assert!(tau.abs() <= 1.0);
            }
        }
    }
}
