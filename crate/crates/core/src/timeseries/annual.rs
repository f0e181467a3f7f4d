use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::trend::median;
use super::{Observation, ObservationSeries, TimeseriesError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnualStatistic {
    Mean,
    Median,
}

fn days_in_year(year: i32) -> f64 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366.0
    } else {
        365.0
    }
}

/// One observation per calendar year that has data, placed at mid-year.
pub fn annual_aggregate(
    series: &ObservationSeries,
    statistic: AnnualStatistic,
) -> ObservationSeries {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for o in series.observations() {
        by_year
            .entry(series.year_of(o.t))
            .or_default()
            .push(o.value);
    }
    let obs = by_year
        .into_iter()
        .map(|(year, mut vals)| {
            let value = match statistic {
                AnnualStatistic::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                AnnualStatistic::Median => median(&mut vals).expect("non-empty group"),
            };
            let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
            Observation::new(
                series.days_since_epoch(jan1) + days_in_year(year) / 2.0,
                value,
            )
        })
        .collect();
    ObservationSeries::new(series.variable().clone(), series.epoch(), obs)
        .expect("aggregates of valid observations")
}

/// (year, value) pairs of an annual series; errors if a year repeats.
pub fn annual_values(annual: &ObservationSeries) -> Result<Vec<(i32, f64)>, TimeseriesError> {
    let mut out: Vec<(i32, f64)> = Vec::with_capacity(annual.len());
    for o in annual.observations() {
        let y = annual.year_of(o.t);
        if out.last().is_some_and(|&(prev, _)| prev == y) {
            return Err(TimeseriesError::NotAnnual(y));
        }
        out.push((y, o.value));
    }
    Ok(out)
}

/// value(target) / value(baseline).
pub fn change_ratio(
    annual: &ObservationSeries,
    baseline_year: i32,
    target_year: i32,
) -> Result<f64, TimeseriesError> {
    let values = annual_values(annual)?;
    let lookup = |y: i32| {
        values
            .iter()
            .find(|(year, _)| *year == y)
            .map(|&(_, v)| v)
            .ok_or(TimeseriesError::MissingYear(y))
    };
    let base = lookup(baseline_year)?;
    let target = lookup(target_year)?;
    if base <= 0.0 {
        return Err(TimeseriesError::NonpositiveBaseline {
            year: baseline_year,
            value: base,
        });
    }
    Ok(target / base)
}

/// Years whose value is strictly below both neighbouring available years.
pub fn detect_dips(annual: &ObservationSeries) -> Result<Vec<i32>, TimeseriesError> {
    let values = annual_values(annual)?;
    if values.len() < 3 {
        return Err(TimeseriesError::InsufficientData {
            needed: 3,
            got: values.len(),
        });
    }
    Ok(values
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
        .map(|w| w[1].0)
        .collect())
}
