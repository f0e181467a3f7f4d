//! Irregular observation series and the numerics run on them: harmonic
//! seasonal fits, monotone-trend tests, annual aggregation, change ratios and
//! dip detection.

mod annual;
mod harmonic;
mod lstsq;
mod trend;

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use annual::{annual_aggregate, annual_values, change_ratio, detect_dips, AnnualStatistic};
pub use harmonic::{
    deseasonalize, fit_harmonic, predict, HarmonicFit, HarmonicStderr, DEFAULT_PERIOD_DAYS,
};
pub use lstsq::MAX_CONDITION;
pub use trend::{
    mann_kendall, ols_slope, TrendDirection, TrendMethod, TrendResult, DEFAULT_SIGNIFICANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeseriesError {
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("all observation times are equal")]
    DegenerateAbscissa,

    #[error("year {0} not present in the annual series")]
    MissingYear(i32),

    #[error("baseline value {value} for year {year} is not positive")]
    NonpositiveBaseline { year: i32, value: f64 },

    #[error("series has more than one observation in year {0}; aggregate it first")]
    NotAnnual(i32),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series CSV: {0}")]
    Csv(String),
}

/// The physical quantity a series measures.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Variable {
    Ndvi,
    NtlRadiance,
    Uvai,
    Other(String),
}

impl Variable {
    pub fn label(&self) -> &str {
        match self {
            Variable::Ndvi => "NDVI",
            Variable::NtlRadiance => "Nighttime light radiance",
            Variable::Uvai => "UV aerosol index",
            Variable::Other(l) => l,
        }
    }

    pub fn units(&self) -> &'static str {
        match self {
            Variable::NtlRadiance => "nW·cm⁻²·sr⁻¹",
            _ => "dimensionless",
        }
    }

    /// Short key used in file names: `ndvi`, `ntl`, `uvai` or the label.
    pub fn key(&self) -> &str {
        match self {
            Variable::Ndvi => "ndvi",
            Variable::NtlRadiance => "ntl",
            Variable::Uvai => "uvai",
            Variable::Other(l) => l,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Ndvi => f.write_str("ndvi"),
            Variable::NtlRadiance => f.write_str("ntl_radiance"),
            Variable::Uvai => f.write_str("uvai"),
            Variable::Other(l) => write!(f, "other:{l}"),
        }
    }
}

impl FromStr for Variable {
    type Err = TimeseriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ndvi" => Variable::Ndvi,
            "ntl" | "ntl_radiance" => Variable::NtlRadiance,
            "uvai" => Variable::Uvai,
            other => match other.strip_prefix("other:") {
                Some(l) => Variable::Other(l.to_string()),
                None if !other.is_empty() => Variable::Other(other.to_string()),
                None => {
                    return Err(TimeseriesError::InvalidParameter(
                        "empty variable name".into(),
                    ))
                }
            },
        })
    }
}

impl Serialize for Variable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Days since the series epoch.
    pub t: f64,
    pub value: f64,
    pub weight: f64,
}

impl Observation {
    pub fn new(t: f64, value: f64) -> Self {
        Observation {
            t,
            value,
            weight: 1.0,
        }
    }
}

/// Observations of one variable over one AOI, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSeries {
    variable: Variable,
    epoch: NaiveDate,
    obs: Vec<Observation>,
}

impl ObservationSeries {
    /// Validates and stably sorts the observations by `t`.
    pub fn new(
        variable: Variable,
        epoch: NaiveDate,
        mut obs: Vec<Observation>,
    ) -> Result<Self, TimeseriesError> {
        for (i, o) in obs.iter().enumerate() {
            if !o.t.is_finite() || !o.value.is_finite() {
                return Err(TimeseriesError::InvalidObservation(format!(
                    "observation {i} has non-finite time or value ({}, {})",
                    o.t, o.value
                )));
            }
            if !(o.weight > 0.0 && o.weight.is_finite()) {
                return Err(TimeseriesError::InvalidObservation(format!(
                    "observation {i} has non-positive weight {}",
                    o.weight
                )));
            }
        }
        obs.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(ObservationSeries {
            variable,
            epoch,
            obs,
        })
    }

    pub fn from_pairs(
        variable: Variable,
        epoch: NaiveDate,
        pairs: &[(f64, f64)],
    ) -> Result<Self, TimeseriesError> {
        Self::new(
            variable,
            epoch,
            pairs.iter().map(|&(t, v)| Observation::new(t, v)).collect(),
        )
    }

    pub fn empty(variable: Variable, epoch: NaiveDate) -> Self {
        ObservationSeries {
            variable,
            epoch,
            obs: Vec::new(),
        }
    }

    pub fn variable(&self) -> &Variable {
        &self.variable
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.obs.iter().map(|o| o.t)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.obs.iter().map(|o| o.value)
    }

    /// Calendar date containing day offset `t`.
    pub fn date_of(&self, t: f64) -> NaiveDate {
        self.epoch + Duration::days(t.floor() as i64)
    }

    pub fn year_of(&self, t: f64) -> i32 {
        self.date_of(t).year()
    }

    /// Day offset of a calendar date relative to the epoch.
    pub fn days_since_epoch(&self, date: NaiveDate) -> f64 {
        (date - self.epoch).num_days() as f64
    }

    /// Same variable and epoch, new values. Times and weights are kept.
    pub fn with_values(
        &self,
        values: impl IntoIterator<Item = f64>,
    ) -> Result<Self, TimeseriesError> {
        let obs = self
            .obs
            .iter()
            .zip(values)
            .map(|(o, value)| Observation { value, ..*o })
            .collect();
        Self::new(self.variable.clone(), self.epoch, obs)
    }
}

impl<'de> Deserialize<'de> for ObservationSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            variable: Variable,
            epoch: NaiveDate,
            obs: Vec<Observation>,
        }
        let raw = Raw::deserialize(d)?;
        ObservationSeries::new(raw.variable, raw.epoch, raw.obs).map_err(serde::de::Error::custom)
    }
}

/// Reads `t_days,value[,weight]` CSV. An empty weight means 1.
pub fn read_series_csv(
    text: &str,
    variable: Variable,
    epoch: NaiveDate,
) -> Result<ObservationSeries, TimeseriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| TimeseriesError::Csv(e.to_string()))?
        .clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let (tc, vc) = match (col("t_days"), col("value")) {
        (Some(t), Some(v)) => (t, v),
        _ => {
            return Err(TimeseriesError::Csv(
                "header must contain t_days and value".into(),
            ))
        }
    };
    let wc = col("weight");
    let mut obs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| TimeseriesError::Csv(e.to_string()))?;
        let num = |c: usize, name: &str| -> Result<f64, TimeseriesError> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse().map_err(|_| {
                TimeseriesError::Csv(format!("row {}: {name} {raw:?} is not a number", i + 1))
            })
        };
        let weight = match wc.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(_) => num(wc.unwrap(), "weight")?,
            None => 1.0,
        };
        obs.push(Observation {
            t: num(tc, "t_days")?,
            value: num(vc, "value")?,
            weight,
        });
    }
    ObservationSeries::new(variable, epoch, obs)
}

pub fn write_series_csv(series: &ObservationSeries) -> String {
    let mut out = String::from("t_days,value,weight\n");
    for o in series.observations() {
        out.push_str(&format!("{},{},{}\n", o.t, o.value, o.weight));
    }
    out
}
