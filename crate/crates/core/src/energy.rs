//! Grid carbon intensity by zone and year, datacenter PUE, fleet averages
//! and PUE-adjusted emissions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::site_registry::Site;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("{} invalid zone record(s): {}", .0.len(), .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<RecordIssue>),

    #[error("zone CSV: {0}")]
    Csv(String),

    #[error("zone {zone_id} has more than one record for {year}")]
    DuplicateRecord { zone_id: String, year: i32 },

    #[error("no site matched a zone record for {year}")]
    NoMatches { year: i32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordIssue {
    /// 1-based data row.
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

/// Yearly grid statistics for one electricity zone. Intensity is gCO₂/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneIntensityRecord {
    pub zone_id: String,
    pub year: i32,
    pub carbon_intensity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_carbon_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewable_fraction: Option<f64>,
}

impl ZoneIntensityRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.zone_id.trim().is_empty() {
            return Err("zone_id is empty".into());
        }
        if !(self.carbon_intensity >= 0.0 && self.carbon_intensity.is_finite()) {
            return Err(format!(
                "carbon intensity {} must be a nonnegative number",
                self.carbon_intensity
            ));
        }
        for (name, f) in [
            ("low_carbon_fraction", self.low_carbon_fraction),
            ("renewable_fraction", self.renewable_fraction),
        ] {
            if let Some(f) = f {
                if !(0.0..=1.0).contains(&f) {
                    return Err(format!("{name} {f} outside [0, 1]"));
                }
            }
        }
        if let (Some(low), Some(ren)) = (self.low_carbon_fraction, self.renewable_fraction) {
            if ren > low {
                return Err(format!(
                    "renewable_fraction {ren} exceeds low_carbon_fraction {low}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum PueScope {
    Global,
    Region(String),
    Site(String),
}

/// Power usage effectiveness reported by an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PueRecord {
    pub operator: String,
    pub scope: PueScope,
    pub year: i32,
    pub pue: f64,
}

impl PueRecord {
    pub fn new(
        operator: impl Into<String>,
        scope: PueScope,
        year: i32,
        pue: f64,
    ) -> Result<Self, EnergyError> {
        if !(pue >= 1.0 && pue.is_finite()) {
            return Err(EnergyError::InvalidInput(format!("PUE {pue} is below 1")));
        }
        Ok(PueRecord {
            operator: operator.into(),
            scope,
            year,
            pue,
        })
    }
}

/// Most specific PUE for a site: a site-level figure beats a regional one,
/// which beats the operator's global figure. Within a scope the requested
/// year wins, else the latest earlier year.
pub fn resolve_pue<'a>(
    records: &'a [PueRecord],
    operator: &str,
    site_id: &str,
    region: Option<&str>,
    year: i32,
) -> Option<&'a PueRecord> {
    let rank = |scope: &PueScope| match scope {
        PueScope::Site(s) if s == site_id => Some(0),
        PueScope::Region(r) if Some(r.as_str()) == region => Some(1),
        PueScope::Global => Some(2),
        _ => None,
    };
    records
        .iter()
        .filter(|r| r.operator == operator && r.year <= year)
        .filter_map(|r| rank(&r.scope).map(|k| (k, std::cmp::Reverse(r.year), r)))
        .min_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
        .map(|(_, _, r)| r)
}

#[derive(Debug, Deserialize)]
struct ZoneRow {
    zone_id: String,
    year: String,
    carbon_intensity_gco2_kwh: String,
    #[serde(default)]
    low_carbon_fraction: Option<String>,
    #[serde(default)]
    renewable_fraction: Option<String>,
}

/// Parses the zone table. Columns: `zone_id, year,
/// carbon_intensity_gco2_kwh, low_carbon_fraction, renewable_fraction`;
/// the two fraction cells may be empty. Every row is checked and all
/// problems are returned together.
pub fn load_zone_intensities(text: &str) -> Result<Vec<ZoneIntensityRecord>, EnergyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| EnergyError::Csv(e.to_string()))?;
    for required in ["zone_id", "year", "carbon_intensity_gco2_kwh"] {
        if !headers.iter().any(|h| h == required) {
            return Err(EnergyError::Csv(format!("missing column {required}")));
        }
    }
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut seen: BTreeMap<(String, i32), usize> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ZoneRow>().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                issues.push(RecordIssue {
                    row: row_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let parsed = (|| -> Result<ZoneIntensityRecord, String> {
            let fraction = |cell: &Option<String>, name: &str| -> Result<Option<f64>, String> {
                match cell.as_deref().filter(|s| !s.is_empty()) {
                    None => Ok(None),
                    Some(s) => s
                        .parse()
                        .map(Some)
                        .map_err(|_| format!("{name} {s:?} is not a number")),
                }
            };
            let rec = ZoneIntensityRecord {
                year: row
                    .year
                    .parse()
                    .map_err(|_| format!("year {:?} is not an integer", row.year))?,
                carbon_intensity: row.carbon_intensity_gco2_kwh.parse().map_err(|_| {
                    format!(
                        "carbon intensity {:?} is not a number",
                        row.carbon_intensity_gco2_kwh
                    )
                })?,
                low_carbon_fraction: fraction(&row.low_carbon_fraction, "low_carbon_fraction")?,
                renewable_fraction: fraction(&row.renewable_fraction, "renewable_fraction")?,
                zone_id: row.zone_id,
            };
            rec.validate()?;
            Ok(rec)
        })();
        match parsed {
            Ok(rec) => {
                if let Some(first) = seen.insert((rec.zone_id.clone(), rec.year), row_no) {
                    issues.push(RecordIssue {
                        row: row_no,
                        message: format!(
                            "duplicate of row {first} for {} {}",
                            rec.zone_id, rec.year
                        ),
                    });
                } else {
                    records.push(rec);
                }
            }
            Err(message) => issues.push(RecordIssue {
                row: row_no,
                message,
            }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(EnergyError::Validation(issues))
    }
}

/// Record for `zone_id` in `year`, or the latest earlier year when that
/// year is missing.
pub fn zone_intensity<'a>(
    records: &'a [ZoneIntensityRecord],
    zone_id: &str,
    year: i32,
) -> Result<Option<&'a ZoneIntensityRecord>, EnergyError> {
    let mut best: Option<&ZoneIntensityRecord> = None;
    for r in records
        .iter()
        .filter(|r| r.zone_id == zone_id && r.year <= year)
    {
        match best {
            Some(b) if b.year == r.year => {
                return Err(EnergyError::DuplicateRecord {
                    zone_id: zone_id.to_string(),
                    year: r.year,
                })
            }
            Some(b) if b.year > r.year => {}
            _ => best = Some(r),
        }
    }
    Ok(best)
}

/// Latest record for a zone regardless of year.
pub fn latest_zone_record<'a>(
    records: &'a [ZoneIntensityRecord],
    zone_id: &str,
) -> Option<&'a ZoneIntensityRecord> {
    records
        .iter()
        .filter(|r| r.zone_id == zone_id)
        .max_by_key(|r| r.year)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetIntensity {
    pub year: i32,
    /// Unweighted mean over matched sites, gCO₂/kWh.
    pub mean_gco2_per_kwh: f64,
    pub n_matched: usize,
    pub min_gco2_per_kwh: f64,
    pub max_gco2_per_kwh: f64,
    /// Sites with no zone or no record at or before `year`, sorted.
    pub unmatched_site_ids: Vec<String>,
    /// Matched sites whose zone lacked `year` and used an earlier one, sorted.
    pub fallback_site_ids: Vec<String>,
}

/// Plain mean of the zone intensities of the sites' zones in `year`.
///
/// Intensities are summed in ascending order, so the result does not
/// depend on the order of `sites` or `records`.
pub fn fleet_average_intensity(
    sites: &[Site],
    records: &[ZoneIntensityRecord],
    year: i32,
) -> Result<FleetIntensity, EnergyError> {
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    let mut fallback = Vec::new();
    for site in sites {
        let rec = match &site.zone_id {
            Some(z) => zone_intensity(records, z, year)?,
            None => None,
        };
        match rec {
            Some(r) => {
                matched.push(r.carbon_intensity);
                if r.year != year {
                    fallback.push(site.id.clone());
                }
            }
            None => unmatched.push(site.id.clone()),
        }
    }
    if matched.is_empty() {
        return Err(EnergyError::NoMatches { year });
    }
    matched.sort_by(f64::total_cmp);
    unmatched.sort();
    fallback.sort();
    let mean = matched.iter().sum::<f64>() / matched.len() as f64;
    Ok(FleetIntensity {
        year,
        // the mean of sorted values can round a hair outside [min, max]
        mean_gco2_per_kwh: mean.clamp(matched[0], matched[matched.len() - 1]),
        n_matched: matched.len(),
        min_gco2_per_kwh: matched[0],
        max_gco2_per_kwh: matched[matched.len() - 1],
        unmatched_site_ids: unmatched,
        fallback_site_ids: fallback,
    })
}

/// Emissions in gCO₂ for IT energy scaled to facility energy by PUE.
pub fn attributed_emission(
    it_energy_kwh: f64,
    intensity_gco2_kwh: f64,
    pue: f64,
) -> Result<f64, EnergyError> {
    if !(it_energy_kwh >= 0.0 && it_energy_kwh.is_finite()) {
        return Err(EnergyError::InvalidInput(format!(
            "IT energy {it_energy_kwh} kWh must be nonnegative"
        )));
    }
    if !(intensity_gco2_kwh >= 0.0 && intensity_gco2_kwh.is_finite()) {
        return Err(EnergyError::InvalidInput(format!(
            "intensity {intensity_gco2_kwh} must be nonnegative"
        )));
    }
    if !(pue >= 1.0 && pue.is_finite()) {
        return Err(EnergyError::InvalidInput(format!("PUE {pue} is below 1")));
    }
    Ok(it_energy_kwh * pue * intensity_gco2_kwh)
}
