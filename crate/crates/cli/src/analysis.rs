//! Per-variable analyses that turn extracted series into report sections.

use sitewatch_core::energy::{
    fleet_average_intensity, latest_zone_record, zone_intensity, ZoneIntensityRecord,
};
use sitewatch_core::report::{EnergySection, NdviSection, NtlSection, UvaiSection};
use sitewatch_core::site_registry::Site;
use sitewatch_core::timeseries::{
    annual_aggregate, annual_values, change_ratio, deseasonalize, detect_dips, fit_harmonic,
    mann_kendall, ols_slope, AnnualStatistic, ObservationSeries, TimeseriesError,
    DEFAULT_PERIOD_DAYS,
};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub include_trend: bool,
    pub significance: f64,
    pub surge_threshold: f64,
    pub period_days: f64,
    pub ntl_baseline_year: Option<i32>,
    pub ntl_target_year: Option<i32>,
}

impl AnalysisSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        AnalysisSettings {
            include_trend: cfg.include_trend,
            significance: cfg.significance,
            surge_threshold: cfg.surge_threshold,
            period_days: DEFAULT_PERIOD_DAYS,
            ntl_baseline_year: cfg.ntl_baseline_year,
            ntl_target_year: cfg.ntl_target_year,
        }
    }
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings::from_config(&RunConfig::default())
    }
}

/// Harmonic fit of the vegetation series, and a Mann-Kendall test on the
/// series with the fitted seasonal cycle removed. Testing the raw series
/// would let the annual swing swamp a slow decline.
pub fn analyze_ndvi(
    series: &ObservationSeries,
    s: &AnalysisSettings,
) -> Result<NdviSection, TimeseriesError> {
    let fit = fit_harmonic(series, s.include_trend, s.period_days)?;
    let trend = mann_kendall(&deseasonalize(series, &fit)?, s.significance)?;
    Ok(NdviSection { fit, trend })
}

/// Annual means, the change ratio between baseline and target years (first
/// and last by default), dip years and an OLS trend over the annual values.
pub fn analyze_ntl(
    series: &ObservationSeries,
    s: &AnalysisSettings,
) -> Result<NtlSection, TimeseriesError> {
    let annual = annual_aggregate(series, AnnualStatistic::Mean);
    let values = annual_values(&annual)?;
    let (Some(first), Some(last)) = (values.first(), values.last()) else {
        return Err(TimeseriesError::InsufficientData { needed: 1, got: 0 });
    };
    let baseline_year = s.ntl_baseline_year.unwrap_or(first.0);
    let target_year = s.ntl_target_year.unwrap_or(last.0);
    let ratio = change_ratio(&annual, baseline_year, target_year)?;
    let dips = if values.len() >= 3 {
        detect_dips(&annual)?
    } else {
        Vec::new()
    };
    let trend = ols_slope(&annual, s.significance)?;
    Ok(NtlSection {
        annual: values.into_iter().collect(),
        baseline_year,
        target_year,
        ratio,
        surge_threshold: s.surge_threshold,
        dips,
        trend,
    })
}

pub fn analyze_uvai(
    series: &ObservationSeries,
    s: &AnalysisSettings,
) -> Result<UvaiSection, TimeseriesError> {
    Ok(UvaiSection {
        trend: mann_kendall(series, s.significance)?,
    })
}

/// Zone figures for the site plus the fleet average over all sites for the
/// same year. `None` when the site has no zone or the zone has no record.
pub fn energy_section(
    site: &Site,
    all_sites: &[Site],
    records: &[ZoneIntensityRecord],
    year: Option<i32>,
) -> Option<EnergySection> {
    let zone = site.zone_id.as_deref()?;
    let rec = match year {
        Some(y) => match zone_intensity(records, zone, y) {
            Ok(r) => r?,
            Err(e) => {
                log::warn!("{}: {e}", site.id);
                return None;
            }
        },
        None => latest_zone_record(records, zone)?,
    };
    let fleet = fleet_average_intensity(all_sites, records, rec.year).ok();
    Some(EnergySection {
        zone_id: zone.to_string(),
        year: rec.year,
        carbon_intensity_gco2_kwh: rec.carbon_intensity,
        low_carbon_fraction: rec.low_carbon_fraction,
        renewable_fraction: rec.renewable_fraction,
        fleet,
    })
}
