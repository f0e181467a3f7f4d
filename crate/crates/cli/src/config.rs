use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sitewatch_core::raster_io::QaBitSpec;
use sitewatch_core::report::DEFAULT_SURGE_THRESHOLD;
use sitewatch_core::site_registry::DEFAULT_AOI_RADIUS_M;
use sitewatch_core::timeseries::DEFAULT_SIGNIFICANCE;

use crate::error::{read_text, CliError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterDirs {
    pub ndvi: Option<PathBuf>,
    pub ntl: Option<PathBuf>,
    pub uvai: Option<PathBuf>,
}

/// Everything a pipeline run needs. Loaded from one JSON document; every
/// field has a default and command-line flags may replace any of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sites_path: Option<PathBuf>,
    pub raster_dirs: RasterDirs,
    pub zone_intensity_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub aoi_default_radius_m: f64,
    pub qa_spec: QaBitSpec,
    pub include_trend: bool,
    pub significance: f64,
    pub surge_threshold: f64,
    pub min_clear_fraction: f64,
    /// Day zero for observation times.
    pub epoch: NaiveDate,
    /// Year for zone intensity lookups; the latest available when unset.
    pub energy_year: Option<i32>,
    pub ntl_baseline_year: Option<i32>,
    pub ntl_target_year: Option<i32>,
    /// Stamped into every report. When unset, each report uses the date of
    /// the latest observation in that site's data, so reruns are identical.
    pub generated_at: Option<DateTime<Utc>>,
    /// Sites processed at once; rayon's default when unset.
    pub workers: Option<usize>,
    pub plots: bool,
    /// Only used by `demo`.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sites_path: None,
            raster_dirs: RasterDirs::default(),
            zone_intensity_path: None,
            output_dir: None,
            aoi_default_radius_m: DEFAULT_AOI_RADIUS_M,
            qa_spec: QaBitSpec::default(),
            include_trend: true,
            significance: DEFAULT_SIGNIFICANCE,
            surge_threshold: DEFAULT_SURGE_THRESHOLD,
            min_clear_fraction: 0.0,
            epoch: NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"),
            energy_year: None,
            ntl_baseline_year: None,
            ntl_target_year: None,
            generated_at: None,
            workers: None,
            plots: true,
            seed: 42,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut cfg.sites_path);
        fix(&mut cfg.zone_intensity_path);
        fix(&mut cfg.output_dir);
        fix(&mut cfg.raster_dirs.ndvi);
        fix(&mut cfg.raster_dirs.ntl);
        fix(&mut cfg.raster_dirs.uvai);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.aoi_default_radius_m > 0.0 && self.aoi_default_radius_m.is_finite()) {
            return bad(format!(
                "aoi_default_radius_m {} must be positive",
                self.aoi_default_radius_m
            ));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return bad(format!(
                "significance {} must lie in (0, 1)",
                self.significance
            ));
        }
        if !(self.surge_threshold > 0.0 && self.surge_threshold.is_finite()) {
            return bad(format!(
                "surge_threshold {} must be positive",
                self.surge_threshold
            ));
        }
        if !(0.0..=1.0).contains(&self.min_clear_fraction) {
            return bad(format!(
                "min_clear_fraction {} must lie in [0, 1]",
                self.min_clear_fraction
            ));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        for (name, p) in [
            ("sites_path", &self.sites_path),
            ("output_dir", &self.output_dir),
            ("zone_intensity_path", &self.zone_intensity_path),
            ("raster_dirs.ndvi", &self.raster_dirs.ndvi),
            ("raster_dirs.ntl", &self.raster_dirs.ntl),
            ("raster_dirs.uvai", &self.raster_dirs.uvai),
        ] {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return bad(format!("{name} is empty"));
            }
        }
        Ok(())
    }
}
