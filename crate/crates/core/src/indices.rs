//! Spectral indices, AOI zonal statistics and per-site series extraction.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster_io::{decode_qa, qa_word, BandKind, QaBitSpec, RasterGrid, SampleType};
use crate::site_registry::{aoi_mask, PixelMask, RegistryError, Site};
use crate::timeseries::{Observation, ObservationSeries, TimeseriesError, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no selected pixel holds data")]
    EmptyMask,

    #[error("timestamp {0} appears more than once in the stack")]
    DuplicateTimestamp(f64),

    #[error(transparent)]
    Registry(#[from] RegistryError),

    #[error(transparent)]
    Series(#[from] TimeseriesError),
}

/// Near-infrared and red reflectance for one acquisition, with an optional
/// QA bitmask on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPair {
    pub nir: RasterGrid,
    pub red: RasterGrid,
    pub qa: Option<RasterGrid>,
}

fn check_aligned(a: &RasterGrid, b: &RasterGrid, what: &str) -> Result<(), IndexError> {
    if !a.same_geometry(b) {
        return Err(IndexError::GridMismatch(format!(
            "{what}: {}x{} at ({}, {}) step ({}, {}) {} vs {}x{} at ({}, {}) step ({}, {}) {}",
            a.width,
            a.height,
            a.origin_x,
            a.origin_y,
            a.pixel_scale_x,
            a.pixel_scale_y,
            a.crs_tag,
            b.width,
            b.height,
            b.origin_x,
            b.origin_y,
            b.pixel_scale_x,
            b.pixel_scale_y,
            b.crs_tag,
        )));
    }
    if a.values.len() != b.values.len() {
        return Err(IndexError::GridMismatch(format!(
            "{what}: value counts differ"
        )));
    }
    Ok(())
}

fn qa_clear(sample: f64, spec: &QaBitSpec) -> bool {
    qa_word(sample).is_some_and(|w| decode_qa(w, spec))
}

/// `(nir − red) / (nir + red)` per pixel.
///
/// The result is a float grid with NaN as nodata. A pixel is nodata when
/// either band is nodata, its QA word is missing or carries a reject flag,
/// or `nir + red` is zero.
pub fn ndvi(pair: &BandPair, qa_spec: &QaBitSpec) -> Result<RasterGrid, IndexError> {
    let BandPair { nir, red, qa } = pair;
    check_aligned(nir, red, "nir/red")?;
    if nir.timestamp != red.timestamp {
        return Err(IndexError::GridMismatch(format!(
            "nir timestamp {} differs from red timestamp {}",
            nir.timestamp, red.timestamp
        )));
    }
    if let Some(q) = qa {
        check_aligned(nir, q, "nir/qa")?;
    }
    let values = (0..nir.values.len())
        .map(|i| {
            let (n, r) = (nir.values[i], red.values[i]);
            if nir.is_nodata(n) || red.is_nodata(r) || n.is_nan() || r.is_nan() {
                return f64::NAN;
            }
            if let Some(q) = qa {
                if q.is_nodata(q.values[i]) || !qa_clear(q.values[i], qa_spec) {
                    return f64::NAN;
                }
            }
            let sum = n + r;
            if sum == 0.0 {
                f64::NAN
            } else {
                (n - r) / sum
            }
        })
        .collect();
    Ok(RasterGrid {
        values,
        ..nir.clone()
    }
    .with_nodata(Some(f64::NAN))
    .with_band_kind(BandKind::Index)
    .with_sample_type(SampleType::F64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZonalStats {
    pub mean: f64,
    pub count: usize,
    /// Population standard deviation.
    pub stddev: f64,
}

/// Mean, count and population standard deviation of the selected pixels
/// that are not nodata, summed in row-major order.
pub fn zonal_mean(grid: &RasterGrid, mask: &PixelMask) -> Result<ZonalStats, IndexError> {
    if !mask.matches(grid) {
        return Err(IndexError::GridMismatch(format!(
            "mask is {}x{}, grid is {}x{}",
            mask.width, mask.height, grid.width, grid.height
        )));
    }
    let picked = || {
        grid.values
            .iter()
            .zip(&mask.selected)
            .filter(|&(&v, &sel)| sel && !grid.is_nodata(v) && !v.is_nan())
            .map(|(&v, _)| v)
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for v in picked() {
        sum += v;
        count += 1;
    }
    if count == 0 {
        return Err(IndexError::EmptyMask);
    }
    let mean = sum / count as f64;
    let ss: f64 = picked().map(|v| (v - mean) * (v - mean)).sum();
    Ok(ZonalStats {
        mean,
        count,
        stddev: (ss / count as f64).sqrt(),
    })
}

/// One timestamped layer of a raster stack.
#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    /// Days since the series epoch.
    pub timestamp: f64,
    pub grid: RasterGrid,
    pub qa: Option<RasterGrid>,
}

impl StackEntry {
    pub fn new(timestamp: f64, grid: RasterGrid) -> Self {
        StackEntry {
            timestamp,
            grid,
            qa: None,
        }
    }

    pub fn with_qa(mut self, qa: RasterGrid) -> Self {
        self.qa = Some(qa);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub qa_spec: QaBitSpec,
    /// Share of AOI pixels that must survive screening for a date to count.
    /// With 0, any single usable pixel yields an observation.
    pub min_clear_fraction: f64,
    pub epoch: NaiveDate,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            qa_spec: QaBitSpec::default(),
            min_clear_fraction: 0.0,
            epoch: NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"),
        }
    }
}

fn observe(
    entry: &StackEntry,
    site: &Site,
    opts: &ExtractOptions,
) -> Result<Option<Observation>, IndexError> {
    let mut mask = aoi_mask(site, &entry.grid)?;
    let aoi_pixels = mask.count();
    if let Some(qa) = &entry.qa {
        check_aligned(&entry.grid, qa, "grid/qa")?;
        for (sel, &q) in mask.selected.iter_mut().zip(&qa.values) {
            *sel = *sel && !qa.is_nodata(q) && qa_clear(q, &opts.qa_spec);
        }
    }
    let stats = match zonal_mean(&entry.grid, &mask) {
        Ok(s) => s,
        Err(IndexError::EmptyMask) => return Ok(None),
        Err(e) => return Err(e),
    };
    if (stats.count as f64) < opts.min_clear_fraction * aoi_pixels as f64 {
        return Ok(None);
    }
    Ok(Some(Observation::new(entry.timestamp, stats.mean)))
}

/// AOI mean per stack layer after QA and nodata screening.
///
/// Layers with no usable pixel (or fewer than the configured clear share)
/// are left out; nothing is interpolated. Layers are processed in parallel
/// and the result is ordered by timestamp.
pub fn extract_series(
    stack: &[StackEntry],
    site: &Site,
    variable: Variable,
    opts: &ExtractOptions,
) -> Result<ObservationSeries, IndexError> {
    let mut times: Vec<f64> = stack.iter().map(|e| e.timestamp).collect();
    times.sort_by(f64::total_cmp);
    if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
        return Err(IndexError::DuplicateTimestamp(w[0]));
    }
    let obs: Vec<Option<Observation>> = stack
        .par_iter()
        .map(|e| observe(e, site, opts))
        .collect::<Result<_, _>>()?;
    Ok(ObservationSeries::new(
        variable,
        opts.epoch,
        obs.into_iter().flatten().collect(),
    )?)
}
