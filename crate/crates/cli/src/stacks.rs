//! Raster stacks from directories of `<variable>_<YYYYMMDD>.tif` files.
//!
//! An NDVI directory holds either precomputed `ndvi_` rasters or band
//! triples `nir_`, `red_` and optionally `qa_` for the same date. Nighttime
//! lights use `ntl_` and the aerosol index `uvai_`. Other files and
//! subdirectories are ignored here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use sitewatch_core::indices::{ndvi, BandPair, StackEntry};
use sitewatch_core::raster_io::{parse_geotiff, QaBitSpec, RasterGrid};

use crate::error::CliError;

/// Splits `nir_20200131.tif` into `("nir", 2020-01-31)`.
pub fn parse_file_name(name: &str) -> Option<(&str, NaiveDate)> {
    let stem = name
        .strip_suffix(".tif")
        .or_else(|| name.strip_suffix(".tiff"))?;
    let (prefix, stamp) = stem.rsplit_once('_')?;
    if prefix.is_empty() || stamp.len() != 8 || !stamp.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((prefix, NaiveDate::parse_from_str(stamp, "%Y%m%d").ok()?))
}

pub fn file_name(prefix: &str, date: NaiveDate) -> String {
    format!("{prefix}_{}.tif", date.format("%Y%m%d"))
}

/// Files in `dir` grouped by prefix and date.
pub fn scan_dir(dir: &Path) -> Result<BTreeMap<String, BTreeMap<NaiveDate, PathBuf>>, CliError> {
    let mut out: BTreeMap<String, BTreeMap<NaiveDate, PathBuf>> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if !entry
            .file_type()
            .map_err(|e| CliError::io(&entry.path(), e))?
            .is_file()
        {
            continue;
        }
        let name = entry.file_name();
        if let Some((prefix, date)) = name.to_str().and_then(parse_file_name) {
            out.entry(prefix.to_string())
                .or_default()
                .insert(date, entry.path());
        }
    }
    Ok(out)
}

fn read_grid(path: &Path) -> Result<RasterGrid, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_geotiff(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn days(epoch: NaiveDate, date: NaiveDate) -> f64 {
    (date - epoch).num_days() as f64
}

/// Single-band stack for `prefix`, ordered by date.
pub fn load_stack(dir: &Path, prefix: &str, epoch: NaiveDate) -> Result<Vec<StackEntry>, CliError> {
    let files = scan_dir(dir)?.remove(prefix).unwrap_or_default();
    files
        .into_par_iter()
        .map(|(date, path)| {
            let t = days(epoch, date);
            Ok(StackEntry::new(t, read_grid(&path)?.with_timestamp(t)))
        })
        .collect()
}

/// NDVI stack: precomputed `ndvi_` files when present, else computed from
/// `nir_`/`red_` pairs with `qa_` screening. QA rasters travel with the
/// entries so screening also applies to precomputed NDVI.
pub fn load_ndvi_stack(
    dir: &Path,
    epoch: NaiveDate,
    qa_spec: &QaBitSpec,
) -> Result<Vec<StackEntry>, CliError> {
    let mut groups = scan_dir(dir)?;
    let qa = groups.remove("qa").unwrap_or_default();
    if let Some(direct) = groups.remove("ndvi") {
        return direct
            .into_par_iter()
            .map(|(date, path)| {
                let t = days(epoch, date);
                let mut e = StackEntry::new(t, read_grid(&path)?.with_timestamp(t));
                if let Some(q) = qa.get(&date) {
                    e.qa = Some(read_grid(q)?);
                }
                Ok(e)
            })
            .collect();
    }
    let nir = groups.remove("nir").unwrap_or_default();
    let red = groups.remove("red").unwrap_or_default();
    for date in nir
        .keys()
        .filter(|d| !red.contains_key(d))
        .chain(red.keys().filter(|d| !nir.contains_key(d)))
    {
        log::warn!(
            "{}: {} has only one of nir/red; skipped",
            dir.display(),
            date
        );
    }
    let pairs: Vec<_> = nir
        .iter()
        .filter_map(|(d, n)| red.get(d).map(|r| (*d, n, r, qa.get(d))))
        .collect();
    pairs
        .into_par_iter()
        .map(|(date, n, r, q)| {
            let t = days(epoch, date);
            let pair = BandPair {
                nir: read_grid(n)?.with_timestamp(t),
                red: read_grid(r)?.with_timestamp(t),
                qa: q.map(|q| read_grid(q)).transpose()?,
            };
            let index = ndvi(&pair, qa_spec)
                .map_err(|e| CliError::Validation(format!("{}: {e}", n.display())))?;
            Ok(StackEntry::new(t, index))
        })
        .collect()
}
