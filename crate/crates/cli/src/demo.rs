//! Synthetic end-to-end run.
//!
//! Writes a one-site registry, a zone intensity table and raster stacks
//! whose behaviour is known in advance, then runs the pipeline over them.
//! The vegetation signal declines slowly under its seasonal cycle and the
//! night lights grow about tenfold with one dip year. A given seed always
//! produces the same bytes.

use std::path::{Path, PathBuf};

use chrono::{Datelike, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;
use sitewatch_core::raster_io::{write_geotiff, BandKind, RasterGrid, SampleType};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{run, RunSummary};
use crate::stacks::file_name;

pub const DEMO_SITE_ID: &str = "DEMO-01";
const SITE_LAT: f64 = 38.95;
const SITE_LON: f64 = -77.54;

const NTL_LEVELS: [f64; 9] = [1.0, 1.5, 2.3, 3.4, 4.9, 6.6, 8.4, 7.3, 10.6];

/// Where the demo put its inputs and outputs.
#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub data_dir: PathBuf,
    pub config_path: PathBuf,
    pub summary: RunSummary,
}

/// A grid of `n`×`n` square pixels whose central pixel is centred on the
/// demo site.
fn site_grid(n: usize, pixel_deg: f64, kind: BandKind, sample_type: SampleType) -> RasterGrid {
    let half = (n / 2) as f64 + 0.5;
    RasterGrid::new(
        n,
        n,
        (SITE_LON - half * pixel_deg, SITE_LAT + half * pixel_deg),
        (pixel_deg, pixel_deg),
        "EPSG:4326",
    )
    .with_band_kind(kind)
    .with_sample_type(sample_type)
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

fn write_grid(
    dir: &Path,
    prefix: &str,
    date: NaiveDate,
    grid: &RasterGrid,
) -> Result<(), CliError> {
    let path = dir.join(file_name(prefix, date));
    let bytes = write_geotiff(grid)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

const QA_CLEAR: f64 = 64.0;
const QA_CLOUD: f64 = 8.0;

/// NIR, red and QA bands every 30 days for ten years. Roughly a quarter of
/// the acquisitions are fully clouded and a few more carry a cloud patch.
fn ndvi_stack(dir: &Path, rng: &mut ChaCha8Rng) -> Result<(), CliError> {
    const N: usize = 64;
    let start = NaiveDate::from_ymd_opt(2014, 1, 5).expect("valid date");
    let pixel_noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let date_noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let template = site_grid(N, 0.0005, BandKind::Reflectance, SampleType::F32);
    let mut date = start;
    while date < NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date") {
        let t = (date - start).num_days() as f64;
        let phase = 2.0 * std::f64::consts::PI * date.ordinal0() as f64 / 365.0;
        let level = 0.6 + 0.15 * phase.cos() + 0.05 * phase.sin() - 0.01 * t / 365.0
            + date_noise.sample(rng);

        let mut red = template.clone();
        let mut nir = template.clone();
        for i in 0..N * N {
            let v: f64 = (level + pixel_noise.sample(rng)).clamp(-0.95, 0.95);
            let r = rng.gen_range(0.08..0.12);
            red.values[i] = f32_round(r);
            nir.values[i] = f32_round(r * (1.0 + v) / (1.0 - v));
        }

        let mut qa = template
            .clone()
            .with_band_kind(BandKind::QaBits)
            .with_sample_type(SampleType::U16);
        qa.values.fill(QA_CLEAR);
        let sky: f64 = rng.gen();
        if sky < 0.25 {
            qa.values.fill(QA_CLOUD);
        } else if sky < 0.4 {
            let (r0, c0) = (rng.gen_range(0..N / 2), rng.gen_range(0..N / 2));
            for r in r0..r0 + N / 2 {
                for c in c0..c0 + N / 2 {
                    qa.values[r * N + c] = QA_CLOUD;
                }
            }
        }
        write_grid(dir, "nir", date, &nir)?;
        write_grid(dir, "red", date, &red)?;
        write_grid(dir, "qa", date, &qa)?;
        date += chrono::Duration::days(30);
    }
    Ok(())
}

/// One mid-year radiance composite per year.
fn ntl_stack(dir: &Path, rng: &mut ChaCha8Rng) -> Result<(), CliError> {
    const N: usize = 16;
    let template = site_grid(N, 0.0045, BandKind::Radiance, SampleType::F32);
    for (i, level) in NTL_LEVELS.iter().enumerate() {
        let date = NaiveDate::from_ymd_opt(2014 + i as i32, 7, 1).expect("valid date");
        let noise = Normal::new(0.0, 0.02 * level).expect("valid sigma");
        let mut g = template.clone();
        for v in &mut g.values {
            *v = f32_round((level + noise.sample(rng)).max(0.0));
        }
        write_grid(dir, "ntl", date, &g)?;
    }
    Ok(())
}

/// Monthly aerosol index with a slow upward drift.
fn uvai_stack(dir: &Path, rng: &mut ChaCha8Rng) -> Result<(), CliError> {
    const N: usize = 8;
    let template = site_grid(N, 0.035, BandKind::Index, SampleType::F32);
    let start = NaiveDate::from_ymd_opt(2018, 6, 15).expect("valid date");
    let offset = Normal::new(0.0, 0.05).expect("valid sigma");
    let pixel = Normal::new(0.0, 0.01).expect("valid sigma");
    for m in 0..72u32 {
        let date = start + Months::new(m);
        let level = -0.3 + 0.02 * m as f64 / 12.0 + offset.sample(rng);
        let mut g = template.clone();
        for v in &mut g.values {
            *v = f32_round(level + pixel.sample(rng));
        }
        write_grid(dir, "uvai", date, &g)?;
    }
    Ok(())
}

/// Writes the demo inputs under `<out>/data`, runs the pipeline into
/// `<out>/reports` and returns the run summary.
pub fn run_demo(out_dir: &Path, seed: u64, workers: Option<usize>) -> Result<DemoOutput, CliError> {
    let data = out_dir.join("data");
    let rasters = data.join("rasters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sub in ["ndvi", "ntl", "uvai"] {
        let d = rasters.join(sub);
        // stale files from an earlier run with another seed would mix in
        if d.exists() {
            std::fs::remove_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        }
        create_dir(&d)?;
    }

    write_text(
        &data.join("sites.csv"),
        &format!(
            "id,name,operator,status,lat,lon,aoi_kind,aoi_params,zone_id\n\
             {DEMO_SITE_ID},Demo Campus,Example Cloud,existing,{SITE_LAT},{SITE_LON},circle,1000,US-MIDA-PJM\n"
        ),
    )?;
    write_text(
        &data.join("zones.csv"),
        "zone_id,year,carbon_intensity_gco2_kwh,low_carbon_fraction,renewable_fraction\n\
         US-MIDA-PJM,2023,430,0.39,0.07\n",
    )?;
    ndvi_stack(&rasters.join("ndvi"), &mut rng)?;
    ntl_stack(&rasters.join("ntl"), &mut rng)?;
    uvai_stack(&rasters.join("uvai"), &mut rng)?;

    let config = json!({
        "sites_path": "sites.csv",
        "zone_intensity_path": "zones.csv",
        "raster_dirs": {"ndvi": "rasters/ndvi", "ntl": "rasters/ntl", "uvai": "rasters/uvai"},
        "output_dir": "../reports",
        "seed": seed,
    });
    let config_path = data.join("config.json");
    let text = serde_json::to_string_pretty(&config).expect("static JSON") + "\n";
    write_text(&config_path, &text)?;

    let mut cfg = RunConfig::load(&config_path)?;
    cfg.workers = workers;
    cfg.output_dir = Some(out_dir.join("reports"));
    let summary = run(&cfg)?;
    Ok(DemoOutput {
        data_dir: data,
        config_path,
        summary,
    })
}
