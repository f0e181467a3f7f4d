//! The batch run: sites and rasters in, one report per site out.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use sitewatch_core::energy::{load_zone_intensities, ZoneIntensityRecord};
use sitewatch_core::indices::{extract_series, ExtractOptions, IndexError, StackEntry};
use sitewatch_core::report::{
    build_report, render_json, render_svg_timeseries, report_file_name, svg_file_name,
    write_atomic, Analyses,
};
use sitewatch_core::site_registry::{load_sites_with, LoadOptions, Site};
use sitewatch_core::timeseries::{HarmonicFit, ObservationSeries, Variable};

use crate::analysis::{analyze_ndvi, analyze_ntl, analyze_uvai, energy_section, AnalysisSettings};
use crate::config::RunConfig;
use crate::error::{read_text, CliError};
use crate::stacks::{load_ndvi_stack, load_stack};

/// What happened to one site.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteOutcome {
    Written {
        report: PathBuf,
        sections: Vec<&'static str>,
        flags: Vec<String>,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteResult {
    pub site_id: String,
    pub outcome: SiteOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub sites: Vec<SiteResult>,
}

impl RunSummary {
    pub fn n_written(&self) -> usize {
        self.sites
            .iter()
            .filter(|s| matches!(s.outcome, SiteOutcome::Written { .. }))
            .count()
    }

    pub fn n_failed(&self) -> usize {
        self.sites.len() - self.n_written()
    }

    /// Nonzero only when no site produced a report.
    pub fn exit_code(&self) -> i32 {
        if self.n_written() == 0 {
            1
        } else {
            0
        }
    }
}

/// A stack shared by all sites. A load failure is kept and charged to each
/// site that would have used it.
type Shared = Option<Result<Vec<StackEntry>, String>>;

#[derive(Clone, Copy)]
enum Kind {
    Ndvi,
    Ntl,
    Uvai,
}

impl Kind {
    fn variable(self) -> Variable {
        match self {
            Kind::Ndvi => Variable::Ndvi,
            Kind::Ntl => Variable::NtlRadiance,
            Kind::Uvai => Variable::Uvai,
        }
    }

    fn load(self, dir: &Path, cfg: &RunConfig) -> Result<Vec<StackEntry>, CliError> {
        match self {
            Kind::Ndvi => load_ndvi_stack(dir, cfg.epoch, &cfg.qa_spec),
            Kind::Ntl => load_stack(dir, "ntl", cfg.epoch),
            Kind::Uvai => load_stack(dir, "uvai", cfg.epoch),
        }
    }
}

struct Inputs<'a> {
    cfg: &'a RunConfig,
    settings: AnalysisSettings,
    sites: Vec<Site>,
    zones: Vec<ZoneIntensityRecord>,
    shared: [(Kind, Option<&'a PathBuf>, Shared); 3],
    output_dir: PathBuf,
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let sites_path = cfg
        .sites_path
        .as_ref()
        .ok_or_else(|| CliError::Config("sites_path is required".into()))?;
    let output_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Config("output_dir is required".into()))?;
    let dirs = &cfg.raster_dirs;
    if dirs.ndvi.is_none()
        && dirs.ntl.is_none()
        && dirs.uvai.is_none()
        && cfg.zone_intensity_path.is_none()
    {
        return Err(CliError::Config(
            "no raster directory or zone intensity file configured".into(),
        ));
    }

    let opts = LoadOptions {
        default_radius_m: cfg.aoi_default_radius_m,
    };
    let sites = load_sites_with(&read_text(sites_path)?, &opts)
        .map_err(|e| CliError::Validation(format!("{}: {e}", sites_path.display())))?;
    let zones = match &cfg.zone_intensity_path {
        Some(p) => load_zone_intensities(&read_text(p)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    std::fs::create_dir_all(&output_dir).map_err(|e| CliError::io(&output_dir, e))?;

    let shared_for = |kind: Kind, dir: Option<&PathBuf>| -> Result<Shared, CliError> {
        let Some(dir) = dir else { return Ok(None) };
        if !dir.is_dir() {
            return Err(CliError::io(dir, "not a directory"));
        }
        Ok(Some(kind.load(dir, cfg).map_err(|e| e.to_string())))
    };
    let inputs = Inputs {
        cfg,
        settings: AnalysisSettings::from_config(cfg),
        shared: [
            (
                Kind::Ndvi,
                dirs.ndvi.as_ref(),
                shared_for(Kind::Ndvi, dirs.ndvi.as_ref())?,
            ),
            (
                Kind::Ntl,
                dirs.ntl.as_ref(),
                shared_for(Kind::Ntl, dirs.ntl.as_ref())?,
            ),
            (
                Kind::Uvai,
                dirs.uvai.as_ref(),
                shared_for(Kind::Uvai, dirs.uvai.as_ref())?,
            ),
        ],
        sites,
        zones,
        output_dir: output_dir.clone(),
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<SiteResult> = pool.install(|| {
        inputs
            .sites
            .par_iter()
            .map(|site| SiteResult {
                site_id: site.id.clone(),
                outcome: match process_site(site, &inputs) {
                    Ok(o) => o,
                    Err(msg) => SiteOutcome::Failed(msg),
                },
            })
            .collect()
    });

    for r in &results {
        match &r.outcome {
            SiteOutcome::Written { report, flags, .. } => {
                log::info!(
                    "{}: wrote {} flags=[{}]",
                    r.site_id,
                    report.display(),
                    flags.join(",")
                )
            }
            SiteOutcome::Failed(msg) => log::error!("{}: {msg}", r.site_id),
        }
    }
    Ok(RunSummary {
        output_dir,
        sites: results,
    })
}

/// A `<dir>/<site id>/` subdirectory replaces the shared stack for that site.
fn site_stack<'a>(
    site: &Site,
    kind: Kind,
    dir: Option<&PathBuf>,
    shared: &'a Shared,
    cfg: &RunConfig,
) -> Result<Option<Cow<'a, [StackEntry]>>, String> {
    if let Some(own) = dir.map(|d| d.join(&site.id)).filter(|d| d.is_dir()) {
        return kind
            .load(&own, cfg)
            .map(|v| Some(Cow::Owned(v)))
            .map_err(|e| e.to_string());
    }
    match shared {
        None => Ok(None),
        Some(Ok(stack)) => Ok(Some(Cow::Borrowed(stack.as_slice()))),
        Some(Err(e)) => Err(e.clone()),
    }
}

fn process_site(site: &Site, inputs: &Inputs) -> Result<SiteOutcome, String> {
    let cfg = inputs.cfg;
    let extract = ExtractOptions {
        qa_spec: cfg.qa_spec.clone(),
        min_clear_fraction: cfg.min_clear_fraction,
        epoch: cfg.epoch,
    };
    let mut analyses = Analyses::default();
    let mut plots: Vec<(ObservationSeries, Option<HarmonicFit>)> = Vec::new();
    let mut latest: Option<NaiveDate> = None;

    for (kind, dir, shared) in &inputs.shared {
        let Some(stack) = site_stack(site, *kind, *dir, shared, cfg)? else {
            continue;
        };
        let var = kind.variable();
        let series = match extract_series(&stack, site, var.clone(), &extract) {
            Ok(s) => s,
            Err(
                e @ (IndexError::Registry(_)
                | IndexError::GridMismatch(_)
                | IndexError::DuplicateTimestamp(_)),
            ) => {
                return Err(format!("{}: {e}", var.key()));
            }
            Err(e) => {
                log::warn!("{}: {} skipped: {e}", site.id, var.key());
                continue;
            }
        };
        if let Some(last) = series.observations().last() {
            let d = series.date_of(last.t);
            latest = Some(latest.map_or(d, |l| l.max(d)));
        }
        let s = &inputs.settings;
        let fit = match kind {
            Kind::Ndvi => analyze_ndvi(&series, s).map(|sec| {
                let fit = sec.fit.clone();
                analyses.ndvi = Some(sec);
                Some(fit)
            }),
            Kind::Ntl => analyze_ntl(&series, s).map(|sec| {
                analyses.ntl = Some(sec);
                None
            }),
            Kind::Uvai => analyze_uvai(&series, s).map(|sec| {
                analyses.uvai = Some(sec);
                None
            }),
        };
        match fit {
            Ok(fit) => plots.push((series, fit)),
            Err(e) => log::warn!(
                "{}: {} analysis skipped ({} observations): {e}",
                site.id,
                var.key(),
                series.len()
            ),
        }
    }
    if !inputs.zones.is_empty() {
        analyses.energy = energy_section(site, &inputs.sites, &inputs.zones, cfg.energy_year);
    }

    let generated_at = cfg.generated_at.unwrap_or_else(|| {
        default_timestamp(latest, analyses.energy.as_ref().map(|e| e.year), cfg.epoch)
    });
    let report = build_report(site, analyses, generated_at).map_err(|e| e.to_string())?;
    let json = render_json(&report).map_err(|e| e.to_string())?;
    let path = inputs.output_dir.join(report_file_name(&site.id));
    write_atomic(&path, json.as_bytes()).map_err(|e| e.to_string())?;

    if cfg.plots {
        for (series, fit) in &plots {
            let var = series.variable();
            let title = format!("{} {}", site.id, var.label());
            let svg =
                render_svg_timeseries(series, fit.as_ref(), &title).map_err(|e| e.to_string())?;
            write_atomic(
                &inputs.output_dir.join(svg_file_name(&site.id, var.key())),
                svg.as_bytes(),
            )
            .map_err(|e| e.to_string())?;
        }
    }

    let mut sections = Vec::new();
    for (present, name) in [
        (report.ndvi.is_some(), "ndvi"),
        (report.ntl.is_some(), "ntl"),
        (report.uvai.is_some(), "uvai"),
        (report.energy.is_some(), "energy"),
    ] {
        if present {
            sections.push(name);
        }
    }
    Ok(SiteOutcome::Written {
        report: path,
        sections,
        flags: report.flags,
    })
}

/// Midnight at the start of the latest observation day, else January 1 of
/// the energy year, else the epoch.
fn default_timestamp(
    latest: Option<NaiveDate>,
    energy_year: Option<i32>,
    epoch: NaiveDate,
) -> DateTime<Utc> {
    let day = latest
        .or_else(|| energy_year.and_then(|y| NaiveDate::from_ymd_opt(y, 1, 1)))
        .unwrap_or(epoch);
    day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

/// Plain-text table of per-site outcomes.
pub fn format_summary(summary: &RunSummary) -> String {
    let width = summary
        .sites
        .iter()
        .map(|s| s.site_id.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:<7}  {:<22}  flags",
        "site", "status", "sections"
    );
    for s in &summary.sites {
        match &s.outcome {
            SiteOutcome::Written {
                sections, flags, ..
            } => {
                let flags = if flags.is_empty() {
                    "-".to_string()
                } else {
                    flags.join(",")
                };
                let _ = writeln!(
                    out,
                    "{:<width$}  {:<7}  {:<22}  {flags}",
                    s.site_id,
                    "ok",
                    sections.join(",")
                );
            }
            SiteOutcome::Failed(msg) => {
                let _ = writeln!(out, "{:<width$}  {:<7}  {msg}", s.site_id, "failed");
            }
        }
    }
    let _ = writeln!(
        out,
        "{} of {} sites written to {}",
        summary.n_written(),
        summary.sites.len(),
        summary.output_dir.display()
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_timestamp_precedence() {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        let d = NaiveDate::from_ymd_opt(2023, 5, 2).unwrap();
        assert_eq!(
            default_timestamp(Some(d), Some(2020), epoch).to_rfc3339(),
            "2023-05-02T00:00:00+00:00"
        );
        assert_eq!(
            default_timestamp(None, Some(2020), epoch).to_rfc3339(),
            "2020-01-01T00:00:00+00:00"
        );
        assert_eq!(
            default_timestamp(None, None, epoch).to_rfc3339(),
            "1970-01-01T00:00:00+00:00"
        );
    }
}
