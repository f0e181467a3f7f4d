use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sitewatch::config::RunConfig;
use sitewatch::demo::run_demo;
use sitewatch::error::{read_text, CliError};
use sitewatch::pipeline::{format_summary, run};
use sitewatch_core::energy::{
    attributed_emission, fleet_average_intensity, load_zone_intensities, zone_intensity,
};
use sitewatch_core::site_registry::{
    load_sites_with, LoadOptions, RegistryError, SiteStatus, DEFAULT_AOI_RADIUS_M,
};
use sitewatch_core::timeseries::{
    fit_harmonic, mann_kendall, ols_slope, read_series_csv, Variable, DEFAULT_PERIOD_DAYS,
    DEFAULT_SIGNIFICANCE,
};

#[derive(Parser)]
#[command(
    name = "sitewatch",
    version,
    about = "Satellite time-series monitoring of data center sites"
)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a site registry (CSV or GeoJSON) and list any problems.
    SitesValidate {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_AOI_RADIUS_M)]
        default_radius_m: f64,
    },
    /// Run the full pipeline from a JSON config.
    Run(RunArgs),
    /// Generate synthetic inputs and run the pipeline on them.
    Demo {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "demo-output")]
        output_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit the seasonal harmonic model to a `t_days,value[,weight]` CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "ndvi")]
        variable: String,
        #[arg(long)]
        no_trend: bool,
        #[arg(long, default_value_t = DEFAULT_PERIOD_DAYS)]
        period_days: f64,
        /// Day zero of the `t_days` column.
        #[arg(long, default_value = "1970-01-01")]
        epoch: NaiveDate,
    },
    /// Trend test on a `t_days,value[,weight]` CSV.
    Trend {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::MannKendall)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
        alpha: f64,
        #[arg(long, default_value = "1970-01-01")]
        epoch: NaiveDate,
    },
    /// Zone intensity lookups, fleet averages and attributed emissions.
    Energy {
        #[arg(long)]
        zones: PathBuf,
        #[arg(long)]
        year: i32,
        /// Site registry for the fleet average.
        #[arg(long)]
        sites: Option<PathBuf>,
        /// Zone for a single lookup.
        #[arg(long)]
        zone: Option<String>,
        /// IT energy in kWh; with --zone, prints the attributed emission.
        #[arg(long, requires = "zone")]
        kwh: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        pue: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    MannKendall,
    Ols,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_plots: bool,
    #[arg(long)]
    generated_at: Option<DateTime<Utc>>,
    #[arg(long)]
    energy_year: Option<i32>,
    #[arg(long)]
    significance: Option<f64>,
    #[arg(long)]
    surge_threshold: Option<f64>,
    #[arg(long)]
    min_clear_fraction: Option<f64>,
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn validation(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn sites_validate(path: &Path, default_radius_m: f64) -> Result<i32, CliError> {
    let text = read_text(path)?;
    match load_sites_with(&text, &LoadOptions { default_radius_m }) {
        Ok(sites) => {
            let existing = sites
                .iter()
                .filter(|s| s.status == SiteStatus::Existing)
                .count();
            println!(
                "{} sites ({} existing, {} proposed)",
                sites.len(),
                existing,
                sites.len() - existing
            );
            Ok(0)
        }
        Err(RegistryError::Validation(issues)) => {
            for issue in &issues {
                eprintln!("{}: {issue}", path.display());
            }
            eprintln!("{} invalid record(s)", issues.len());
            Ok(1)
        }
        Err(e) => Err(validation(path, e)),
    }
}

fn run_command(a: RunArgs) -> Result<i32, CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if a.output_dir.is_some() {
        cfg.output_dir = a.output_dir;
    }
    cfg.workers = a.workers.or(cfg.workers);
    cfg.plots &= !a.no_plots;
    cfg.generated_at = a.generated_at.or(cfg.generated_at);
    cfg.energy_year = a.energy_year.or(cfg.energy_year);
    cfg.significance = a.significance.unwrap_or(cfg.significance);
    cfg.surge_threshold = a.surge_threshold.unwrap_or(cfg.surge_threshold);
    cfg.min_clear_fraction = a.min_clear_fraction.unwrap_or(cfg.min_clear_fraction);
    let summary = run(&cfg)?;
    print!("{}", format_summary(&summary));
    Ok(summary.exit_code())
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::SitesValidate {
            path,
            default_radius_m,
        } => sites_validate(&path, default_radius_m),
        Command::Run(a) => run_command(a),
        Command::Demo {
            seed,
            output_dir,
            workers,
        } => {
            let out = run_demo(&output_dir, seed, workers)?;
            print!("{}", format_summary(&out.summary));
            Ok(out.summary.exit_code())
        }
        Command::Fit {
            csv,
            variable,
            no_trend,
            period_days,
            epoch,
        } => {
            let variable: Variable = variable
                .parse()
                .map_err(|e| CliError::Validation(format!("{e}")))?;
            let series = read_series_csv(&read_text(&csv)?, variable, epoch)
                .map_err(|e| validation(&csv, e))?;
            let fit =
                fit_harmonic(&series, !no_trend, period_days).map_err(|e| validation(&csv, e))?;
            println!("{}", to_json(&fit));
            Ok(0)
        }
        Command::Trend {
            csv,
            method,
            alpha,
            epoch,
        } => {
            let variable = Variable::Other("series".into());
            let series = read_series_csv(&read_text(&csv)?, variable, epoch)
                .map_err(|e| validation(&csv, e))?;
            let result = match method {
                Method::MannKendall => mann_kendall(&series, alpha),
                Method::Ols => ols_slope(&series, alpha),
            }
            .map_err(|e| validation(&csv, e))?;
            println!("{}", to_json(&result));
            Ok(0)
        }
        Command::Energy {
            zones,
            year,
            sites,
            zone,
            kwh,
            pue,
        } => {
            let records =
                load_zone_intensities(&read_text(&zones)?).map_err(|e| validation(&zones, e))?;
            let mut out = serde_json::Map::new();
            if let Some(zone) = &zone {
                let rec = zone_intensity(&records, zone, year)
                    .map_err(|e| validation(&zones, e))?
                    .ok_or_else(|| {
                        CliError::Validation(format!(
                            "no record for zone {zone} at or before {year}"
                        ))
                    })?;
                out.insert(
                    "zone".into(),
                    serde_json::to_value(rec).expect("serializable"),
                );
                if let Some(kwh) = kwh {
                    let g = attributed_emission(kwh, rec.carbon_intensity, pue)
                        .map_err(|e| CliError::Validation(e.to_string()))?;
                    out.insert(
                        "emission".into(),
                        json!({"it_energy_kwh": kwh, "pue": pue, "carbon_intensity_gco2_kwh": rec.carbon_intensity, "gco2": g}),
                    );
                }
            }
            if let Some(path) = &sites {
                let list = load_sites_with(&read_text(path)?, &LoadOptions::default())
                    .map_err(|e| validation(path, e))?;
                let fleet = fleet_average_intensity(&list, &records, year)
                    .map_err(|e| validation(path, e))?;
                out.insert(
                    "fleet".into(),
                    serde_json::to_value(fleet).expect("serializable"),
                );
            }
            if out.is_empty() {
                return Err(CliError::Config("energy needs --zone or --sites".into()));
            }
            println!("{}", to_json(&out));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
