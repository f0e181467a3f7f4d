//! Per-site report assembly, JSON rendering and SVG time-series plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::FleetIntensity;
use crate::site_registry::Site;
use crate::timeseries::{predict, HarmonicFit, ObservationSeries, TrendDirection, TrendResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SURGE_THRESHOLD: f64 = 10.0;

pub const FLAG_VEGETATION_DECLINE: &str = "vegetation-decline";
pub const FLAG_NTL_SURGE: &str = "ntl-surge";
pub const FLAG_UVAI_INCREASE: &str = "uvai-increase";

/// Significant digits kept for every number in a report.
pub const SIGNIFICANT_DIGITS: usize = 9;

const FIT_SAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report needs at least one analysis")]
    NoAnalyses,

    #[error("cannot plot an empty series")]
    EmptySeries,

    #[error("report contains a non-finite number")]
    NonFinite,

    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdviSection {
    pub fit: HarmonicFit,
    pub trend: TrendResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtlSection {
    pub annual: BTreeMap<i32, f64>,
    pub baseline_year: i32,
    pub target_year: i32,
    pub ratio: f64,
    pub surge_threshold: f64,
    pub dips: Vec<i32>,
    pub trend: TrendResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvaiSection {
    pub trend: TrendResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySection {
    pub zone_id: String,
    pub year: i32,
    pub carbon_intensity_gco2_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_carbon_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewable_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet: Option<FleetIntensity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site: Site,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndvi: Option<NdviSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ntl: Option<NtlSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uvai: Option<UvaiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    pub flags: Vec<String>,
    pub generated_at: DateTime<Utc>,
    pub tool_version: String,
}

/// Analysis results for one site; any subset may be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Analyses {
    pub ndvi: Option<NdviSection>,
    pub ntl: Option<NtlSection>,
    pub uvai: Option<UvaiSection>,
    pub energy: Option<EnergySection>,
}

impl Analyses {
    pub fn is_empty(&self) -> bool {
        self.ndvi.is_none() && self.ntl.is_none() && self.uvai.is_none() && self.energy.is_none()
    }
}

/// Flags implied by a set of analyses, in a fixed order.
pub fn derive_flags(
    ndvi: Option<&NdviSection>,
    ntl: Option<&NtlSection>,
    uvai: Option<&UvaiSection>,
) -> Vec<String> {
    let mut flags = Vec::new();
    if ndvi.is_some_and(|s| s.trend.direction == TrendDirection::Decreasing) {
        flags.push(FLAG_VEGETATION_DECLINE.to_string());
    }
    if ntl.is_some_and(|s| s.ratio >= s.surge_threshold) {
        flags.push(FLAG_NTL_SURGE.to_string());
    }
    if uvai.is_some_and(|s| s.trend.direction == TrendDirection::Increasing) {
        flags.push(FLAG_UVAI_INCREASE.to_string());
    }
    flags
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn canonicalize(v: &mut serde_json::Value) -> Result<(), ReportError> {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().ok_or(ReportError::NonFinite)?;
            *n =
                serde_json::Number::from_f64(round_significant(x)).ok_or(ReportError::NonFinite)?;
        }
        Value::Array(items) => items.iter_mut().try_for_each(canonicalize)?,
        Value::Object(map) => map.values_mut().try_for_each(canonicalize)?,
        Value::Null => return Err(ReportError::NonFinite),
        _ => {}
    }
    Ok(())
}

/// Assembles a report, rounds every number to nine significant digits and
/// derives the flags from the rounded values.
pub fn build_report(
    site: &Site,
    analyses: Analyses,
    generated_at: DateTime<Utc>,
) -> Result<SiteReport, ReportError> {
    if analyses.is_empty() {
        return Err(ReportError::NoAnalyses);
    }
    let draft = SiteReport {
        site: site.clone(),
        ndvi: analyses.ndvi,
        ntl: analyses.ntl,
        uvai: analyses.uvai,
        energy: analyses.energy,
        flags: Vec::new(),
        generated_at,
        tool_version: TOOL_VERSION.to_string(),
    };
    let mut value = serde_json::to_value(&draft)?;
    canonicalize(&mut value)?;
    let mut report: SiteReport = serde_json::from_value(value)?;
    report.flags = derive_flags(
        report.ndvi.as_ref(),
        report.ntl.as_ref(),
        report.uvai.as_ref(),
    );
    Ok(report)
}

/// Pretty JSON with object keys in sorted order and a trailing newline.
pub fn render_json(report: &SiteReport) -> Result<String, ReportError> {
    // serde_json's Value map is ordered by key
    let value = serde_json::to_value(report)?;
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}

pub fn parse_report(text: &str) -> Result<SiteReport, ReportError> {
    Ok(serde_json::from_str(text)?)
}

pub fn report_file_name(site_id: &str) -> String {
    format!("{site_id}.report.json")
}

pub fn svg_file_name(site_id: &str, variable_key: &str) -> String {
    format!("{site_id}.{variable_key}.svg")
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    t0: f64,
    t1: f64,
    v0: f64,
    v1: f64,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

impl Frame {
    fn x(&self, t: f64) -> f64 {
        LEFT + (t - self.t0) / (self.t1 - self.t0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.v0) / (self.v1 - self.v0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    }
}

/// Scatter of the observations with the fitted curve overlaid when given.
///
/// Each observation is one `<circle class="obs">`; the fit is a single
/// `<path class="fit">` sampled at 200 evenly spaced times over the span.
pub fn render_svg_timeseries(
    series: &ObservationSeries,
    fit: Option<&HarmonicFit>,
    title: &str,
) -> Result<String, ReportError> {
    let obs = series.observations();
    if obs.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    let (mut t0, mut t1) = (obs[0].t, obs[obs.len() - 1].t);
    if t1 == t0 {
        t0 -= 1.0;
        t1 += 1.0;
    }
    let curve: Vec<(f64, f64)> = fit
        .map(|f| {
            (0..FIT_SAMPLES)
                .map(|i| {
                    let t = t0 + (t1 - t0) * i as f64 / (FIT_SAMPLES - 1) as f64;
                    (t, predict(f, t))
                })
                .collect()
        })
        .unwrap_or_default();
    let values = obs.iter().map(|o| o.value).chain(curve.iter().map(|c| c.1));
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let pad = if hi > lo {
        (hi - lo) * 0.05
    } else {
        lo.abs().max(1.0) * 0.5
    };
    let frame = Frame {
        t0,
        t1,
        v0: lo - pad,
        v1: hi + pad,
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape_xml(title)
    );

    let (x_left, x_right, y_bottom, y_top) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{x_left}" y1="{y_bottom}" x2="{x_right}" y2="{y_bottom}"/><line x1="{x_left}" y1="{y_bottom}" x2="{x_left}" y2="{y_top}"/></g>"#
    );

    // year ticks along t, value ticks along v
    let _ = writeln!(s, r#"<g class="ticks" fill="black">"#);
    let first = series.date_of(frame.t0).year();
    let last = series.date_of(frame.t1).year();
    let every = ((last - first) / 10 + 1).max(1);
    for year in (first..=last + 1).step_by(every as usize) {
        let Some(jan1) = NaiveDate::from_ymd_opt(year, 1, 1) else {
            continue;
        };
        let t = series.days_since_epoch(jan1);
        if t < frame.t0 || t > frame.t1 {
            continue;
        }
        let x = frame.x(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y_bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{year}</text>"#,
            y_bottom + 5.0,
            y_bottom + 18.0
        );
    }
    let step = nice_step(frame.v1 - frame.v0);
    let mut v = (frame.v0 / step).ceil() * step;
    while v <= frame.v1 {
        let y = frame.y(v);
        let label = round_significant(if v.abs() < step * 1e-9 { 0.0 } else { v });
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x_left}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            x_left - 5.0,
            x_left - 8.0,
            y + 4.0
        );
        v += step;
    }
    let _ = writeln!(s, "</g>");

    let variable = series.variable();
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.1}" y="{:.1}" text-anchor="middle">Date (days since {})</text>"#,
        (x_left + x_right) / 2.0,
        HEIGHT - 10.0,
        series.epoch()
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{} ({})</text>"#,
        (y_top + y_bottom) / 2.0,
        escape_xml(variable.label()),
        escape_xml(variable.units())
    );

    if !curve.is_empty() {
        let mut d = String::new();
        for (i, (t, v)) in curve.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                frame.x(*t),
                frame.y(*v)
            );
        }
        let _ = writeln!(
            s,
            r##"<path class="fit" d="{d}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##
        );
    }
    let _ = writeln!(s, r##"<g class="observations" fill="#1f77b4">"##);
    for o in obs {
        let _ = writeln!(
            s,
            r#"<circle class="obs" cx="{:.2}" cy="{:.2}" r="3"/>"#,
            frame.x(o.t),
            frame.y(o.value)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::site_registry::{Aoi, SiteStatus};
    use crate::timeseries::{TrendMethod, Variable};

    fn site() -> Site {
        Site {
            id: "s1".into(),
            name: "Site <1>".into(),
            operator: "op".into(),
            status: SiteStatus::Proposed,
            lat: 38.95,
            lon: -77.55,
            aoi: Aoi::Circle { radius_m: 2000.0 },
            zone_id: Some("US-MIDA-PJM".into()),
        }
    }

    fn trend(direction: TrendDirection, p: f64) -> TrendResult {
        TrendResult {
            method: TrendMethod::MannKendall,
            slope: 1.0 / 3.0,
            intercept: None,
            s_statistic: Some(12),
            tau: Some(0.4),
            rmse: None,
            p_value: p,
            significance: 0.05,
            direction,
            n_obs: 10,
        }
    }

    fn when() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn ntl(ratio: f64) -> NtlSection {
        NtlSection {
            annual: BTreeMap::from([(2014, 1.0), (2015, ratio)]),
            baseline_year: 2014,
            target_year: 2015,
            ratio,
            surge_threshold: DEFAULT_SURGE_THRESHOLD,
            dips: vec![],
            trend: trend(TrendDirection::NoTrend, 0.3),
        }
    }

    #[test]
    fn flags_follow_rules() {
        let a = Analyses {
            uvai: Some(UvaiSection {
                trend: trend(TrendDirection::Decreasing, 0.01),
            }),
            ..Default::default()
        };
        assert!(build_report(&site(), a, when()).unwrap().flags.is_empty());
        let a = Analyses {
            ntl: Some(ntl(10.2)),
            ..Default::default()
        };
        assert_eq!(
            build_report(&site(), a, when()).unwrap().flags,
            vec![FLAG_NTL_SURGE]
        );
        let a = Analyses {
            ntl: Some(ntl(9.99)),
            ..Default::default()
        };
        assert!(build_report(&site(), a, when()).unwrap().flags.is_empty());
    }

    #[test]
    fn no_analyses() {
        assert!(matches!(
            build_report(&site(), Analyses::default(), when()),
            Err(ReportError::NoAnalyses)
        ));
    }

    #[test]
    fn numbers_are_rounded() {
        let a = Analyses {
            ntl: Some(ntl(10.123456789123)),
            ..Default::default()
        };
        let r = build_report(&site(), a, when()).unwrap();
        let n = r.ntl.as_ref().unwrap();
        assert_eq!(n.ratio, 10.1234568);
        assert_eq!(n.trend.slope, 0.333333333);
        let text = render_json(&r).unwrap();
        assert_eq!(parse_report(&text).unwrap(), r);
        assert!(!text.contains("uvai"));
    }

    #[test]
    fn significant_rounding() {
        assert_eq!(round_significant(0.0), 0.0);
        assert_eq!(round_significant(-2.74e-5 * 1.000000001234), -2.74e-5);
        assert_eq!(round_significant(123456789012.0), 123456789000.0);
    }

    #[test]
    fn svg_counts() {
        let s = ObservationSeries::from_pairs(
            Variable::Ndvi,
            NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
            &[
                (0.0, 0.5),
                (100.0, 0.6),
                (200.0, 0.55),
                (300.0, 0.4),
                (400.0, 0.5),
            ],
        )
        .unwrap();
        let svg = render_svg_timeseries(&s, None, "a & b").unwrap();
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(!svg.contains("<path"));
        assert!(svg.contains("a &amp; b"));
        assert!(svg.contains("NDVI (dimensionless)"));
        let empty = ObservationSeries::empty(Variable::Ndvi, s.epoch());
        assert!(matches!(
            render_svg_timeseries(&empty, None, "x"),
            Err(ReportError::EmptySeries)
        ));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("sitewatch-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
