use std::collections::BTreeMap;
use std::f64::consts::TAU;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;
use sitewatch_core::energy::FleetIntensity;
use sitewatch_core::report::*;
use sitewatch_core::site_registry::{Aoi, Site, SiteStatus};
use sitewatch_core::timeseries::*;

fn site() -> Site {
    Site {
        id: "ARC-01".into(),
        name: "Arcola \"North\" & co".into(),
        operator: "Amazon".into(),
        status: SiteStatus::Existing,
        lat: 38.9562,
        lon: -77.5391,
        aoi: Aoi::Circle { radius_m: 2000.0 },
        zone_id: Some("US-MIDA-PJM".into()),
    }
}

fn when() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 30, 12, 0, 0).unwrap()
}

fn trend(method: TrendMethod, slope: f64, p: f64, direction: TrendDirection) -> TrendResult {
    TrendResult {
        method,
        slope,
        intercept: (method == TrendMethod::Ols).then_some(1.0 / 7.0),
        s_statistic: (method == TrendMethod::MannKendall).then_some(-120),
        tau: (method == TrendMethod::MannKendall).then_some(-0.3),
        rmse: (method == TrendMethod::Ols).then_some(0.123456789123),
        p_value: p,
        significance: 0.05,
        direction,
        n_obs: 80,
    }
}

fn fit() -> HarmonicFit {
    let pairs: Vec<_> = (0..200)
        .map(|i| {
            let t = i as f64 * 18.0;
            (
                t,
                0.6 - 2.7e-5 * t
                    + 0.15 * (TAU * t / 365.0).cos()
                    + 0.01 * ((i * 7919) % 13) as f64 / 13.0,
            )
        })
        .collect();
    let s = ObservationSeries::from_pairs(
        Variable::Ndvi,
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        &pairs,
    )
    .unwrap();
    fit_harmonic(&s, true, 365.0).unwrap()
}

fn full_analyses() -> Analyses {
    Analyses {
        ndvi: Some(NdviSection {
            fit: fit(),
            trend: trend(
                TrendMethod::MannKendall,
                -2.7e-5,
                0.001,
                TrendDirection::Decreasing,
            ),
        }),
        ntl: Some(NtlSection {
            annual: (2014..2024)
                .zip([1.0, 1.4, 2.2, 3.3, 4.8, 6.5, 8.3, 7.2, 9.1, 10.4])
                .collect(),
            baseline_year: 2014,
            target_year: 2023,
            ratio: 10.4,
            surge_threshold: 10.0,
            dips: vec![2021],
            trend: trend(
                TrendMethod::Ols,
                1.1 / 365.0,
                1e-6,
                TrendDirection::Increasing,
            ),
        }),
        uvai: Some(UvaiSection {
            trend: trend(
                TrendMethod::MannKendall,
                0.02 / 365.0,
                0.003,
                TrendDirection::Increasing,
            ),
        }),
        energy: Some(EnergySection {
            zone_id: "US-MIDA-PJM".into(),
            year: 2023,
            carbon_intensity_gco2_kwh: 430.0,
            low_carbon_fraction: Some(0.39),
            renewable_fraction: Some(0.07),
            fleet: Some(FleetIntensity {
                year: 2023,
                mean_gco2_per_kwh: 411.71,
                n_matched: 14,
                min_gco2_per_kwh: 300.0,
                max_gco2_per_kwh: 500.0,
                unmatched_site_ids: vec![],
                fallback_site_ids: vec!["x".into()],
            }),
        }),
    }
}

fn sig_digits(token: &str) -> usize {
    let mantissa = token
        .trim_start_matches('-')
        .split(['e', 'E'])
        .next()
        .unwrap();
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_start_matches('0').trim_end_matches('0');
    trimmed.len().max(1)
}

fn number_tokens(v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Number(n) => out.push(n.to_string()),
        serde_json::Value::Array(a) => a.iter().for_each(|x| number_tokens(x, out)),
        serde_json::Value::Object(m) => m.values().for_each(|x| number_tokens(x, out)),
        _ => {}
    }
}

#[test]
fn full_report_flags_and_roundtrip() {
    let r = build_report(&site(), full_analyses(), when()).unwrap();
    assert_eq!(
        r.flags,
        vec![FLAG_VEGETATION_DECLINE, FLAG_NTL_SURGE, FLAG_UVAI_INCREASE]
    );
    let text = render_json(&r).unwrap();
    assert_eq!(parse_report(&text).unwrap(), r);
    assert_eq!(render_json(&r).unwrap(), text);
    assert_eq!(render_json(&parse_report(&text).unwrap()).unwrap(), text);

    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut nums = Vec::new();
    number_tokens(&value, &mut nums);
    assert!(nums.iter().all(|t| sig_digits(t) <= 9), "{nums:?}");
}

#[test]
fn keys_are_sorted_at_every_level() {
    let text = render_json(&build_report(&site(), full_analyses(), when()).unwrap()).unwrap();
    // Keys at one indentation level inside one object must ascend.
    let mut stack: Vec<(usize, String)> = Vec::new();
    for line in text.lines() {
        let indent = line.len() - line.trim_start().len();
        let t = line.trim_start();
        stack.retain(|(i, _)| *i <= indent);
        if let Some(rest) = t.strip_prefix('"') {
            if let Some(end) = rest.find("\":") {
                let key = rest[..end].to_string();
                if let Some((i, prev)) = stack.last() {
                    if *i == indent {
                        assert!(prev < &key, "{prev} !< {key}");
                    }
                }
                stack.retain(|(i, _)| *i < indent);
                stack.push((indent, key));
            }
        }
        if t.starts_with('}') || t.starts_with(']') {
            stack.retain(|(i, _)| *i < indent);
        }
    }
}

#[test]
fn absent_sections_omitted_and_no_flags_when_flat() {
    let a = Analyses {
        ntl: Some(NtlSection {
            annual: BTreeMap::from([(2020, 1.0), (2021, 2.0), (2022, 3.0)]),
            baseline_year: 2020,
            target_year: 2022,
            ratio: 3.0,
            surge_threshold: 10.0,
            dips: vec![],
            trend: trend(TrendMethod::Ols, 0.0, 0.4, TrendDirection::NoTrend),
        }),
        ..Default::default()
    };
    let r = build_report(&site(), a, when()).unwrap();
    assert!(r.flags.is_empty());
    let text = render_json(&r).unwrap();
    for key in ["\"uvai\"", "\"ndvi\"", "\"energy\""] {
        assert!(!text.contains(key));
    }
}

#[test]
fn svg_is_well_formed_with_markers_and_curve() {
    let pairs: Vec<_> = (0..37)
        .map(|i| (i as f64 * 97.0, 0.5 + 0.1 * (i as f64).sin()))
        .collect();
    let s = ObservationSeries::from_pairs(
        Variable::Ndvi,
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
        &pairs,
    )
    .unwrap();
    let f = fit_harmonic(&s, true, 365.0).unwrap();
    let svg = render_svg_timeseries(&s, Some(&f), "Vegetation <ARC-01> & surroundings").unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    let circles = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle"))
        .count();
    assert_eq!(circles, 37);
    let path = doc
        .descendants()
        .find(|n| n.has_tag_name("path"))
        .expect("fit path");
    let d = path.attribute("d").unwrap();
    assert!(d.matches(['M', 'L']).count() >= 100);
    let text: String = doc
        .descendants()
        .filter(|n| n.is_text())
        .map(|n| n.text().unwrap())
        .collect();
    assert!(text.contains("NDVI (dimensionless)"));
    assert!(text.contains("Date"));
    assert!(text.contains("Vegetation <ARC-01> & surroundings"));

    let ntl =
        ObservationSeries::from_pairs(Variable::NtlRadiance, s.epoch(), &[(100.0, 2.0)]).unwrap();
    let one = render_svg_timeseries(&ntl, None, "one").unwrap();
    let doc = roxmltree::Document::parse(&one).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("circle"))
            .count(),
        1
    );
    assert!(doc.descendants().all(|n| !n.has_tag_name("path")));
}

#[test]
fn file_names() {
    assert_eq!(report_file_name("ARC-01"), "ARC-01.report.json");
    assert_eq!(svg_file_name("ARC-01", "ndvi"), "ARC-01.ndvi.svg");
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0)]
}

fn trend_strategy() -> impl Strategy<Value = TrendResult> {
    (
        any::<bool>(),
        finite(),
        0.0f64..=1.0,
        -1000i64..1000,
        -1.0f64..=1.0,
        0usize..500,
        0u8..3,
    )
        .prop_map(|(mk, slope, p, s, tau, n, d)| TrendResult {
            method: if mk {
                TrendMethod::MannKendall
            } else {
                TrendMethod::Ols
            },
            slope,
            intercept: (!mk).then_some(slope * 0.5),
            s_statistic: mk.then_some(s),
            tau: mk.then_some(tau),
            rmse: (!mk).then_some(p * 3.0),
            p_value: p,
            significance: 0.05,
            direction: [
                TrendDirection::Increasing,
                TrendDirection::Decreasing,
                TrendDirection::NoTrend,
            ][d as usize],
            n_obs: n,
        })
}

proptest! {
    #[test]
    fn json_roundtrip_randomized(
        mu in finite(), a1 in finite(), a2 in finite(), beta in prop::option::of(finite()),
        ratio in 0.0f64..50.0, vals in prop::collection::vec(0.0f64..100.0, 1..12),
        t1 in trend_strategy(), t2 in trend_strategy(), t3 in trend_strategy(),
        which in 1u8..16, lat in -90.0f64..90.0, lon in -180.0f64..180.0, secs in 0i64..2_000_000_000,
    ) {
        let f = HarmonicFit {
            mu, alpha1: a1, alpha2: a2, beta, period_days: 365.0, n_obs: 12, rmse: mu.abs(),
            rank_ok: true, condition: 12.5, stderr: None,
        };
        let a = Analyses {
            ndvi: (which & 1 != 0).then_some(NdviSection { fit: f, trend: t1 }),
            ntl: (which & 2 != 0).then(|| NtlSection {
                annual: vals.iter().enumerate().map(|(i, &v)| (2010 + i as i32, v)).collect(),
                baseline_year: 2010, target_year: 2010 + vals.len() as i32 - 1,
                ratio, surge_threshold: 10.0, dips: vec![2012], trend: t2,
            }),
            uvai: (which & 4 != 0).then_some(UvaiSection { trend: t3 }),
            energy: (which & 8 != 0).then(|| EnergySection {
                zone_id: "Z".into(), year: 2023, carbon_intensity_gco2_kwh: ratio * 40.0,
                low_carbon_fraction: None, renewable_fraction: Some(0.1), fleet: None,
            }),
        };
        let s = Site { lat, lon, ..site() };
        let r = build_report(&s, a, Utc.timestamp_opt(secs, 0).unwrap()).unwrap();
        let text = render_json(&r).unwrap();
        prop_assert_eq!(parse_report(&text).unwrap(), r.clone());
        prop_assert_eq!(render_json(&r).unwrap(), text);
        prop_assert_eq!(r.flags.contains(&FLAG_NTL_SURGE.to_string()), r.ntl.as_ref().is_some_and(|n| n.ratio >= 10.0));
    }
}
