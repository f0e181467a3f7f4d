//! Datacenter site records, their areas of interest, and pixel selection.
//!
//! Sites load from CSV with the header
//! `id,name,operator,status,lat,lon,aoi_kind,aoi_params,zone_id`
//! or from a GeoJSON `FeatureCollection` of `Point` features carrying the
//! same keys as properties. `aoi_kind` is `circle` (params: radius in
//! meters) or `bbox` (params: `min_lon;min_lat;max_lon;max_lat`); when it is
//! empty the configured default circle is used.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::raster_io::{crs_kind, epsg_code, CrsKind, RasterGrid};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const DEFAULT_AOI_RADIUS_M: f64 = 2_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteStatus {
    Existing,
    Proposed,
}

impl SiteStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SiteStatus::Existing => "existing",
            SiteStatus::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aoi {
    Circle {
        radius_m: f64,
    },
    Bbox {
        min_lon: f64,
        min_lat: f64,
        max_lon: f64,
        max_lat: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub name: String,
    pub operator: String,
    pub status: SiteStatus,
    pub lat: f64,
    pub lon: f64,
    pub aoi: Aoi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone_id: Option<String>,
}

/// One problem found while validating a site document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// 1-based record number in document order.
    pub record: usize,
    pub id: Option<String>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}", self.record)?;
        if let Some(id) = &self.id {
            write!(f, " ({id})")?;
        }
        write!(f, ": {}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("{} invalid site record(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<ValidationIssue>),

    #[error("unreadable site document: {0}")]
    Parse(String),

    #[error("unsupported CRS {0:?} for AOI selection")]
    UnsupportedCrs(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub default_radius_m: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            default_radius_m: DEFAULT_AOI_RADIUS_M,
        }
    }
}

pub fn load_sites(text: &str) -> Result<Vec<Site>, RegistryError> {
    load_sites_with(text, &LoadOptions::default())
}

/// Parses and validates a CSV or GeoJSON site document; sites come back in
/// document order. Every invalid record is reported, not only the first.
pub fn load_sites_with(text: &str, opts: &LoadOptions) -> Result<Vec<Site>, RegistryError> {
    let raws = if text.trim_start().starts_with('{') {
        geojson_records(text)?
    } else {
        csv_records(text)?
    };

    let mut issues = Vec::new();
    let mut sites = Vec::with_capacity(raws.len());
    let mut seen = HashSet::new();
    for (i, raw) in raws.into_iter().enumerate() {
        let record = i + 1;
        match raw.into_site(record, opts) {
            Ok(site) => {
                if !seen.insert(site.id.clone()) {
                    issues.push(ValidationIssue {
                        record,
                        id: Some(site.id.clone()),
                        field: "id",
                        message: "duplicate id".into(),
                    });
                }
                sites.push(site);
            }
            Err(mut errs) => issues.append(&mut errs),
        }
    }
    if issues.is_empty() {
        Ok(sites)
    } else {
        Err(RegistryError::Validation(issues))
    }
}

#[derive(Debug, Default)]
struct RawSite {
    id: String,
    name: String,
    operator: String,
    status: String,
    lat: String,
    lon: String,
    aoi_kind: String,
    aoi_params: String,
    zone_id: String,
}

impl RawSite {
    fn into_site(self, record: usize, opts: &LoadOptions) -> Result<Site, Vec<ValidationIssue>> {
        let id = self.id.trim().to_string();
        let mut issues = Vec::new();
        let mut issue = |field: &'static str, message: String| {
            issues.push(ValidationIssue {
                record,
                id: (!id.is_empty()).then(|| id.clone()),
                field,
                message,
            })
        };
        if id.is_empty() {
            issue("id", "empty id".into());
        }
        let status = match self.status.trim().to_ascii_lowercase().as_str() {
            "existing" => Some(SiteStatus::Existing),
            "proposed" => Some(SiteStatus::Proposed),
            other => {
                issue("status", format!("unknown status {other:?}"));
                None
            }
        };
        let lat = number_in(&self.lat, -90.0, 90.0)
            .map_err(|m| issue("lat", m))
            .ok();
        let lon = number_in(&self.lon, -180.0, 180.0)
            .map_err(|m| issue("lon", m))
            .ok();
        let aoi = match parse_aoi(&self.aoi_kind, &self.aoi_params, opts) {
            Ok(a) => Some(a),
            Err((field, m)) => {
                issue(field, m);
                None
            }
        };
        let zone = self.zone_id.trim();
        match (status, lat, lon, aoi) {
            (Some(status), Some(lat), Some(lon), Some(aoi)) if issues.is_empty() => Ok(Site {
                id,
                name: self.name.trim().to_string(),
                operator: self.operator.trim().to_string(),
                status,
                lat,
                lon,
                aoi,
                zone_id: (!zone.is_empty()).then(|| zone.to_string()),
            }),
            _ => Err(issues),
        }
    }
}

fn number_in(text: &str, lo: f64, hi: f64) -> Result<f64, String> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {text:?}"))?;
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} outside [{lo}, {hi}]"))
    }
}

fn parse_aoi(kind: &str, params: &str, opts: &LoadOptions) -> Result<Aoi, (&'static str, String)> {
    let nums = || -> Result<Vec<f64>, (&'static str, String)> {
        params
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| ("aoi_params", format!("not a number: {s:?}")))
            })
            .collect()
    };
    match kind.trim().to_ascii_lowercase().as_str() {
        "" => Ok(Aoi::Circle {
            radius_m: opts.default_radius_m,
        }),
        "circle" => {
            let v = nums()?;
            let radius_m = match v.as_slice() {
                [] => opts.default_radius_m,
                [r] => *r,
                _ => {
                    return Err((
                        "aoi_params",
                        format!("circle takes one radius, got {}", v.len()),
                    ))
                }
            };
            if !(radius_m > 0.0 && radius_m.is_finite()) {
                return Err(("aoi_params", format!("radius {radius_m} must be positive")));
            }
            Ok(Aoi::Circle { radius_m })
        }
        "bbox" => {
            let v = nums()?;
            let [min_lon, min_lat, max_lon, max_lat] = v[..] else {
                return Err((
                    "aoi_params",
                    format!("bbox takes 4 numbers, got {}", v.len()),
                ));
            };
            if !(min_lon < max_lon && min_lat < max_lat) {
                return Err((
                    "aoi_params",
                    "bbox minimum must be below maximum on both axes".into(),
                ));
            }
            if !(-180.0..=180.0).contains(&min_lon)
                || !(-180.0..=180.0).contains(&max_lon)
                || !(-90.0..=90.0).contains(&min_lat)
                || !(-90.0..=90.0).contains(&max_lat)
            {
                return Err((
                    "aoi_params",
                    "bbox outside longitude/latitude bounds".into(),
                ));
            }
            Ok(Aoi::Bbox {
                min_lon,
                min_lat,
                max_lon,
                max_lat,
            })
        }
        other => Err(("aoi_kind", format!("unknown AOI kind {other:?}"))),
    }
}

fn csv_records(text: &str) -> Result<Vec<RawSite>, RegistryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| RegistryError::Parse(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["id", "name", "operator", "status", "lat", "lon"];
    for r in required {
        if col(r).is_none() {
            return Err(RegistryError::Parse(format!("missing CSV column {r:?}")));
        }
    }
    let idx: Vec<Option<usize>> = [
        "id",
        "name",
        "operator",
        "status",
        "lat",
        "lon",
        "aoi_kind",
        "aoi_params",
        "zone_id",
    ]
    .iter()
    .map(|n| col(n))
    .collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RegistryError::Parse(e.to_string()))?;
        let get = |i: usize| idx[i].and_then(|c| rec.get(c)).unwrap_or("").to_string();
        out.push(RawSite {
            id: get(0),
            name: get(1),
            operator: get(2),
            status: get(3),
            lat: get(4),
            lon: get(5),
            aoi_kind: get(6),
            aoi_params: get(7),
            zone_id: get(8),
        });
    }
    Ok(out)
}

fn geojson_records(text: &str) -> Result<Vec<RawSite>, RegistryError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(RegistryError::Parse(
            "expected a GeoJSON FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| RegistryError::Parse("FeatureCollection without a features array".into()))?;
    let text_of = |v: Option<&Value>| match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| match i {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect::<Vec<_>>()
            .join(";"),
        Some(other) => other.to_string(),
    };
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geom = f.get("geometry");
            if geom.and_then(|g| g.get("type")).and_then(Value::as_str) != Some("Point") {
                return Err(RegistryError::Parse(format!(
                    "feature {} is not a Point",
                    i + 1
                )));
            }
            let coords = geom
                .and_then(|g| g.get("coordinates"))
                .and_then(Value::as_array)
                .filter(|c| c.len() >= 2)
                .ok_or_else(|| {
                    RegistryError::Parse(format!("feature {} has no coordinates", i + 1))
                })?;
            let props = f.get("properties");
            let prop = |k: &str| text_of(props.and_then(|p| p.get(k)));
            Ok(RawSite {
                id: prop("id"),
                name: prop("name"),
                operator: prop("operator"),
                status: prop("status"),
                lon: text_of(coords.first()),
                lat: text_of(coords.get(1)),
                aoi_kind: prop("aoi_kind"),
                aoi_params: prop("aoi_params"),
                zone_id: prop("zone_id"),
            })
        })
        .collect()
}

/// Per-pixel selection aligned with a raster grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    pub selected: Vec<bool>,
}

impl PixelMask {
    pub fn full(width: usize, height: usize) -> Self {
        PixelMask {
            width,
            height,
            selected: vec![true; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn matches(&self, grid: &RasterGrid) -> bool {
        self.width == grid.width
            && self.height == grid.height
            && self.selected.len() == grid.values.len()
    }

    /// True when every pixel selected here is also selected in `other`.
    pub fn is_subset_of(&self, other: &PixelMask) -> bool {
        self.selected.len() == other.selected.len()
            && self
                .selected
                .iter()
                .zip(&other.selected)
                .all(|(&a, &b)| !a || b)
    }
}

/// Great-circle distance in meters on a 6,371 km sphere.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Selects pixels whose centers fall inside the site's AOI.
///
/// Geographic grids use haversine distance for circles. Projected grids
/// (Web Mercator and WGS 84 / UTM zones) use Euclidean distance from the
/// projected site position; a bbox is projected corner by corner and its
/// envelope is used.
pub fn aoi_mask(site: &Site, grid: &RasterGrid) -> Result<PixelMask, RegistryError> {
    let kind = crs_kind(&grid.crs_tag)
        .ok_or_else(|| RegistryError::UnsupportedCrs(grid.crs_tag.clone()))?;
    let mut selected = Vec::with_capacity(grid.width * grid.height);
    match kind {
        CrsKind::Geographic => {
            for row in 0..grid.height {
                for col in 0..grid.width {
                    let (x, y) = grid.pixel_center(row, col);
                    selected.push(match site.aoi {
                        Aoi::Circle { radius_m } => {
                            haversine_m(site.lat, site.lon, y, x) <= radius_m
                        }
                        Aoi::Bbox {
                            min_lon,
                            min_lat,
                            max_lon,
                            max_lat,
                        } => (min_lon..=max_lon).contains(&x) && (min_lat..=max_lat).contains(&y),
                    });
                }
            }
        }
        CrsKind::Projected => {
            let proj = Projection::for_tag(&grid.crs_tag)
                .ok_or_else(|| RegistryError::UnsupportedCrs(grid.crs_tag.clone()))?;
            let (sx, sy) = proj.forward(site.lat, site.lon);
            let envelope = match site.aoi {
                Aoi::Bbox {
                    min_lon,
                    min_lat,
                    max_lon,
                    max_lat,
                } => {
                    let corners = [
                        proj.forward(min_lat, min_lon),
                        proj.forward(min_lat, max_lon),
                        proj.forward(max_lat, min_lon),
                        proj.forward(max_lat, max_lon),
                    ];
                    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
                        corners.iter().map(pick).fold(init, f)
                    };
                    Some((
                        fold(f64::min, f64::INFINITY, |c| c.0),
                        fold(f64::min, f64::INFINITY, |c| c.1),
                        fold(f64::max, f64::NEG_INFINITY, |c| c.0),
                        fold(f64::max, f64::NEG_INFINITY, |c| c.1),
                    ))
                }
                Aoi::Circle { .. } => None,
            };
            for row in 0..grid.height {
                for col in 0..grid.width {
                    let (x, y) = grid.pixel_center(row, col);
                    selected.push(match (site.aoi, envelope) {
                        (Aoi::Circle { radius_m }, _) => (x - sx).hypot(y - sy) <= radius_m,
                        (_, Some((x0, y0, x1, y1))) => {
                            (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
                        }
                        (Aoi::Bbox { .. }, None) => unreachable!("bbox always has an envelope"),
                    });
                }
            }
        }
    }
    Ok(PixelMask {
        width: grid.width,
        height: grid.height,
        selected,
    })
}

/// Forward projections for the projected CRSs the AOI selector understands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    WebMercator,
    Utm { zone: u8, north: bool },
}

impl Projection {
    pub fn for_tag(tag: &str) -> Option<Self> {
        match epsg_code(tag)? {
            3857 | 900913 => Some(Projection::WebMercator),
            c @ 32601..=32660 => Some(Projection::Utm {
                zone: (c - 32600) as u8,
                north: true,
            }),
            c @ 32701..=32760 => Some(Projection::Utm {
                zone: (c - 32700) as u8,
                north: false,
            }),
            _ => None,
        }
    }

    /// (easting, northing) in meters.
    pub fn forward(self, lat: f64, lon: f64) -> (f64, f64) {
        match self {
            Projection::WebMercator => {
                const R: f64 = 6_378_137.0;
                let phi = lat.clamp(-85.051_128_78, 85.051_128_78).to_radians();
                (
                    R * lon.to_radians(),
                    R * (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().ln(),
                )
            }
            Projection::Utm { zone, north } => utm_forward(lat, lon, zone, north),
        }
    }
}

// Transverse Mercator on WGS 84 via the Krüger series to third order in n.
fn utm_forward(lat: f64, lon: f64, zone: u8, north: bool) -> (f64, f64) {
    const A: f64 = 6_378_137.0;
    const F: f64 = 1.0 / 298.257_223_563;
    const K0: f64 = 0.9996;
    let n = F / (2.0 - F);
    let big_a = A / (1.0 + n) * (1.0 + n * n / 4.0 + n.powi(4) / 64.0);
    let alpha = [
        n / 2.0 - 2.0 * n * n / 3.0 + 5.0 * n.powi(3) / 16.0,
        13.0 * n * n / 48.0 - 3.0 * n.powi(3) / 5.0,
        61.0 * n.powi(3) / 240.0,
    ];
    let lon0 = (zone as f64 - 1.0) * 6.0 - 180.0 + 3.0;
    let phi = lat.to_radians();
    let dl = (lon - lon0).to_radians();
    let e2n = 2.0 * n.sqrt() / (1.0 + n);
    let t = (phi.sin().atanh() - e2n * (e2n * phi.sin()).atanh()).sinh();
    let xi = t.atan2(dl.cos());
    let eta = (dl.sin() / (1.0 + t * t).sqrt()).atanh();
    let (mut e, mut nn) = (eta, xi);
    for (j, a) in alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        e += a * (k * xi).cos() * (k * eta).sinh();
        nn += a * (k * xi).sin() * (k * eta).cosh();
    }
    let easting = 500_000.0 + K0 * big_a * e;
    let northing = K0 * big_a * nn + if north { 0.0 } else { 10_000_000.0 };
    (easting, northing)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,name,operator,status,lat,lon,aoi_kind,aoi_params,zone_id\n";

    fn site(aoi: Aoi) -> Site {
        Site {
            id: "s".into(),
            name: "s".into(),
            operator: "x".into(),
            status: SiteStatus::Existing,
            lat: 38.95,
            lon: -77.55,
            aoi,
            zone_id: None,
        }
    }

    #[test]
    fn lat_out_of_range_is_reported() {
        let doc = format!("{HEADER}a,A,Amazon,existing,91,-77.5,,,\n");
        let Err(RegistryError::Validation(issues)) = load_sites(&doc) else {
            panic!()
        };
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "lat");
        assert_eq!(issues[0].id.as_deref(), Some("a"));
    }

    #[test]
    fn duplicate_and_unknown_status_collected() {
        let doc = format!("{HEADER}a,A,x,existing,1,1,,,\na,B,x,planned,1,1,,,\n");
        let Err(RegistryError::Validation(issues)) = load_sites(&doc) else {
            panic!()
        };
        assert_eq!(issues.len(), 1, "{issues:?}");
        assert_eq!(issues[0].field, "status");
        let doc = format!("{HEADER}a,A,x,existing,1,1,,,\na,B,x,proposed,1,1,,,\n");
        let Err(RegistryError::Validation(issues)) = load_sites(&doc) else {
            panic!()
        };
        assert_eq!(issues[0].field, "id");
        assert_eq!(issues[0].record, 2);
    }

    #[test]
    fn aoi_params_parse() {
        let doc = format!(
            "{HEADER}a,A,x,existing,1,1,circle,500,Z\nb,B,x,proposed,1,1,bbox,0;0;2;2,\nc,C,x,proposed,1,1,,,\n"
        );
        let sites = load_sites(&doc).unwrap();
        assert_eq!(sites[0].aoi, Aoi::Circle { radius_m: 500.0 });
        assert_eq!(sites[0].zone_id.as_deref(), Some("Z"));
        assert_eq!(
            sites[1].aoi,
            Aoi::Bbox {
                min_lon: 0.0,
                min_lat: 0.0,
                max_lon: 2.0,
                max_lat: 2.0
            }
        );
        assert_eq!(sites[1].zone_id, None);
        assert_eq!(
            sites[2].aoi,
            Aoi::Circle {
                radius_m: DEFAULT_AOI_RADIUS_M
            }
        );
        let bad = format!("{HEADER}a,A,x,existing,1,1,bbox,2;0;0;2,\n");
        assert!(load_sites(&bad).is_err());
    }

    #[test]
    fn empty_feature_collection() {
        let sites = load_sites(r#"{"type":"FeatureCollection","features":[]}"#).unwrap();
        assert!(sites.is_empty());
    }

    #[test]
    fn geojson_points() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[-77.5,38.9]},
             "properties":{"id":"a","name":"A","operator":"Amazon","status":"existing",
                           "aoi_kind":"bbox","aoi_params":[-77.6,38.8,-77.4,39.0],"zone_id":"US-MIDA-PJM"}}]}"#;
        let sites = load_sites(doc).unwrap();
        assert_eq!(sites[0].lat, 38.9);
        assert_eq!(sites[0].lon, -77.5);
        assert!(matches!(sites[0].aoi, Aoi::Bbox { .. }));
    }

    #[test]
    fn bbox_covering_grid_selects_all() {
        let g = RasterGrid::new(2, 2, (-77.6, 39.0), (0.1, 0.1), "EPSG:4326");
        let s = site(Aoi::Bbox {
            min_lon: -77.6,
            min_lat: 38.8,
            max_lon: -77.4,
            max_lat: 39.0,
        });
        assert_eq!(aoi_mask(&s, &g).unwrap().count(), 4);
    }

    #[test]
    fn tiny_circle_on_pixel_center_selects_one() {
        let g = RasterGrid::new(5, 5, (-77.5525, 38.9525), (0.001, 0.001), "EPSG:4326");
        let mut s = site(Aoi::Circle { radius_m: 30.0 });
        let (x, y) = g.pixel_center(2, 2);
        s.lon = x;
        s.lat = y;
        let m = aoi_mask(&s, &g).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.selected[2 * 5 + 2]);
    }

    #[test]
    fn aoi_outside_grid_selects_none() {
        let g = RasterGrid::new(3, 3, (10.0, 10.0), (0.01, 0.01), "EPSG:4326");
        assert_eq!(
            aoi_mask(&site(Aoi::Circle { radius_m: 2000.0 }), &g)
                .unwrap()
                .count(),
            0
        );
    }

    #[test]
    fn unknown_crs_is_error() {
        let g = RasterGrid::new(1, 1, (0.0, 0.0), (1.0, 1.0), "");
        assert!(matches!(
            aoi_mask(&site(Aoi::Circle { radius_m: 1.0 }), &g),
            Err(RegistryError::UnsupportedCrs(_))
        ));
        let g = RasterGrid::new(1, 1, (0.0, 0.0), (1.0, 1.0), "EPSG:2263");
        assert!(aoi_mask(&site(Aoi::Circle { radius_m: 1.0 }), &g).is_err());
    }

    #[test]
    fn utm_reference_point() {
        // Central meridian of zone 18 on the equator maps to the false easting.
        let (e, n) = utm_forward(0.0, -75.0, 18, true);
        assert!((e - 500_000.0).abs() < 1e-6 && n.abs() < 1e-6);
        // 1 degree of latitude along the central meridian is ~110.6 km scaled by k0.
        let (_, n1) = utm_forward(1.0, -75.0, 18, true);
        assert!((n1 - 110_574.4 * 0.9996).abs() < 5.0, "{n1}");
        // Arcola, VA lies in zone 18N, roughly 279 km east of the false origin.
        let (e, n) = utm_forward(38.95, -77.53, 18, true);
        assert!((e - 280_500.0).abs() < 2_000.0, "{e}");
        assert!((n - 4_314_000.0).abs() < 5_000.0, "{n}");
    }

    #[test]
    fn projected_circle_uses_euclidean_distance() {
        let proj = Projection::Utm {
            zone: 18,
            north: true,
        };
        let (e, n) = proj.forward(38.95, -77.53);
        let g = RasterGrid::new(11, 11, (e - 165.0, n + 165.0), (30.0, 30.0), "EPSG:32618");
        let mut s = site(Aoi::Circle { radius_m: 61.0 });
        s.lat = 38.95;
        s.lon = -77.53;
        // Site sits on the center of pixel (5, 5).
        let m = aoi_mask(&s, &g).unwrap();
        let expected = (0..121)
            .filter(|i| {
                let (r, c) = ((i / 11) as f64 - 5.0, (i % 11) as f64 - 5.0);
                (r * 30.0).hypot(c * 30.0) <= 61.0
            })
            .count();
        assert_eq!(m.count(), expected);
    }
}
