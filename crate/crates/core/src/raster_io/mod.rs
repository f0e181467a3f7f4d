//! Georeferenced single-band rasters and a constrained GeoTIFF codec.
//!
//! The codec covers classic TIFF (either byte order) with one sample per
//! pixel, strip or tile layout, no compression or DEFLATE, and the
//! `ModelPixelScale` / `ModelTiepoint` georeference tags. Nodata follows the
//! GDAL convention (ASCII tag 42113).

mod qa;
mod reader;
mod tags;
mod writer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use qa::{decode_qa, qa_word, QaBitSpec, QaSpecError};
pub use reader::{parse_geotiff, parse_geotiff_with, ParseOptions, ScaleOffset};
pub use writer::{write_geotiff, write_geotiff_with, ByteOrder, Compression, Layout, WriteOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("unsupported TIFF feature{}: {detail}", tag.map(|t| format!(" (tag {t})")).unwrap_or_default())]
    UnsupportedFeature { tag: Option<u16>, detail: String },

    #[error("malformed TIFF: {0}")]
    MalformedFile(String),

    #[error("missing georeference: {0}")]
    MissingGeoreference(String),

    #[error("invalid raster grid: {0}")]
    InvalidGrid(String),
}

impl RasterError {
    pub(crate) fn unsupported(tag: Option<u16>, detail: impl Into<String>) -> Self {
        RasterError::UnsupportedFeature {
            tag,
            detail: detail.into(),
        }
    }

    pub(crate) fn malformed(detail: impl Into<String>) -> Self {
        RasterError::MalformedFile(detail.into())
    }
}

/// What the values of a band represent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// Dimensionless surface reflectance, typically 0..1.
    Reflectance,
    /// Radiance in nW·cm⁻²·sr⁻¹ (nighttime lights).
    Radiance,
    /// Dimensionless derived index.
    Index,
    /// Unsigned quality bitmask payload.
    QaBits,
    #[default]
    Other,
}

impl BandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BandKind::Reflectance => "reflectance",
            BandKind::Radiance => "radiance",
            BandKind::Index => "index",
            BandKind::QaBits => "qa_bits",
            BandKind::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "reflectance" => BandKind::Reflectance,
            "radiance" => BandKind::Radiance,
            "index" => BandKind::Index,
            "qa_bits" => BandKind::QaBits,
            "other" => BandKind::Other,
            _ => return None,
        })
    }
}

/// On-disk sample encoding. Every value of a grid must be exactly
/// representable in its sample type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleType {
    U8,
    U16,
    I16,
    F32,
    F64,
}

impl SampleType {
    pub const ALL: [SampleType; 5] = [
        SampleType::U8,
        SampleType::U16,
        SampleType::I16,
        SampleType::F32,
        SampleType::F64,
    ];

    pub fn bytes(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::U16 | SampleType::I16 => 2,
            SampleType::F32 => 4,
            SampleType::F64 => 8,
        }
    }

    pub(crate) fn bits_and_format(self) -> (u16, u16) {
        match self {
            SampleType::U8 => (8, 1),
            SampleType::U16 => (16, 1),
            SampleType::I16 => (16, 2),
            SampleType::F32 => (32, 3),
            SampleType::F64 => (64, 3),
        }
    }

    pub(crate) fn from_bits_and_format(bits: u16, format: u16) -> Option<Self> {
        Some(match (bits, format) {
            (8, 1) => SampleType::U8,
            (16, 1) => SampleType::U16,
            (16, 2) => SampleType::I16,
            (32, 3) => SampleType::F32,
            (64, 3) => SampleType::F64,
            _ => return None,
        })
    }

    /// True when `v` survives a store/load cycle through this type unchanged.
    pub fn represents(self, v: f64) -> bool {
        match self {
            SampleType::U8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            SampleType::U16 => v.fract() == 0.0 && (0.0..=65535.0).contains(&v),
            SampleType::I16 => v.fract() == 0.0 && (-32768.0..=32767.0).contains(&v),
            SampleType::F32 => v.is_nan() || (v as f32) as f64 == v,
            SampleType::F64 => true,
        }
    }
}

/// Broad class of a coordinate reference system tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrsKind {
    /// Longitude/latitude in degrees.
    Geographic,
    /// Planar map units (meters).
    Projected,
}

/// Classifies an opaque CRS tag such as `EPSG:4326`.
///
/// Only a handful of common geographic codes are recognised; any other
/// EPSG code is taken to be projected. Returns `None` for an empty or
/// unrecognisable tag.
pub fn crs_kind(tag: &str) -> Option<CrsKind> {
    let t = tag.trim();
    if t.is_empty() {
        return None;
    }
    let upper = t.to_ascii_uppercase();
    if upper == "OGC:CRS84" || upper == "CRS84" || upper == "WGS84" {
        return Some(CrsKind::Geographic);
    }
    let code = epsg_code(t)?;
    match code {
        4326 | 4269 | 4267 | 4258 | 4283 | 4617 | 4674 | 4019 | 4030 => Some(CrsKind::Geographic),
        _ => Some(CrsKind::Projected),
    }
}

/// Extracts the numeric code from `EPSG:<n>` (case-insensitive).
pub fn epsg_code(tag: &str) -> Option<u32> {
    let t = tag.trim();
    let (prefix, rest) = t.split_once(':')?;
    if !prefix.eq_ignore_ascii_case("EPSG") {
        return None;
    }
    rest.trim().parse().ok()
}

/// A georeferenced 2-D grid holding one band at one timestamp.
///
/// `values` is row-major, `origin_*` is the upper-left corner of the
/// upper-left pixel and rows run south (decreasing y).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_scale_x: f64,
    pub pixel_scale_y: f64,
    pub crs_tag: String,
    pub values: Vec<f64>,
    pub nodata: Option<f64>,
    pub band_kind: BandKind,
    pub sample_type: SampleType,
    /// Days since the reference epoch.
    pub timestamp: f64,
}

impl RasterGrid {
    /// A zero-filled grid with the given geometry.
    pub fn new(
        width: usize,
        height: usize,
        origin: (f64, f64),
        pixel_scale: (f64, f64),
        crs_tag: impl Into<String>,
    ) -> Self {
        RasterGrid {
            width,
            height,
            origin_x: origin.0,
            origin_y: origin.1,
            pixel_scale_x: pixel_scale.0,
            pixel_scale_y: pixel_scale.1,
            crs_tag: crs_tag.into(),
            values: vec![0.0; width * height],
            nodata: None,
            band_kind: BandKind::Other,
            sample_type: SampleType::F64,
            timestamp: 0.0,
        }
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Self {
        self.values = values;
        self
    }

    pub fn with_nodata(mut self, nodata: Option<f64>) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn with_band_kind(mut self, kind: BandKind) -> Self {
        self.band_kind = kind;
        self
    }

    pub fn with_sample_type(mut self, sample_type: SampleType) -> Self {
        self.sample_type = sample_type;
        self
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row < self.height && col < self.width {
            self.values.get(row * self.width + col).copied()
        } else {
            None
        }
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    /// Map coordinates of the center of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_scale_x,
            self.origin_y - (row as f64 + 0.5) * self.pixel_scale_y,
        )
    }

    /// Map extent as (min_x, min_y, max_x, max_y).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_y - self.height as f64 * self.pixel_scale_y,
            self.origin_x + self.width as f64 * self.pixel_scale_x,
            self.origin_y,
        )
    }

    /// Same dimensions, origin, pixel size and CRS.
    pub fn same_geometry(&self, other: &RasterGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
            && self.pixel_scale_x == other.pixel_scale_x
            && self.pixel_scale_y == other.pixel_scale_y
            && self.crs_tag == other.crs_tag
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let bad = |m: String| Err(RasterError::InvalidGrid(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        let expected = self.width.checked_mul(self.height);
        if expected != Some(self.values.len()) {
            return bad(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.width,
                self.height
            ));
        }
        if !(self.pixel_scale_x > 0.0 && self.pixel_scale_x.is_finite())
            || !(self.pixel_scale_y > 0.0 && self.pixel_scale_y.is_finite())
        {
            return bad(format!(
                "pixel scale must be positive and finite, got ({}, {})",
                self.pixel_scale_x, self.pixel_scale_y
            ));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return bad("origin must be finite".into());
        }
        if !self.timestamp.is_finite() {
            return bad("timestamp must be finite".into());
        }
        if let Some(nd) = self.nodata {
            if !self.sample_type.represents(nd) {
                return bad(format!(
                    "nodata {nd} not representable as {:?}",
                    self.sample_type
                ));
            }
        }
        for (i, &v) in self.values.iter().enumerate() {
            if self.is_nodata(v) {
                continue;
            }
            if !v.is_finite() {
                return bad(format!("non-finite value {v} at index {i}"));
            }
            if !self.sample_type.represents(v) {
                return bad(format!(
                    "value {v} at index {i} not representable as {:?}",
                    self.sample_type
                ));
            }
        }
        Ok(())
    }
}

/// Field-for-field equality; values compare bit-exact, and two nodata
/// pixels compare equal regardless of payload.
impl PartialEq for RasterGrid {
    fn eq(&self, other: &Self) -> bool {
        let nodata_eq = match (self.nodata, other.nodata) {
            (None, None) => true,
            (Some(a), Some(b)) => (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits(),
            _ => false,
        };
        nodata_eq
            && self.same_geometry(other)
            && self.band_kind == other.band_kind
            && self.sample_type == other.sample_type
            && self.timestamp.to_bits() == other.timestamp.to_bits()
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(&a, &b)| {
                (self.is_nodata(a) && other.is_nodata(b)) || a.to_bits() == b.to_bits()
            })
    }
}
