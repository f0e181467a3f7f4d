use std::collections::BTreeMap;
use std::io::Read;

use flate2::read::ZlibDecoder;
use serde::{Deserialize, Serialize};

use super::tags::*;
use super::{BandKind, RasterError, RasterGrid, SampleType};

/// Upper bound on decoded pixels; larger images are rejected before
/// allocating.
const MAX_PIXELS: u64 = 1 << 28;
/// Worst-case DEFLATE expansion used to reject implausible block sizes.
const MAX_INFLATE_RATIO: u64 = 1100;

/// Linear rescaling applied to every non-nodata sample: `v * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOffset {
    pub scale: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParseOptions {
    /// Off by default; raw sample values are returned.
    pub scale_offset: Option<ScaleOffset>,
}

pub fn parse_geotiff(bytes: &[u8]) -> Result<RasterGrid, RasterError> {
    parse_geotiff_with(bytes, &ParseOptions::default())
}

pub fn parse_geotiff_with(bytes: &[u8], opts: &ParseOptions) -> Result<RasterGrid, RasterError> {
    let ifd = Ifd::read(bytes)?;

    if let Some(spp) = ifd.opt_uint(SAMPLES_PER_PIXEL)? {
        if spp != 1 {
            let planar = ifd.opt_uint(PLANAR_CONFIG)?.unwrap_or(1);
            let detail = if planar == 2 {
                "planar multi-band layout"
            } else {
                "interleaved multi-band layout"
            };
            return Err(RasterError::unsupported(
                Some(SAMPLES_PER_PIXEL),
                format!("{detail} ({spp} samples)"),
            ));
        }
    }
    let compression = ifd.opt_uint(COMPRESSION)?.unwrap_or(COMPRESSION_NONE);
    let deflate = match compression {
        COMPRESSION_NONE => false,
        COMPRESSION_DEFLATE | COMPRESSION_DEFLATE_LEGACY => true,
        other => {
            return Err(RasterError::unsupported(
                Some(COMPRESSION),
                format!("compression scheme {other}"),
            ))
        }
    };
    if let Some(p) = ifd.opt_uint(PREDICTOR)? {
        if p != 1 {
            return Err(RasterError::unsupported(
                Some(PREDICTOR),
                format!("predictor {p}"),
            ));
        }
    }
    if let Some(p) = ifd.opt_uint(PHOTOMETRIC)? {
        if p > 1 {
            return Err(RasterError::unsupported(
                Some(PHOTOMETRIC),
                format!("photometric interpretation {p}"),
            ));
        }
    }

    let bits = ifd.opt_uint(BITS_PER_SAMPLE)?.unwrap_or(1);
    let format = ifd.opt_uint(SAMPLE_FORMAT)?.unwrap_or(1);
    let sample_type = u16::try_from(bits)
        .ok()
        .zip(u16::try_from(format).ok())
        .and_then(|(b, f)| SampleType::from_bits_and_format(b, f))
        .ok_or_else(|| {
            let tag = if matches!(format, 1..=3) {
                BITS_PER_SAMPLE
            } else {
                SAMPLE_FORMAT
            };
            RasterError::unsupported(Some(tag), format!("{bits}-bit samples of format {format}"))
        })?;

    let width = ifd.req_uint(IMAGE_WIDTH)?;
    let height = ifd.req_uint(IMAGE_LENGTH)?;
    if width == 0 || height == 0 {
        return Err(RasterError::malformed(format!(
            "zero image dimension {width}x{height}"
        )));
    }
    if width.saturating_mul(height) > MAX_PIXELS {
        return Err(RasterError::malformed(format!(
            "image dimensions {width}x{height} too large"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let sample_bytes = sample_type.bytes();

    let blocks = if ifd.has(TILE_OFFSETS) || ifd.has(TILE_WIDTH) {
        let tw = ifd.req_uint(TILE_WIDTH)?;
        let th = ifd.req_uint(TILE_LENGTH)?;
        if tw == 0 || th == 0 || tw.saturating_mul(th) > MAX_PIXELS {
            return Err(RasterError::malformed(format!(
                "invalid tile size {tw}x{th}"
            )));
        }
        let (tw, th) = (tw as usize, th as usize);
        let across = width.div_ceil(tw);
        let down = height.div_ceil(th);
        let offsets = ifd.uints(TILE_OFFSETS)?;
        let counts = ifd.uints(TILE_BYTE_COUNTS)?;
        if offsets.len() != across * down || counts.len() != offsets.len() {
            return Err(RasterError::malformed(format!(
                "expected {} tiles, found {} offsets and {} byte counts",
                across * down,
                offsets.len(),
                counts.len()
            )));
        }
        offsets
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (&off, &len))| {
                let block = BlockSpec {
                    row0: (i / across) * th,
                    col0: (i % across) * tw,
                    rows: th,
                    cols: tw,
                    stride: tw,
                };
                (block, off, len)
            })
            .collect::<Vec<_>>()
    } else {
        let rps = ifd
            .opt_uint(ROWS_PER_STRIP)?
            .unwrap_or(height as u64)
            .clamp(1, height as u64) as usize;
        let n = height.div_ceil(rps);
        let offsets = ifd.uints(STRIP_OFFSETS)?;
        let counts = ifd.uints(STRIP_BYTE_COUNTS)?;
        if offsets.len() != n || counts.len() != n {
            return Err(RasterError::malformed(format!(
                "expected {n} strips, found {} offsets and {} byte counts",
                offsets.len(),
                counts.len()
            )));
        }
        offsets
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (&off, &len))| {
                let row0 = i * rps;
                let block = BlockSpec {
                    row0,
                    col0: 0,
                    rows: rps.min(height - row0),
                    cols: width,
                    stride: width,
                };
                (block, off, len)
            })
            .collect()
    };

    let mut values = vec![0.0; width * height];
    for (block, off, len) in blocks {
        let data = slice_at(bytes, off, len).ok_or_else(|| {
            RasterError::malformed(format!(
                "data block at offset {off} (+{len}) outside file of {} bytes",
                bytes.len()
            ))
        })?;
        let needed = block.rows * block.stride * sample_bytes;
        let decoded;
        let raw: &[u8] = if deflate {
            if needed as u64 > (data.len() as u64).saturating_mul(MAX_INFLATE_RATIO) + 64 {
                return Err(RasterError::malformed(
                    "compressed block too small for its declared size",
                ));
            }
            let mut buf = Vec::with_capacity(needed);
            ZlibDecoder::new(data)
                .take(needed as u64)
                .read_to_end(&mut buf)
                .map_err(|e| RasterError::malformed(format!("deflate stream: {e}")))?;
            decoded = buf;
            &decoded
        } else {
            data
        };
        if raw.len() < needed {
            return Err(RasterError::malformed(format!(
                "data block holds {} bytes, {} required",
                raw.len(),
                needed
            )));
        }
        for r in 0..block.rows {
            let row = block.row0 + r;
            if row >= height {
                break;
            }
            for c in 0..block.cols {
                let col = block.col0 + c;
                if col >= width {
                    break;
                }
                let at = (r * block.stride + c) * sample_bytes;
                values[row * width + col] = ifd.sample(&raw[at..at + sample_bytes], sample_type);
            }
        }
    }

    let scale = ifd.doubles(MODEL_PIXEL_SCALE).map_err(|_| {
        RasterError::MissingGeoreference("ModelPixelScale (33550) absent or unreadable".into())
    })?;
    let tie = ifd.doubles(MODEL_TIEPOINT).map_err(|_| {
        RasterError::MissingGeoreference("ModelTiepoint (33922) absent or unreadable".into())
    })?;
    if scale.len() < 2 {
        return Err(RasterError::MissingGeoreference(
            "ModelPixelScale needs at least 2 values".into(),
        ));
    }
    if tie.len() < 6 {
        return Err(RasterError::MissingGeoreference(
            "ModelTiepoint needs 6 values".into(),
        ));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if !(sx > 0.0 && sx.is_finite() && sy > 0.0 && sy.is_finite()) {
        return Err(RasterError::malformed(format!(
            "non-positive pixel scale ({sx}, {sy})"
        )));
    }
    let origin_x = tie[3] - tie[0] * sx;
    let origin_y = tie[4] + tie[1] * sy;
    if !origin_x.is_finite() || !origin_y.is_finite() {
        return Err(RasterError::malformed("non-finite tiepoint"));
    }

    let meta = ifd
        .opt_ascii(IMAGE_DESCRIPTION)?
        .and_then(|d| GridMetadata::parse(&d))
        .unwrap_or_default();
    let crs_tag = match meta.crs {
        Some(c) => c,
        None => ifd
            .epsg_from_geokeys()
            .map(|c| format!("EPSG:{c}"))
            .unwrap_or_default(),
    };

    let mut nodata = match ifd.opt_ascii(GDAL_NODATA)? {
        Some(s) => Some(
            s.trim()
                .parse::<f64>()
                .map_err(|_| RasterError::malformed(format!("unparseable nodata value {s:?}")))?,
        ),
        None => None,
    };
    if nodata.is_none() && values.iter().any(|v| v.is_nan()) {
        nodata = Some(f64::NAN);
    }

    let mut grid = RasterGrid {
        width,
        height,
        origin_x,
        origin_y,
        pixel_scale_x: sx,
        pixel_scale_y: sy,
        crs_tag,
        values,
        nodata,
        band_kind: meta.band_kind,
        sample_type,
        timestamp: meta.timestamp,
    };
    if let Some(so) = opts.scale_offset {
        for i in 0..grid.values.len() {
            let v = grid.values[i];
            if !grid.is_nodata(v) {
                grid.values[i] = v * so.scale + so.offset;
            }
        }
        grid.sample_type = SampleType::F64;
    }
    grid.validate().map_err(|e| match e {
        RasterError::InvalidGrid(m) => RasterError::malformed(m),
        other => other,
    })?;
    Ok(grid)
}

struct BlockSpec {
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
    stride: usize,
}

fn slice_at(bytes: &[u8], off: u64, len: u64) -> Option<&[u8]> {
    let start = usize::try_from(off).ok()?;
    let end = start.checked_add(usize::try_from(len).ok()?)?;
    bytes.get(start..end)
}

#[derive(Debug, Default)]
struct GridMetadata {
    band_kind: BandKind,
    timestamp: f64,
    crs: Option<String>,
}

impl GridMetadata {
    fn parse(desc: &str) -> Option<Self> {
        let rest = desc.strip_prefix(DESCRIPTION_PREFIX)?.strip_prefix(';')?;
        let (kind, rest) = rest.strip_prefix("band_kind=")?.split_once(';')?;
        let (ts, rest) = rest.strip_prefix("timestamp=")?.split_once(';')?;
        let crs = rest.strip_prefix("crs=")?;
        let timestamp: f64 = ts.parse().ok()?;
        Some(GridMetadata {
            band_kind: BandKind::parse(kind)?,
            timestamp: if timestamp.is_finite() {
                timestamp
            } else {
                return None;
            },
            crs: Some(crs.to_string()),
        })
    }
}

struct Entry<'a> {
    field_type: u16,
    count: usize,
    data: &'a [u8],
}

struct Ifd<'a> {
    big: bool,
    entries: BTreeMap<u16, Entry<'a>>,
}

impl<'a> Ifd<'a> {
    fn read(bytes: &'a [u8]) -> Result<Self, RasterError> {
        let head = bytes
            .get(..4)
            .ok_or_else(|| RasterError::malformed("file shorter than TIFF header"))?;
        let big = match &head[..2] {
            b"II" => false,
            b"MM" => true,
            _ => return Err(RasterError::malformed("missing byte-order mark")),
        };
        let rd = Rd { big };
        match rd.u16(&head[2..4]) {
            42 => {}
            43 => return Err(RasterError::unsupported(None, "BigTIFF")),
            m => return Err(RasterError::malformed(format!("bad TIFF magic {m}"))),
        }
        let ifd_off = bytes
            .get(4..8)
            .map(|b| rd.u32(b) as usize)
            .ok_or_else(|| RasterError::malformed("truncated header"))?;
        let n = bytes
            .get(ifd_off..ifd_off.saturating_add(2))
            .map(|b| rd.u16(b) as usize)
            .ok_or_else(|| RasterError::malformed(format!("IFD offset {ifd_off} outside file")))?;
        let start = ifd_off + 2;
        let table = bytes
            .get(start..start + 12 * n)
            .ok_or_else(|| RasterError::malformed("truncated IFD"))?;
        let mut entries = BTreeMap::new();
        for raw in table.chunks_exact(12) {
            let tag = rd.u16(&raw[0..2]);
            let field_type = rd.u16(&raw[2..4]);
            let count = rd.u32(&raw[4..8]) as usize;
            let Some(size) = type_size(field_type) else {
                // Unknown field types are skipped as the TIFF baseline allows.
                continue;
            };
            let total = size
                .checked_mul(count)
                .ok_or_else(|| RasterError::malformed(format!("tag {tag} count overflows")))?;
            let data = if total <= 4 {
                &raw[8..8 + total]
            } else {
                let off = rd.u32(&raw[8..12]) as u64;
                slice_at(bytes, off, total as u64).ok_or_else(|| {
                    RasterError::malformed(format!(
                        "tag {tag} value at offset {off} (+{total}) outside file"
                    ))
                })?
            };
            entries.insert(
                tag,
                Entry {
                    field_type,
                    count,
                    data,
                },
            );
        }
        Ok(Ifd { big, entries })
    }

    fn has(&self, tag: u16) -> bool {
        self.entries.contains_key(&tag)
    }

    fn uints(&self, tag: u16) -> Result<Vec<u64>, RasterError> {
        let e = self
            .entries
            .get(&tag)
            .ok_or_else(|| RasterError::malformed(format!("required tag {tag} missing")))?;
        let rd = Rd { big: self.big };
        let vals = match e.field_type {
            TYPE_BYTE | TYPE_UNDEFINED => e.data.iter().map(|&b| b as u64).collect(),
            TYPE_SHORT => e.data.chunks_exact(2).map(|b| rd.u16(b) as u64).collect(),
            TYPE_LONG => e.data.chunks_exact(4).map(|b| rd.u32(b) as u64).collect(),
            other => {
                return Err(RasterError::malformed(format!(
                    "tag {tag} has non-integer field type {other}"
                )));
            }
        };
        Ok(vals)
    }

    fn opt_uint(&self, tag: u16) -> Result<Option<u64>, RasterError> {
        if !self.has(tag) {
            return Ok(None);
        }
        let v = self.uints(tag)?;
        // Per-sample tags repeat the same value; only single-sample data is read.
        v.first()
            .copied()
            .map(Some)
            .ok_or_else(|| RasterError::malformed(format!("tag {tag} has no values")))
    }

    fn req_uint(&self, tag: u16) -> Result<u64, RasterError> {
        self.opt_uint(tag)?
            .ok_or_else(|| RasterError::malformed(format!("required tag {tag} missing")))
    }

    fn doubles(&self, tag: u16) -> Result<Vec<f64>, RasterError> {
        let e = self
            .entries
            .get(&tag)
            .ok_or_else(|| RasterError::malformed(format!("tag {tag} missing")))?;
        let rd = Rd { big: self.big };
        match e.field_type {
            TYPE_DOUBLE => Ok(e.data.chunks_exact(8).map(|b| rd.f64(b)).collect()),
            TYPE_FLOAT => Ok(e.data.chunks_exact(4).map(|b| rd.f32(b) as f64).collect()),
            other => Err(RasterError::malformed(format!(
                "tag {tag} has non-float field type {other}"
            ))),
        }
    }

    fn opt_ascii(&self, tag: u16) -> Result<Option<String>, RasterError> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        if e.field_type != TYPE_ASCII {
            return Err(RasterError::malformed(format!("tag {tag} is not ASCII")));
        }
        let end = e.data.iter().position(|&b| b == 0).unwrap_or(e.data.len());
        Ok(Some(String::from_utf8_lossy(&e.data[..end]).into_owned()))
    }

    fn epsg_from_geokeys(&self) -> Option<u32> {
        let e = self.entries.get(&GEO_KEY_DIRECTORY)?;
        if e.field_type != TYPE_SHORT || e.count < 4 {
            return None;
        }
        let keys = self.uints(GEO_KEY_DIRECTORY).ok()?;
        let n = keys[3] as usize;
        let mut geographic = None;
        for k in keys[4..].chunks_exact(4).take(n) {
            let (id, loc, value) = (k[0] as u16, k[1], k[3]);
            if loc != 0 || value == 0 || value == 32767 {
                continue;
            }
            match id {
                PROJECTED_CS_TYPE => return Some(value as u32),
                GEOGRAPHIC_TYPE => geographic = Some(value as u32),
                _ => {}
            }
        }
        geographic
    }

    fn sample(&self, b: &[u8], ty: SampleType) -> f64 {
        let rd = Rd { big: self.big };
        match ty {
            SampleType::U8 => b[0] as f64,
            SampleType::U16 => rd.u16(b) as f64,
            SampleType::I16 => rd.u16(b) as i16 as f64,
            SampleType::F32 => rd.f32(b) as f64,
            SampleType::F64 => rd.f64(b),
        }
    }
}

#[derive(Clone, Copy)]
struct Rd {
    big: bool,
}

impl Rd {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        if self.big {
            u16::from_be_bytes(a)
        } else {
            u16::from_le_bytes(a)
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.big {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }

    fn f32(self, b: &[u8]) -> f32 {
        f32::from_bits(self.u32(b))
    }

    fn f64(self, b: &[u8]) -> f64 {
        let a: [u8; 8] = b[..8].try_into().expect("8-byte chunk");
        if self.big {
            f64::from_be_bytes(a)
        } else {
            f64::from_le_bytes(a)
        }
    }
}
