use std::io::Write;

use flate2::write::ZlibEncoder;

use super::tags::*;
use super::{crs_kind, epsg_code, CrsKind, RasterError, RasterGrid, SampleType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    LittleEndian,
    BigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Deflate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Strips {
        rows_per_strip: u32,
    },
    /// Tile edges must be positive multiples of 16.
    Tiles {
        width: u32,
        height: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    pub layout: Layout,
    pub compression: Compression,
    pub byte_order: ByteOrder,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            layout: Layout::Strips { rows_per_strip: 64 },
            compression: Compression::None,
            byte_order: ByteOrder::LittleEndian,
        }
    }
}

/// Encodes a grid as an uncompressed little-endian striped GeoTIFF.
pub fn write_geotiff(grid: &RasterGrid) -> Result<Vec<u8>, RasterError> {
    write_geotiff_with(grid, &WriteOptions::default())
}

pub fn write_geotiff_with(grid: &RasterGrid, opts: &WriteOptions) -> Result<Vec<u8>, RasterError> {
    grid.validate()?;
    if grid.crs_tag.contains('\0') {
        return Err(RasterError::InvalidGrid(
            "crs tag contains a NUL byte".into(),
        ));
    }
    if grid.width > u32::MAX as usize || grid.height > u32::MAX as usize {
        return Err(RasterError::InvalidGrid(
            "dimensions exceed 32-bit TIFF limits".into(),
        ));
    }
    let enc = Enc {
        big: opts.byte_order == ByteOrder::BigEndian,
    };
    let fill = grid.nodata.unwrap_or(0.0);

    let blocks = match opts.layout {
        Layout::Strips { rows_per_strip } => {
            if rows_per_strip == 0 {
                return Err(RasterError::InvalidGrid(
                    "rows_per_strip must be positive".into(),
                ));
            }
            let rps = (rows_per_strip as usize).min(grid.height);
            (0..grid.height)
                .step_by(rps)
                .map(|r0| {
                    let r1 = (r0 + rps).min(grid.height);
                    let mut raw =
                        Vec::with_capacity((r1 - r0) * grid.width * grid.sample_type.bytes());
                    for &v in &grid.values[r0 * grid.width..r1 * grid.width] {
                        enc.sample(&mut raw, grid.sample_type, v);
                    }
                    raw
                })
                .collect::<Vec<_>>()
        }
        Layout::Tiles {
            width: tw,
            height: th,
        } => {
            if tw == 0 || th == 0 || tw % 16 != 0 || th % 16 != 0 {
                return Err(RasterError::InvalidGrid(format!(
                    "tile size {tw}x{th} must be positive multiples of 16"
                )));
            }
            let (tw, th) = (tw as usize, th as usize);
            let mut out = Vec::new();
            for tr in 0..grid.height.div_ceil(th) {
                for tc in 0..grid.width.div_ceil(tw) {
                    let mut raw = Vec::with_capacity(tw * th * grid.sample_type.bytes());
                    for r in tr * th..(tr + 1) * th {
                        for c in tc * tw..(tc + 1) * tw {
                            let v = if r < grid.height && c < grid.width {
                                grid.values[r * grid.width + c]
                            } else {
                                fill
                            };
                            enc.sample(&mut raw, grid.sample_type, v);
                        }
                    }
                    out.push(raw);
                }
            }
            out
        }
    };

    let blocks = match opts.compression {
        Compression::None => blocks,
        Compression::Deflate => blocks
            .into_iter()
            .map(|raw| {
                let mut z = ZlibEncoder::new(Vec::new(), flate2::Compression::new(6));
                z.write_all(&raw).and_then(|_| z.finish())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| RasterError::InvalidGrid(format!("deflate failed: {e}")))?,
    };

    let mut out = Vec::new();
    out.extend_from_slice(if enc.big { b"MM" } else { b"II" });
    enc.u16(&mut out, 42);
    enc.u32(&mut out, 0); // IFD offset, patched below

    let mut offsets = Vec::with_capacity(blocks.len());
    let mut counts = Vec::with_capacity(blocks.len());
    for b in &blocks {
        offsets.push(out.len() as u64);
        counts.push(b.len() as u64);
        out.extend_from_slice(b);
        if out.len() % 2 == 1 {
            out.push(0);
        }
    }
    if out.len() > u32::MAX as usize {
        return Err(RasterError::InvalidGrid(
            "encoded image exceeds classic TIFF size".into(),
        ));
    }

    let (bits, format) = grid.sample_type.bits_and_format();
    let mut entries: Vec<Entry> = vec![
        Entry::longs(IMAGE_WIDTH, &[grid.width as u64], enc),
        Entry::longs(IMAGE_LENGTH, &[grid.height as u64], enc),
        Entry::shorts(BITS_PER_SAMPLE, &[bits], enc),
        Entry::shorts(
            COMPRESSION,
            &[match opts.compression {
                Compression::None => COMPRESSION_NONE as u16,
                Compression::Deflate => COMPRESSION_DEFLATE as u16,
            }],
            enc,
        ),
        Entry::shorts(PHOTOMETRIC, &[1], enc),
        Entry::ascii(IMAGE_DESCRIPTION, &description(grid)),
        Entry::shorts(SAMPLES_PER_PIXEL, &[1], enc),
        Entry::shorts(PLANAR_CONFIG, &[1], enc),
        Entry::shorts(SAMPLE_FORMAT, &[format], enc),
        Entry::doubles(
            MODEL_PIXEL_SCALE,
            &[grid.pixel_scale_x, grid.pixel_scale_y, 0.0],
            enc,
        ),
        Entry::doubles(
            MODEL_TIEPOINT,
            &[0.0, 0.0, 0.0, grid.origin_x, grid.origin_y, 0.0],
            enc,
        ),
    ];
    match opts.layout {
        Layout::Strips { rows_per_strip } => {
            let rps = (rows_per_strip as usize).min(grid.height) as u64;
            entries.push(Entry::longs(STRIP_OFFSETS, &offsets, enc));
            entries.push(Entry::longs(ROWS_PER_STRIP, &[rps], enc));
            entries.push(Entry::longs(STRIP_BYTE_COUNTS, &counts, enc));
        }
        Layout::Tiles { width, height } => {
            entries.push(Entry::longs(TILE_WIDTH, &[width as u64], enc));
            entries.push(Entry::longs(TILE_LENGTH, &[height as u64], enc));
            entries.push(Entry::longs(TILE_OFFSETS, &offsets, enc));
            entries.push(Entry::longs(TILE_BYTE_COUNTS, &counts, enc));
        }
    }
    if let Some(geokeys) = geokey_directory(&grid.crs_tag) {
        entries.push(Entry::shorts(GEO_KEY_DIRECTORY, &geokeys, enc));
    }
    if let Some(nd) = grid.nodata {
        entries.push(Entry::ascii(GDAL_NODATA, &format!("{nd}")));
    }
    entries.sort_by_key(|e| e.tag);

    let ifd_offset = out.len();
    out[4..8].copy_from_slice(&enc.u32_bytes(ifd_offset as u32));
    let mut extra_offset = ifd_offset + 2 + 12 * entries.len() + 4;
    let mut extra = Vec::new();
    enc.u16(&mut out, entries.len() as u16);
    for e in &entries {
        enc.u16(&mut out, e.tag);
        enc.u16(&mut out, e.field_type);
        enc.u32(&mut out, e.count);
        if e.data.len() <= 4 {
            let mut inline = e.data.clone();
            inline.resize(4, 0);
            out.extend_from_slice(&inline);
        } else {
            enc.u32(&mut out, extra_offset as u32);
            extra.extend_from_slice(&e.data);
            extra_offset += e.data.len();
            if e.data.len() % 2 == 1 {
                extra.push(0);
                extra_offset += 1;
            }
        }
    }
    enc.u32(&mut out, 0); // no further IFDs
    out.extend_from_slice(&extra);
    if out.len() > u32::MAX as usize {
        return Err(RasterError::InvalidGrid(
            "encoded image exceeds classic TIFF size".into(),
        ));
    }
    Ok(out)
}

fn description(grid: &RasterGrid) -> String {
    format!(
        "{DESCRIPTION_PREFIX};band_kind={};timestamp={};crs={}",
        grid.band_kind.as_str(),
        grid.timestamp,
        grid.crs_tag
    )
}

/// Minimal GeoKey directory for `EPSG:<n>` tags so that other GeoTIFF
/// readers see the CRS.
fn geokey_directory(crs_tag: &str) -> Option<Vec<u16>> {
    let code = u16::try_from(epsg_code(crs_tag)?).ok()?;
    let (model, key) = match crs_kind(crs_tag)? {
        CrsKind::Geographic => (2, GEOGRAPHIC_TYPE),
        CrsKind::Projected => (1, PROJECTED_CS_TYPE),
    };
    Some(vec![
        1,
        1,
        0,
        3, //
        GT_MODEL_TYPE,
        0,
        1,
        model, //
        GT_RASTER_TYPE,
        0,
        1,
        1, //
        key,
        0,
        1,
        code,
    ])
}

struct Entry {
    tag: u16,
    field_type: u16,
    count: u32,
    data: Vec<u8>,
}

impl Entry {
    fn shorts(tag: u16, vals: &[u16], enc: Enc) -> Self {
        let mut data = Vec::with_capacity(vals.len() * 2);
        vals.iter().for_each(|&v| enc.u16(&mut data, v));
        Entry {
            tag,
            field_type: TYPE_SHORT,
            count: vals.len() as u32,
            data,
        }
    }

    fn longs(tag: u16, vals: &[u64], enc: Enc) -> Self {
        let mut data = Vec::with_capacity(vals.len() * 4);
        vals.iter().for_each(|&v| enc.u32(&mut data, v as u32));
        Entry {
            tag,
            field_type: TYPE_LONG,
            count: vals.len() as u32,
            data,
        }
    }

    fn doubles(tag: u16, vals: &[f64], enc: Enc) -> Self {
        let mut data = Vec::with_capacity(vals.len() * 8);
        vals.iter().for_each(|&v| enc.f64(&mut data, v));
        Entry {
            tag,
            field_type: TYPE_DOUBLE,
            count: vals.len() as u32,
            data,
        }
    }

    fn ascii(tag: u16, s: &str) -> Self {
        let mut data = s.as_bytes().to_vec();
        data.push(0);
        Entry {
            tag,
            field_type: TYPE_ASCII,
            count: data.len() as u32,
            data,
        }
    }
}

#[derive(Clone, Copy)]
struct Enc {
    big: bool,
}

impl Enc {
    fn u16(self, out: &mut Vec<u8>, v: u16) {
        out.extend_from_slice(&if self.big {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        });
    }

    fn u32_bytes(self, v: u32) -> [u8; 4] {
        if self.big {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        }
    }

    fn u32(self, out: &mut Vec<u8>, v: u32) {
        out.extend_from_slice(&self.u32_bytes(v));
    }

    fn f64(self, out: &mut Vec<u8>, v: f64) {
        out.extend_from_slice(&if self.big {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        });
    }

    fn sample(self, out: &mut Vec<u8>, ty: SampleType, v: f64) {
        match ty {
            SampleType::U8 => out.push(v as u8),
            SampleType::U16 => self.u16(out, v as u16),
            SampleType::I16 => self.u16(out, (v as i16) as u16),
            SampleType::F32 => {
                let b = v as f32;
                out.extend_from_slice(&if self.big {
                    b.to_be_bytes()
                } else {
                    b.to_le_bytes()
                });
            }
            SampleType::F64 => self.f64(out, v),
        }
    }
}
