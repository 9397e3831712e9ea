//! On-disk formats: PFM float maps, 8-bit RGB PNG, 16-bit PNG normal maps.
//!
//! Invalid pixels are stored as NaN in PFM files. In 16-bit normal PNGs they
//! are stored as `(0, 0, 0)`, which no unit vector encodes to.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::maps::{NormalMap, ScalarMap};
use crate::numeric::norm3;

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    /// Nonzero; its sign encodes the byte order (negative = little-endian).
    pub scale: f32,
    /// Interleaved samples, rows top to bottom.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!(
                "PFM has 1 or 3 channels, not {channels}"
            )));
        }
        if width * height * channels != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} PFM needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            scale: -1.0,
            data,
        })
    }
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

/// Reads one whitespace-delimited header token and consumes exactly one
/// trailing whitespace byte.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str> {
    while *pos < bytes.len() && is_space(bytes[*pos]) {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !is_space(bytes[*pos]) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, format!("missing PFM {what}")));
    }
    if *pos >= bytes.len() {
        return Err(Error::parse(*pos, format!("header ends after PFM {what}")));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::parse(start, format!("non-ASCII PFM {what}")))?;
    *pos += 1;
    Ok(tok)
}

pub fn read_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos, "magic")? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::parse(0, format!("bad PFM magic '{other}'"))),
    };
    let dim_offset = pos;
    let mut dim = |what: &str| -> Result<usize> {
        let at = pos;
        let tok = header_token(bytes, &mut pos, what)?;
        tok.parse::<usize>()
            .map_err(|_| Error::parse(at, format!("bad PFM {what} '{tok}'")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let scale_offset = pos;
    let tok = header_token(bytes, &mut pos, "scale")?;
    let scale: f32 = tok
        .parse()
        .map_err(|_| Error::parse(scale_offset, format!("bad PFM scale '{tok}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(
            scale_offset,
            "PFM scale must be finite and nonzero",
        ));
    }

    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| {
            Error::parse(
                dim_offset,
                format!("PFM dimensions {width}x{height} overflow"),
            )
        })?;
    let needed = samples * 4;
    let available = bytes.len() - pos;
    if available < needed {
        return Err(Error::parse(
            bytes.len(),
            format!("short PFM payload: need {needed} bytes from offset {pos}, have {available}"),
        ));
    }

    let little = scale < 0.0;
    let payload = &bytes[pos..pos + needed];
    let row_len = width * channels;
    let mut data = vec![0.0f32; samples];
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let arr = [b[0], b[1], b[2], b[3]];
            data[row * row_len + k] = if little {
                f32::from_le_bytes(arr)
            } else {
                f32::from_be_bytes(arr)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        scale,
        data,
    })
}

/// Always writes little-endian (negative scale), rows bottom to top.
pub fn write_pfm(img: &PfmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let scale = -img.scale.abs();
    let mut out = format!("{magic}\n{} {}\n{scale:?}\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    let row_len = img.width * img.channels;
    if row_len > 0 {
        for row in img.data.chunks_exact(row_len).rev() {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn scalar_map_from_pfm<K>(img: &PfmImage) -> Result<ScalarMap<K>> {
    if img.channels != 1 {
        return Err(Error::Format(format!(
            "expected a 1-channel PFM, got {} channels",
            img.channels
        )));
    }
    ScalarMap::from_values(img.width, img.height, img.data.clone())
}

pub fn scalar_map_to_pfm<K>(map: &ScalarMap<K>) -> PfmImage {
    PfmImage {
        width: map.width(),
        height: map.height(),
        channels: 1,
        scale: -1.0,
        data: map.values().to_vec(),
    }
}

pub fn normal_map_from_pfm(img: &PfmImage) -> Result<NormalMap> {
    if img.channels != 3 {
        return Err(Error::Format(format!(
            "expected a 3-channel PFM, got {} channels",
            img.channels
        )));
    }
    let values = img
        .data
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    NormalMap::from_values(img.width, img.height, values)
}

pub fn normal_map_to_pfm(map: &NormalMap) -> PfmImage {
    PfmImage {
        width: map.width(),
        height: map.height(),
        channels: 3,
        scale: -1.0,
        data: map.values().iter().flatten().copied().collect(),
    }
}

/// Decodes an 8-bit RGB (or RGBA, alpha dropped) PNG.
pub fn read_png_rgb8(bytes: &[u8]) -> Result<RgbImage> {
    match image::load_from_memory_with_format(bytes, ImageFormat::Png)? {
        DynamicImage::ImageRgb8(img) => Ok(img),
        DynamicImage::ImageRgba8(img) => Ok(DynamicImage::ImageRgba8(img).into_rgb8()),
        other => Err(Error::Format(format!(
            "expected an 8-bit RGB PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn write_png_rgb8(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// `round((n + 1) / 2 * 65535)` per channel.
pub fn encode_normal_u16(n: [f32; 3]) -> [u16; 3] {
    n.map(|c| ((f64::from(c).clamp(-1.0, 1.0) + 1.0) / 2.0 * 65535.0).round() as u16)
}

/// Inverse of [`encode_normal_u16`] followed by renormalization; `None` for
/// the invalid marker or a degenerate vector.
pub fn decode_normal_u16(v: [u16; 3]) -> Option<[f32; 3]> {
    if v == [0, 0, 0] {
        return None;
    }
    let n = v.map(|c| f64::from(c) / 65535.0 * 2.0 - 1.0);
    let len = norm3(n);
    (len > 0.0).then(|| n.map(|c| (c / len) as f32))
}

pub fn write_normal_png16(map: &NormalMap) -> Result<Vec<u8>> {
    let (w, h) = (map.width() as u32, map.height() as u32);
    let img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
        Rgb(map
            .get(x as usize, y as usize)
            .map_or([0, 0, 0], encode_normal_u16))
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_normal_png16(bytes: &[u8]) -> Result<NormalMap> {
    let img = match image::load_from_memory_with_format(bytes, ImageFormat::Png)? {
        DynamicImage::ImageRgb16(img) => img,
        other => {
            return Err(Error::Format(format!(
                "expected a 16-bit RGB PNG, got {:?}",
                other.color()
            )))
        }
    };
    let mut map = NormalMap::masked(img.width() as usize, img.height() as usize);
    for (x, y, p) in img.enumerate_pixels() {
        if let Some(n) = decode_normal_u16(p.0) {
            map.set(x as usize, y as usize, n);
        }
    }
    Ok(map)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_pfm(path: &Path) -> Result<PfmImage> {
    read_pfm(&read_file(path)?)
}

pub fn load_scalar_map<K>(path: &Path) -> Result<ScalarMap<K>> {
    scalar_map_from_pfm(&load_pfm(path)?)
}

pub fn load_normal_map(path: &Path) -> Result<NormalMap> {
    let bytes = read_file(path)?;
    if bytes.starts_with(b"\x89PNG") {
        return read_normal_png16(&bytes);
    }
    normal_map_from_pfm(&read_pfm(&bytes)?)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    read_png_rgb8(&read_file(path)?)
}
