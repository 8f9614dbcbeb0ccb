//! Image files (PNG, binary PPM, PFM) and statistics crops.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageError, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Encoding, Plane, RgbImage};

/// Smallest crop edge, in pixels.
pub const MIN_CROP: usize = 8;

/// Axis-aligned rectangle in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CropRect {
    /// Checks that the rectangle lies inside a `width x height` image and is
    /// at least [`MIN_CROP`] on each side.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.w < MIN_CROP || self.h < MIN_CROP {
            return Err(Error::InvalidConfig(format!(
                "crop {self} is smaller than {MIN_CROP}x{MIN_CROP}"
            )));
        }
        let inside = self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height);
        if !inside {
            return Err(Error::OutOfBounds {
                rect: self.to_string(),
                width,
                height,
            });
        }
        Ok(())
    }

    pub fn full(width: usize, height: usize) -> Self {
        CropRect {
            x: 0,
            y: 0,
            w: width,
            h: height,
        }
    }
}

impl fmt::Display for CropRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl FromStr for CropRect {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("crop `{s}`: {e}")))?;
        let [x, y, w, h] = parts[..] else {
            return Err(Error::InvalidConfig(format!("crop `{s}` must be x,y,w,h")));
        };
        Ok(CropRect { x, y, w, h })
    }
}

/// Read-only window into an image, used for statistics.
#[derive(Debug, Clone, Copy)]
pub struct CropView<'a> {
    img: &'a RgbImage,
    rect: CropRect,
}

impl<'a> CropView<'a> {
    /// The whole image when `rect` is `None`.
    pub fn new(img: &'a RgbImage, rect: Option<CropRect>) -> Result<Self> {
        let rect = match rect {
            Some(r) => {
                r.validate(img.width, img.height)?;
                r
            }
            None => CropRect::full(img.width, img.height),
        };
        Ok(CropView { img, rect })
    }

    pub fn rect(&self) -> CropRect {
        self.rect
    }

    pub fn len(&self) -> usize {
        self.rect.w * self.rect.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        let r = self.rect;
        let w = self.img.width;
        let plane = &self.img.planes[c];
        (r.y..r.y + r.h).flat_map(move |y| plane[y * w + r.x..y * w + r.x + r.w].iter().copied())
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.values(c).sum::<f64>() / self.len() as f64
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane {
            width: self.rect.w,
            height: self.rect.h,
            data: self.values(c).collect(),
        }
    }

    /// Materialized copy of the window.
    pub fn to_image(&self) -> RgbImage {
        RgbImage {
            width: self.rect.w,
            height: self.rect.h,
            planes: std::array::from_fn(|c| self.values(c).collect()),
            encoding: self.img.encoding,
        }
    }
}

/// Materialized crop of a single plane.
pub fn crop_plane(p: &Plane, rect: CropRect) -> Result<Plane> {
    rect.validate(p.width, p.height)?;
    let data = (rect.y..rect.y + rect.h)
        .flat_map(|y| p.data[y * p.width + rect.x..y * p.width + rect.x + rect.w].iter().copied())
        .collect();
    Ok(Plane {
        width: rect.w,
        height: rect.h,
        data,
    })
}

/// Output file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png8,
    Png16,
    Ppm8,
    Ppm16,
    /// Little-endian 32-bit float portable float map.
    Pfm,
}

impl ImageFormat {
    /// Format for a file extension; integer formats default to 16 bits.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(ImageFormat::Png16),
            "ppm" => Ok(ImageFormat::Ppm16),
            "pfm" => Ok(ImageFormat::Pfm),
            _ => Err(Error::UnsupportedFormat(format!("extension `{ext}`"))),
        }
    }

    /// Same container at the given integer depth; PFM is unaffected.
    pub fn with_depth(self, bits: u8) -> Self {
        match (self, bits) {
            (ImageFormat::Png8 | ImageFormat::Png16, 8) => ImageFormat::Png8,
            (ImageFormat::Png8 | ImageFormat::Png16, _) => ImageFormat::Png16,
            (ImageFormat::Ppm8 | ImageFormat::Ppm16, 8) => ImageFormat::Ppm8,
            (ImageFormat::Ppm8 | ImageFormat::Ppm16, _) => ImageFormat::Ppm16,
            (f, _) => f,
        }
    }

    pub fn mime(self) -> &'static str {
        match self {
            ImageFormat::Png8 | ImageFormat::Png16 => "image/png",
            ImageFormat::Ppm8 | ImageFormat::Ppm16 => "image/x-portable-pixmap",
            ImageFormat::Pfm => "image/x-portable-floatmap",
        }
    }
}

/// Round-half-up quantization of `v` in `[0, 1]` to `0..=max`.
#[inline]
pub fn quantize(v: f64, max: u32) -> u32 {
    let q = (v * max as f64 + 0.5).floor();
    if q.is_nan() {
        0
    } else {
        q.clamp(0.0, max as f64) as u32
    }
}

fn from_image_error(e: ImageError) -> Error {
    match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::CorruptFile(other.to_string()),
    }
}

fn from_rgb_u16(w: u32, h: u32, raw: &[u16], max: f64) -> RgbImage {
    let n = (w * h) as usize;
    let planes = std::array::from_fn(|c| (0..n).map(|i| raw[3 * i + c] as f64 / max).collect());
    RgbImage {
        width: w as usize,
        height: h as usize,
        planes,
        encoding: Encoding::Gamma,
    }
}

/// Decodes PNG, binary PPM or PFM bytes, sniffing the format.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.starts_with(b"PF\n") || bytes.starts_with(b"Pf\n") || bytes.starts_with(b"PF ") || bytes.starts_with(b"Pf ") {
        return read_pfm(bytes);
    }
    let format = if bytes.starts_with(b"\x89PNG") {
        image::ImageFormat::Png
    } else if bytes.starts_with(b"P6") {
        image::ImageFormat::Pnm
    } else {
        return Err(Error::UnsupportedFormat("unrecognized file signature".into()));
    };
    let img = image::load_from_memory_with_format(bytes, format).map_err(from_image_error)?;
    let eight_bit = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_)
    );
    if eight_bit {
        log::warn!("8-bit input; expect banding after strong transfers (prefer 16-bit or float)");
        let rgb = img.to_rgb8();
        let wide: Vec<u16> = rgb.as_raw().iter().map(|&v| v as u16).collect();
        Ok(from_rgb_u16(rgb.width(), rgb.height(), &wide, 255.0))
    } else {
        let rgb = img.to_rgb16();
        Ok(from_rgb_u16(rgb.width(), rgb.height(), rgb.as_raw(), 65535.0))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_image(&std::fs::read(path)?)
}

/// Encodes an image; integer formats clamp to `[0, 1]` and quantize with
/// round-half-up.
pub fn encode_image(img: &RgbImage, format: ImageFormat) -> Result<Vec<u8>> {
    let (w, h) = (img.width as u32, img.height as u32);
    let n = img.len();
    let interleave = |max: u32| -> Vec<u32> {
        (0..3 * n).map(|k| quantize(img.planes[k % 3][k / 3], max)).collect()
    };
    match format {
        ImageFormat::Png8 => {
            let raw: Vec<u8> = interleave(255).into_iter().map(|v| v as u8).collect();
            let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(w, h, raw).expect("buffer size");
            let mut out = Cursor::new(Vec::new());
            buf.write_to(&mut out, image::ImageFormat::Png).map_err(from_image_error)?;
            Ok(out.into_inner())
        }
        ImageFormat::Png16 => {
            let raw: Vec<u16> = interleave(65535).into_iter().map(|v| v as u16).collect();
            let buf: ImageBuffer<Rgb<u16>, _> = ImageBuffer::from_raw(w, h, raw).expect("buffer size");
            let mut out = Cursor::new(Vec::new());
            buf.write_to(&mut out, image::ImageFormat::Png).map_err(from_image_error)?;
            Ok(out.into_inner())
        }
        ImageFormat::Ppm8 => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend(interleave(255).into_iter().map(|v| v as u8));
            Ok(out)
        }
        ImageFormat::Ppm16 => {
            let mut out = format!("P6\n{w} {h}\n65535\n").into_bytes();
            for v in interleave(65535) {
                out.extend((v as u16).to_be_bytes());
            }
            Ok(out)
        }
        ImageFormat::Pfm => Ok(write_pfm(img)),
    }
}

pub fn save_image(img: &RgbImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    std::fs::write(path, encode_image(img, format)?)?;
    Ok(())
}

/// Little-endian color PFM; rows are stored bottom to top.
pub fn write_pfm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(12 * img.len());
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            let i = y * img.width + x;
            for c in 0..3 {
                out.extend((img.planes[c][i] as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Reads color (`PF`) or grayscale (`Pf`) PFM of either byte order.
pub fn read_pfm(bytes: &[u8]) -> Result<RgbImage> {
    let corrupt = |m: &str| Error::CorruptFile(format!("PFM: {m}"));
    // Width, height and scale follow the magic, each ended by whitespace;
    // pixel data starts after the single whitespace byte closing the scale.
    let mut pos = 2;
    let mut tokens = Vec::with_capacity(3);
    while tokens.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos == bytes.len() {
            return Err(corrupt("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| corrupt("bad header"))?);
    }
    pos += 1;
    let channels = if bytes[1] == b'F' { 3 } else { 1 };
    let w: usize = tokens[0].parse().map_err(|_| corrupt("bad width"))?;
    let h: usize = tokens[1].parse().map_err(|_| corrupt("bad height"))?;
    let scale: f64 = tokens[2].parse().map_err(|_| corrupt("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(corrupt("zero scale"));
    }
    let little = scale < 0.0;
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4 * channels))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let data = bytes.get(pos..pos + need).ok_or_else(|| corrupt("truncated pixel data"))?;
    let mut planes: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; w * h]);
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) } as f64;
        let px = k / channels;
        let (row, x) = (px / w, px % w);
        let i = (h - 1 - row) * w + x;
        if channels == 3 {
            planes[k % 3][i] = v;
        } else {
            for p in planes.iter_mut() {
                p[i] = v;
            }
        }
    }
    RgbImage::new(w, h, planes, Encoding::Gamma)
}
