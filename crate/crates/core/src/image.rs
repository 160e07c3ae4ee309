//! Grayscale rasters, patches, measurement vectors and 8-bit image I/O.
//!
//! Intensities are kept as `f64` on the nominal `[0, 255]` scale. Files are
//! read as 8-bit PGM (P5) or PNG; colour inputs are reduced to the arithmetic
//! mean of their R, G and B channels.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};

/// Row-major grayscale raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, checking the length and finiteness of `pixels`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(
                format!("{} pixels", width * height),
                format!("{} pixels", pixels.len()),
            ));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("image pixels".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Unchecked constructor for buffers produced by the crate's own arithmetic.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::from_raw(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`, the convention used for operator input shapes.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.width, self.height, self.pixels.iter().map(|&p| f(p)).collect())
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Image::from_raw(self.width, self.height, pixels))
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Image {
        self.map(|p| p * factor)
    }

    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.pixels.iter().zip(&other.pixels).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.len() as f64
    }

    /// Population variance about the image mean.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pixels.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / self.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    /// Affine map of the pixel range onto `[0, 255]`. Constant images map to 0.
    pub fn rescale_min_max(&self) -> Image {
        let (lo, hi) = self.min_max();
        if hi - lo <= 0.0 {
            return Image::zeros(self.width, self.height);
        }
        let s = 255.0 / (hi - lo);
        self.map(|p| (p - lo) * s)
    }

    /// Cyclic shift: output(r, c) = input(r - dr, c - dc) with wrap-around.
    pub fn cyclic_shift(&self, dr: isize, dc: isize) -> Image {
        let (h, w) = (self.height as isize, self.width as isize);
        Image::from_fn(self.width, self.height, |r, c| {
            let sr = (r as isize - dr).rem_euclid(h) as usize;
            let sc = (c as isize - dc).rem_euclid(w) as usize;
            self.get(sr, sc)
        })
    }

    pub fn crop(&self, top: usize, left: usize, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {width}x{height} at ({top},{left}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(width, height, |r, c| self.get(top + r, left + c)))
    }

    /// Bilinear resampling with the half-pixel-centre convention:
    /// output pixel `x` samples the input at `(x + 0.5) * in / out - 0.5`,
    /// clamped to the valid range. Same-size resizing is the identity.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("resize to an empty image".into()));
        }
        let axis = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
            let scale = input as f64 / out as f64;
            (0..out)
                .map(|i| {
                    let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                    let i0 = src.floor() as usize;
                    let i1 = (i0 + 1).min(input - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let rows = axis(height, self.height);
        let cols = axis(width, self.width);
        Ok(Image::from_fn(width, height, |r, c| {
            let (r0, r1, tr) = rows[r];
            let (c0, c1, tc) = cols[c];
            let top = self.get(r0, c0) * (1.0 - tc) + self.get(r0, c1) * tc;
            let bottom = self.get(r1, c0) * (1.0 - tc) + self.get(r1, c1) * tc;
            top * (1.0 - tr) + bottom * tr
        }))
    }

    /// Pixels clamped to `[0, 255]` and rounded to the nearest integer.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| p.clamp(0.0, 255.0).round() as u8)
            .collect()
    }
}

/// A square block of pixels cut from an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub side: usize,
    pub values: Vec<f64>,
    /// `(row, col)` of the top-left pixel in the source image.
    pub origin: (usize, usize),
}

/// Compressive measurements `y = A x + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    values: Vec<f64>,
}

impl MeasurementVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty measurement vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement vector".into()));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let pixels: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| (f64::from(p.0[0]) + f64::from(p.0[1]) + f64::from(p.0[2])) / 3.0)
            .collect(),
    };
    Image::new(width, height, pixels)
}

/// Writes `img` as 8-bit PGM (`.pgm`) or PNG (`.png`), chosen by extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = img.to_bytes();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let unsupported = |reason: String| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason,
    };
    match ext.as_deref() {
        Some("pgm") => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            PnmEncoder::new(BufWriter::new(file))
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(&bytes, w, h, ExtendedColorType::L8)
                .map_err(|e| unsupported(e.to_string()))
        }
        Some("png") => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            image::codecs::png::PngEncoder::new(BufWriter::new(file))
                .write_image(&bytes, w, h, ExtendedColorType::L8)
                .map_err(|e| unsupported(e.to_string()))
        }
        _ => Err(unsupported("expected a .pgm or .png extension".into())),
    }
}
