//! Channel-planar float images.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected 1 or 3 channels, got {0}")]
    Channels(usize),
    #[error("data length {got} does not match {width}x{height}x{channels}")]
    Length {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
    #[error("zero-sized image")]
    Empty,
    #[error("image io: {0}")]
    Io(#[from] image::ImageError),
}

/// A `width x height` image with 1 or 3 channels.
///
/// Samples are stored channel-planar: all of channel 0 row-major, then
/// channel 1, and so on. Valid model inputs live in `[0, 1]`, but the type
/// does not enforce the range because unclamped reconstructions may leave it.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Length {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self, ImageError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from `f(channel, row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max)
    }

    /// SHA-256 over the dimensions and the little-endian `f32` samples.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for dim in [self.width, self.height, self.channels] {
            hasher.update((dim as u64).to_le_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Crops the largest centered `width x height` window.
    pub fn center_crop(&self, width: usize, height: usize) -> Image {
        let width = width.min(self.width);
        let height = height.min(self.height);
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        Image::from_fn(width, height, self.channels, |c, y, x| self.get(c, y + y0, x + x0))
            .expect("crop of a valid image is valid")
    }

    /// Decodes an 8-bit image file. Grayscale inputs stay single-channel, everything
    /// else is converted to RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Image, ImageError> {
        let dynamic = image::open(path)?;
        Ok(Self::from_dynamic(&dynamic))
    }

    pub fn from_dynamic(dynamic: &image::DynamicImage) -> Image {
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        match dynamic.color() {
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16 => {
                let gray = dynamic.to_luma8();
                Image::from_fn(w, h, 1, |_, y, x| gray.get_pixel(x as u32, y as u32)[0] as f32 / 255.0)
                    .expect("decoded image has valid dimensions")
            }
            _ => {
                let rgb = dynamic.to_rgb8();
                Image::from_fn(w, h, 3, |c, y, x| rgb.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
                    .expect("decoded image has valid dimensions")
            }
        }
    }

    /// Quantizes to 8 bits (after clamping to `[0, 1]`).
    pub fn to_dynamic(&self) -> image::DynamicImage {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            let buf = image::GrayImage::from_fn(w, h, |x, y| image::Luma([q(self.get(0, y as usize, x as usize))]));
            image::DynamicImage::ImageLuma8(buf)
        } else {
            let buf = image::RgbImage::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                image::Rgb([q(self.get(0, y, x)), q(self.get(1, y, x)), q(self.get(2, y, x))])
            });
            image::DynamicImage::ImageRgb8(buf)
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}
