//! Scale-aware augmentations: a fixed Gaussian blur, random cancellation of
//! wavelet coefficients, and the two chained.
//!
//! Blurring removes fine-scale detail outright; cancelling a random fraction of
//! coefficients removes information at random scales and locations, so a model
//! cannot count on any single fine-scale cue being present.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::wavelet::{dwt2d, idwt2d, plane_to_pyramid, pyramid_layout, WaveletError, WaveletSpec};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error("invalid augmentation parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Blur standard deviation in pixels.
    pub sigma: f64,
    /// Fraction of each channel's wavelet coefficients set to zero.
    pub drop_rate: f64,
    pub spec: WaveletSpec,
    pub seed: u64,
    /// Clamp the reconstruction to `[0, 1]`.
    pub clamp: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            drop_rate: 0.2,
            spec: WaveletSpec::haar(3),
            seed: 0,
            clamp: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(AugmentError::Parameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(AugmentError::Parameter(format!(
                "drop_rate must lie in [0, 1], got {}",
                self.drop_rate
            )));
        }
        Ok(())
    }
}

/// What [`wavelet_perturb`] did to each channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub coefficients_per_channel: usize,
    /// Cancelled coefficient count, one entry per channel.
    pub cancelled: Vec<usize>,
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Half-sample symmetric index: `-1 -> 0`, `n -> n - 1`, periodic beyond.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with symmetric boundaries. `sigma = 0` is the identity.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image, AugmentError> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(AugmentError::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    let mut tmp = vec![0.0f64; w * h];
    for c in 0..image.channels() {
        let src = image.plane(c);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * src[y * w + reflect(x as isize + t as isize - radius, w)] as f64)
                    .sum();
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * tmp[reflect(y as isize + t as isize - radius, h) * w + x])
                    .sum::<f64>() as f32;
            }
        }
    }
    Ok(out)
}

/// Zeroes `floor(drop_rate * C)` of each channel's `C` wavelet coefficients,
/// chosen uniformly without replacement and independently per channel, then
/// reconstructs.
pub fn wavelet_perturb(image: &Image, config: &AugmentConfig) -> Result<(Image, PerturbReport), AugmentError> {
    config.validate()?;
    let mut plane = pyramid_layout(&dwt2d(image, &config.spec)?)?;
    let count = image.width() * image.height();
    let drop = (config.drop_rate * count as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cancelled = Vec::with_capacity(plane.planes.len());
    for p in &mut plane.planes {
        let chosen = sample(&mut rng, count, drop);
        for i in chosen.iter() {
            p[i] = 0.0;
        }
        cancelled.push(chosen.len());
    }
    let mut out = idwt2d(&plane_to_pyramid(&plane, &config.spec)?)?;
    if config.clamp {
        out.clamp_unit();
    }
    Ok((
        out,
        PerturbReport {
            coefficients_per_channel: count,
            cancelled,
        },
    ))
}

/// Blur, then cancel coefficients. The seed only drives the cancellation.
pub fn blur_wp(image: &Image, config: &AugmentConfig) -> Result<(Image, PerturbReport), AugmentError> {
    config.validate()?;
    wavelet_perturb(&gaussian_blur(image, config.sigma)?, config)
}

/// A randomized image transform, composable into training pipelines.
pub trait Transform: Send + Sync {
    fn apply(&self, image: &Image, rng: &mut ChaCha8Rng) -> Result<Image, AugmentError>;
}

pub struct Blur(pub f64);

impl Transform for Blur {
    fn apply(&self, image: &Image, _rng: &mut ChaCha8Rng) -> Result<Image, AugmentError> {
        gaussian_blur(image, self.0)
    }
}

/// Wavelet cancellation with a fresh seed per call drawn from the pipeline RNG.
pub struct WaveletPerturb(pub AugmentConfig);

impl Transform for WaveletPerturb {
    fn apply(&self, image: &Image, rng: &mut ChaCha8Rng) -> Result<Image, AugmentError> {
        let cfg = AugmentConfig {
            seed: rng.gen(),
            ..self.0.clone()
        };
        Ok(wavelet_perturb(image, &cfg)?.0)
    }
}

/// Square crop of side `size` at a random position.
pub struct RandomCrop(pub usize);

impl Transform for RandomCrop {
    fn apply(&self, image: &Image, rng: &mut ChaCha8Rng) -> Result<Image, AugmentError> {
        let size = self.0;
        if size == 0 || size > image.width() || size > image.height() {
            return Err(AugmentError::Parameter(format!(
                "crop {size} does not fit {}x{}",
                image.width(),
                image.height()
            )));
        }
        let x0 = rng.gen_range(0..=image.width() - size);
        let y0 = rng.gen_range(0..=image.height() - size);
        Ok(Image::from_fn(size, size, image.channels(), |c, y, x| image.get(c, y + y0, x + x0))
            .expect("crop dimensions are valid"))
    }
}

/// Rotation by a random multiple of 90 degrees.
pub struct RandomRot90;

impl Transform for RandomRot90 {
    fn apply(&self, image: &Image, rng: &mut ChaCha8Rng) -> Result<Image, AugmentError> {
        let (w, h) = (image.width(), image.height());
        let turns: u8 = rng.gen_range(0..4);
        let (ow, oh) = if turns % 2 == 0 { (w, h) } else { (h, w) };
        let out = Image::from_fn(ow, oh, image.channels(), |c, y, x| match turns {
            0 => image.get(c, y, x),
            1 => image.get(c, h - 1 - x, y),
            2 => image.get(c, h - 1 - y, w - 1 - x),
            _ => image.get(c, x, w - 1 - y),
        });
        Ok(out.expect("rotation keeps a valid shape"))
    }
}

/// Per-channel `(v - mean) / std`. The result leaves `[0, 1]`; use it last.
pub struct Normalize {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalize {
    pub fn imagenet() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl Transform for Normalize {
    fn apply(&self, image: &Image, _rng: &mut ChaCha8Rng) -> Result<Image, AugmentError> {
        let mut out = image.clone();
        for c in 0..image.channels() {
            let (m, s) = (self.mean[c], self.std[c]);
            out.plane_mut(c).iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

/// Applies transforms in order with one seeded RNG.
#[derive(Default)]
pub struct Compose {
    steps: Vec<Box<dyn Transform>>,
}

impl Compose {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then(mut self, t: impl Transform + 'static) -> Self {
        self.steps.push(Box::new(t));
        self
    }

    pub fn run(&self, image: &Image, seed: u64) -> Result<Image, AugmentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps.iter().try_fold(image.clone(), |img, t| t.apply(&img, &mut rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn noise(side: usize, channels: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(side, side, channels, |_, _, _| rng.gen::<f32>()).unwrap()
    }

    #[test]
    fn kernel_is_normalized_with_three_sigma_radius() {
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(0.5).len(), 5);
    }

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-7, 2), 1);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = noise(16, 3, 1);
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::filled(16, 16, 3, 0.37).unwrap();
        let out = gaussian_blur(&img, 2.0).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        assert!(gaussian_blur(&noise(8, 1, 0), -1.0).is_err());
        let cfg = AugmentConfig {
            drop_rate: 1.5,
            ..AugmentConfig::default()
        };
        assert!(wavelet_perturb(&noise(8, 1, 0), &cfg).is_err());
    }

    #[test]
    fn zero_rate_is_identity() {
        let img = noise(64, 3, 2);
        let cfg = AugmentConfig {
            drop_rate: 0.0,
            ..AugmentConfig::default()
        };
        let (out, report) = wavelet_perturb(&img, &cfg).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
        assert_eq!(report.cancelled, vec![0, 0, 0]);
    }

    #[test]
    fn full_rate_gives_zero_image() {
        let img = noise(64, 3, 3);
        let cfg = AugmentConfig {
            drop_rate: 1.0,
            ..AugmentConfig::default()
        };
        let (out, report) = wavelet_perturb(&img, &cfg).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(report.cancelled, vec![4096; 3]);
    }

    #[test]
    fn twenty_percent_cancels_819_of_4096() {
        let img = noise(64, 3, 4);
        let cfg = AugmentConfig {
            clamp: false,
            ..AugmentConfig::default()
        };
        let (out, report) = wavelet_perturb(&img, &cfg).unwrap();
        assert_eq!(report.coefficients_per_channel, 4096);
        assert_eq!(report.cancelled, vec![819; 3]);
        // independent count: coefficients that were non-zero and now are zero
        let before = pyramid_layout(&dwt2d(&img, &cfg.spec).unwrap()).unwrap();
        let after = pyramid_layout(&dwt2d(&out, &cfg.spec).unwrap()).unwrap();
        for (b, a) in before.planes.iter().zip(&after.planes) {
            let zeroed = b.iter().zip(a).filter(|(b, a)| b.abs() > 1e-9 && a.abs() < 1e-5).count();
            assert_eq!(zeroed, 819);
        }
    }

    #[test]
    fn channels_get_independent_selections() {
        let img = noise(32, 3, 5);
        let cfg = AugmentConfig {
            clamp: false,
            ..AugmentConfig::default()
        };
        let (out, _) = wavelet_perturb(&img, &cfg).unwrap();
        let after = pyramid_layout(&dwt2d(&out, &cfg.spec).unwrap()).unwrap();
        let zero_sets: Vec<Vec<usize>> = after
            .planes
            .iter()
            .map(|p| p.iter().enumerate().filter(|(_, v)| v.abs() < 1e-5).map(|(i, _)| i).collect())
            .collect();
        assert_ne!(zero_sets[0], zero_sets[1]);
        assert_ne!(zero_sets[1], zero_sets[2]);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let img = noise(32, 1, 6);
        let mut seen = HashSet::new();
        for seed in 0..100 {
            let cfg = AugmentConfig {
                seed,
                clamp: false,
                ..AugmentConfig::default()
            };
            let (a, _) = wavelet_perturb(&img, &cfg).unwrap();
            let (b, _) = wavelet_perturb(&img, &cfg).unwrap();
            assert_eq!(a, b);
            let plane = pyramid_layout(&dwt2d(&a, &cfg.spec).unwrap()).unwrap();
            let zeros: Vec<usize> = plane.planes[0]
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() < 1e-5)
                .map(|(i, _)| i)
                .collect();
            assert!(seen.insert(zeros), "duplicate selection for seed {seed}");
        }
    }

    #[test]
    fn output_stays_in_unit_range() {
        for seed in 0..10 {
            let img = noise(32, 3, seed);
            let cfg = AugmentConfig {
                seed,
                ..AugmentConfig::default()
            };
            let (out, _) = blur_wp(&img, &cfg).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn blur_wp_composition() {
        let img = noise(32, 3, 7);
        let none = AugmentConfig {
            sigma: 0.0,
            drop_rate: 0.0,
            ..AugmentConfig::default()
        };
        assert!(blur_wp(&img, &none).unwrap().0.max_abs_diff(&img) < 1e-6);

        let blur_only = gaussian_blur(&img, 2.0).unwrap();
        let no_drop = AugmentConfig {
            drop_rate: 0.0,
            ..AugmentConfig::default()
        };
        assert!(blur_wp(&img, &no_drop).unwrap().0.max_abs_diff(&blur_only) < 1e-6);
        let (with_drop, _) = blur_wp(&img, &AugmentConfig::default()).unwrap();
        assert!(with_drop.max_abs_diff(&blur_only) > 1e-3);
        assert_eq!(blur_wp(&img, &AugmentConfig::default()).unwrap().0, with_drop);
    }

    #[test]
    fn expectation_approaches_scaled_image() {
        // E[output] = (1 - rate) * input when every coefficient survives with
        // probability 1 - rate and reconstruction is linear (no clamping)
        let img = noise(16, 1, 8);
        let seeds = 1000;
        let mut mean = vec![0.0f64; 256];
        for seed in 0..seeds {
            let cfg = AugmentConfig {
                seed,
                clamp: false,
                ..AugmentConfig::default()
            };
            let (out, _) = wavelet_perturb(&img, &cfg).unwrap();
            mean.iter_mut().zip(out.data()).for_each(|(m, &v)| *m += v as f64 / seeds as f64);
        }
        let max_err = mean
            .iter()
            .zip(img.data())
            .map(|(m, &v)| (m - 0.8 * v as f64).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.05, "max deviation {max_err}");
    }

    #[test]
    fn pipeline_transforms() {
        let img = noise(64, 3, 9);
        let pipe = Compose::new()
            .then(RandomCrop(32))
            .then(RandomRot90)
            .then(Blur(1.0))
            .then(WaveletPerturb(AugmentConfig::default()))
            .then(Normalize::imagenet());
        let a = pipe.run(&img, 3).unwrap();
        assert_eq!((a.width(), a.height(), a.channels()), (32, 32, 3));
        assert_eq!(pipe.run(&img, 3).unwrap(), a);
        assert!(RandomCrop(65).apply(&img, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let img = Image::from_fn(4, 2, 1, |_, y, x| (y * 4 + x) as f32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cur = img.clone();
        let mut turns = 0;
        // compose rotations until back at the start; sizes alternate for non-square input
        for _ in 0..64 {
            cur = RandomRot90.apply(&cur, &mut rng).unwrap();
            turns += 1;
            if cur == img {
                break;
            }
        }
        assert!(turns <= 64);
        assert_eq!(cur, img);
    }
}
