//! In-process analytic models used as oracles and fixtures.

use crate::attribution::FeatureLayout;
use crate::image::Image;
use crate::wavelet::{dwt2d, pyramid_layout, Rect, WaveletSpec};

use super::{ModelError, ScoreFn};

/// Scores an image by its mean sample value, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanPixelModel;

impl ScoreFn for MeanPixelModel {
    fn model_id(&self) -> String {
        "builtin:mean".into()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        Ok(images.iter().map(|img| img.mean().clamp(0.0, 1.0)).collect())
    }
}

/// Ignores its input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel(pub f64);

impl ScoreFn for ConstantModel {
    fn model_id(&self) -> String {
        format!("builtin:constant:{}", self.0)
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        Ok(vec![self.0; images.len()])
    }
}

/// `logistic(alpha * E)` where `E` is the energy (sum of squared coefficients,
/// all channels) of the image's wavelet transform inside one feature cell.
///
/// Only the target cell influences the score, so its total index is the
/// planted ground truth for attribution tests.
#[derive(Debug, Clone)]
pub struct CellEnergyModel {
    spec: WaveletSpec,
    side: usize,
    grid_size: usize,
    target: usize,
    rect: Rect,
    alpha: f64,
}

impl CellEnergyModel {
    pub const DEFAULT_ALPHA: f64 = 0.1;

    pub fn new(layout: &FeatureLayout, target: usize, alpha: f64) -> Result<Self, ModelError> {
        if target >= layout.feature_count() {
            return Err(ModelError::Input(format!(
                "target cell {target} out of range for {} features",
                layout.feature_count()
            )));
        }
        Ok(Self {
            spec: *layout.spec(),
            side: layout.side(),
            grid_size: layout.grid_size(),
            target,
            rect: layout.feature(target).rect,
            alpha,
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cell_energy(&self, image: &Image) -> Result<f64, ModelError> {
        if image.width() != self.side || image.height() != self.side {
            return Err(ModelError::Input(format!(
                "expected {0}x{0} image, got {1}x{2}",
                self.side,
                image.width(),
                image.height()
            )));
        }
        let pyramid = dwt2d(image, &self.spec).map_err(|e| ModelError::Input(e.to_string()))?;
        let plane = pyramid_layout(&pyramid).map_err(|e| ModelError::Input(e.to_string()))?;
        let mut energy = 0.0;
        for p in &plane.planes {
            for r in self.rect.row..self.rect.row + self.rect.height {
                let row = &p[r * self.side + self.rect.col..r * self.side + self.rect.col + self.rect.width];
                energy += row.iter().map(|v| v * v).sum::<f64>();
            }
        }
        Ok(energy)
    }

    pub fn score(&self, image: &Image) -> Result<f64, ModelError> {
        Ok(logistic(self.alpha * self.cell_energy(image)?))
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ScoreFn for CellEnergyModel {
    fn model_id(&self) -> String {
        format!(
            "builtin:cell{}:grid{}:alpha{}:{:?}-J{}",
            self.target, self.grid_size, self.alpha, self.spec.family, self.spec.levels
        )
        .to_lowercase()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        images.iter().map(|img| self.score(img)).collect()
    }
}
