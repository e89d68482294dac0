//! Wavelet scale attribution.
//!
//! The image's coefficient plane is tiled into `K = g^2` features. Each row of
//! a quasi-Monte-Carlo Sobol design scales every feature's coefficients by a
//! mask value in `[0, 1]`; the perturbed pyramids are inverted, scored by the
//! model, and Jansen's estimator turns the `N (K + 2)` scores into one total
//! Sobol index per feature. Because coarse levels sit in the north-west corner
//! of the plane, the resulting map says both where the model looks and at
//! which scale.

mod engine;
mod layout;
mod render;
mod spatial;

pub use engine::{attribute, perturb_reconstruct, MaskedReconstructor, WcamConfig, WcamResult};
pub use layout::{featurize, Feature, FeatureLayout, FeaturePart, LayoutSummary};
pub use render::{render_comparison, render_heatmap, HeatmapMode, Palette, RenderOptions};
pub use spatial::{project_spatial, project_spatial_raw};

use thiserror::Error;

use crate::image::ImageError;
use crate::model::ModelError;
use crate::sensitivity::SensitivityError;
use crate::wavelet::WaveletError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error("invalid geometry: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model failed: {0}")]
    Model(#[from] ModelError),
    #[error("model is indifferent to this image: score variance {variance:e} around {f_empty}")]
    DegenerateVariance { f_empty: f64, variance: f64 },
    #[error(transparent)]
    Sensitivity(SensitivityError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("result serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl From<SensitivityError> for EngineError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::DegenerateVariance { f_empty, variance } => {
                EngineError::DegenerateVariance { f_empty, variance }
            }
            other => EngineError::Sensitivity(other),
        }
    }
}
