//! Wavelet-domain attribution for black-box image classifiers.
//!
//! Total Sobol indices are estimated over multiplicative masks applied to
//! regions of an image's multilevel wavelet transform, telling where in the
//! image and at which scale a model's score is decided. The crate also ships
//! the wavelet-based augmentations and the evaluation arithmetic used to study
//! robustness under a change of imagery provider.

pub mod attribution;
pub mod augment;
pub mod image;
pub mod metrics;
pub mod model;
pub mod sensitivity;
pub mod wavelet;

pub use crate::attribution::{attribute, featurize, WcamConfig, WcamResult};
pub use crate::image::{Image, ImageError};
pub use crate::model::ScoreFn;
pub use crate::wavelet::{dwt2d, idwt2d, WaveletSpec};
