//! Scoring interface between the attribution engine and a classifier.
//!
//! The engine only ever sees [`ScoreFn`]: a batch of images in, one
//! probability per image out. Built-in analytic models live in [`builtin`];
//! external models are reached through the newline-delimited JSON protocol in
//! [`wire`], either over a child process's stdio or over HTTP ([`remote`]).

pub mod builtin;
pub mod remote;
pub mod wire;

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::image::Image;

pub use builtin::{CellEnergyModel, ConstantModel, MeanPixelModel};
pub use remote::{connect, AdapterConfig, HttpScorer, StdioScorer, Transport, ENDPOINT_ENV};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch of {len} exceeds the adapter limit of {max}")]
    BatchTooLarge { len: usize, max: usize },
    #[error("scorer timed out after {0} ms")]
    Timeout(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("score {value} at batch position {index} is not a probability")]
    ScoreRange { index: usize, value: f64 },
    #[error("scorer returned {got} scores for {expected} images")]
    CountMismatch { expected: usize, got: usize },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("scorer reported: {0}")]
    Remote(String),
    #[error("invalid model input: {0}")]
    Input(String),
}

impl ModelError {
    /// Whether re-sending the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, ModelError::Timeout(_) | ModelError::Transport(_))
    }
}

/// A classifier seen as a black box: images in, probabilities out.
pub trait ScoreFn: Send + Sync {
    fn model_id(&self) -> String;

    /// Largest batch the model accepts in one call.
    fn max_batch(&self) -> usize {
        usize::MAX
    }

    /// One score per image, in input order. Callers should go through
    /// [`score_batch`], which enforces the contract.
    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError>;
}

impl<T: ScoreFn + ?Sized> ScoreFn for Box<T> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        (**self).score_batch(images)
    }
}

impl<T: ScoreFn + ?Sized> ScoreFn for &T {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        (**self).score_batch(images)
    }
}

/// Scores `images` and checks the result: one finite score in `[0, 1]` per image.
pub fn score_batch(model: &dyn ScoreFn, images: &[Image]) -> Result<Vec<f64>, ModelError> {
    if images.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if images.len() > model.max_batch() {
        return Err(ModelError::BatchTooLarge {
            len: images.len(),
            max: model.max_batch(),
        });
    }
    let scores = model.score_batch(images)?;
    check_scores(&scores, images.len())?;
    Ok(scores)
}

pub fn check_scores(scores: &[f64], expected: usize) -> Result<(), ModelError> {
    if scores.len() != expected {
        return Err(ModelError::CountMismatch {
            expected,
            got: scores.len(),
        });
    }
    match scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        Some(index) => Err(ModelError::ScoreRange {
            index,
            value: scores[index],
        }),
        None => Ok(()),
    }
}

/// Wraps a model and counts every image it scores.
pub struct CountingModel<M> {
    inner: M,
    images: AtomicUsize,
    calls: AtomicUsize,
}

impl<M: ScoreFn> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            images: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn images_scored(&self) -> usize {
        self.images.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: ScoreFn> ScoreFn for CountingModel<M> {
    fn model_id(&self) -> String {
        self.inner.model_id()
    }

    fn max_batch(&self) -> usize {
        self.inner.max_batch()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.images.fetch_add(images.len(), Ordering::SeqCst);
        self.inner.score_batch(images)
    }
}

/// Adapts a closure; handy for tests and quick experiments.
pub struct FnModel<F> {
    id: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&Image) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> ScoreFn for FnModel<F>
where
    F: Fn(&Image) -> f64 + Send + Sync,
{
    fn model_id(&self) -> String {
        self.id.clone()
    }

    fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
        Ok(images.iter().map(&self.f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_scorer_on_grey_image() {
        let img = Image::filled(8, 8, 3, 0.5).unwrap();
        assert_eq!(score_batch(&MeanPixelModel, &[img]).unwrap(), vec![0.5]);
    }

    #[test]
    fn nan_score_is_a_range_error() {
        let model = FnModel::new("nan", |_| f64::NAN);
        let img = Image::filled(4, 4, 1, 0.5).unwrap();
        assert!(matches!(
            score_batch(&model, &[img]),
            Err(ModelError::ScoreRange { index: 0, .. })
        ));
        let model = FnModel::new("big", |_| 1.5);
        let img = Image::filled(4, 4, 1, 0.5).unwrap();
        assert!(matches!(score_batch(&model, &[img]), Err(ModelError::ScoreRange { .. })));
    }

    #[test]
    fn batch_limits_are_enforced() {
        assert_eq!(score_batch(&MeanPixelModel, &[]).unwrap_err(), ModelError::EmptyBatch);
        struct Small;
        impl ScoreFn for Small {
            fn model_id(&self) -> String {
                "small".into()
            }
            fn max_batch(&self) -> usize {
                2
            }
            fn score_batch(&self, images: &[Image]) -> Result<Vec<f64>, ModelError> {
                Ok(vec![0.5; images.len()])
            }
        }
        let imgs = vec![Image::filled(2, 2, 1, 0.0).unwrap(); 3];
        assert_eq!(
            score_batch(&Small, &imgs).unwrap_err(),
            ModelError::BatchTooLarge { len: 3, max: 2 }
        );
    }

    #[test]
    fn counting_wrapper_counts_images() {
        let model = CountingModel::new(MeanPixelModel);
        let imgs = vec![Image::filled(2, 2, 1, 0.25).unwrap(); 5];
        score_batch(&model, &imgs[..3]).unwrap();
        score_batch(&model, &imgs[3..]).unwrap();
        assert_eq!(model.images_scored(), 5);
        assert_eq!(model.calls(), 2);
    }

    #[test]
    fn count_mismatch_is_detected() {
        assert_eq!(
            check_scores(&[0.5], 2).unwrap_err(),
            ModelError::CountMismatch { expected: 2, got: 1 }
        );
    }
}
