use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::{featurize, FeatureLayout, LayoutSummary};
use super::EngineError;
use crate::image::Image;
use crate::model::{score_batch, ScoreFn};
use crate::sensitivity::{build_design, jansen_total, DesignScores, Scramble};
use crate::wavelet::{dwt2d, idwt2d, plane_to_pyramid, pyramid_layout, CoefficientPlane, WaveletSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WcamConfig {
    pub spec: WaveletSpec,
    /// Features per side of the plane grid; `K = grid_size^2`.
    pub grid_size: usize,
    /// Rows per design matrix.
    pub n: usize,
    pub seed: u64,
    /// Digital-shift scrambling of the design, keyed by `seed`.
    pub scramble: bool,
    pub batch_size: usize,
    /// Batches scored concurrently.
    pub in_flight: usize,
    pub clamp_reconstruction: bool,
}

impl Default for WcamConfig {
    fn default() -> Self {
        Self {
            spec: WaveletSpec::haar(3),
            grid_size: 8,
            n: 32,
            seed: 0,
            scramble: false,
            batch_size: 64,
            in_flight: 1,
            clamp_reconstruction: true,
        }
    }
}

impl WcamConfig {
    pub fn feature_count(&self) -> usize {
        self.grid_size * self.grid_size
    }

    /// Model evaluations per attribution: `N (K + 2)`.
    pub fn forwards(&self) -> usize {
        self.n * (self.feature_count() + 2)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n < 2 {
            return Err(EngineError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.batch_size == 0 || self.in_flight == 0 {
            return Err(EngineError::Config("batch_size and in_flight must be positive".into()));
        }
        self.spec.validate()?;
        Ok(())
    }

    fn scramble(&self) -> Scramble {
        if self.scramble {
            Scramble::DigitalShift(self.seed)
        } else {
            Scramble::None
        }
    }
}

/// Inverts masked copies of one image's coefficient plane.
pub struct MaskedReconstructor<'a> {
    plane: CoefficientPlane,
    layout: &'a FeatureLayout,
    spec: WaveletSpec,
    clamp: bool,
}

impl<'a> MaskedReconstructor<'a> {
    pub fn new(image: &Image, layout: &'a FeatureLayout, spec: &WaveletSpec, clamp: bool) -> Result<Self, EngineError> {
        if image.width() != layout.side() || image.height() != layout.side() {
            return Err(EngineError::Dimension(format!(
                "{}x{} image for a {}-pixel layout",
                image.width(),
                image.height(),
                layout.side()
            )));
        }
        let plane = pyramid_layout(&dwt2d(image, spec)?)?;
        Ok(Self {
            plane,
            layout,
            spec: *spec,
            clamp,
        })
    }

    /// Scales every coefficient by its feature's mask value (the same value in
    /// every channel), inverts, and optionally clamps to `[0, 1]`.
    pub fn reconstruct(&self, mask: &[f64]) -> Result<Image, EngineError> {
        if mask.len() != self.layout.feature_count() {
            return Err(EngineError::Dimension(format!(
                "mask of length {} for {} features",
                mask.len(),
                self.layout.feature_count()
            )));
        }
        let cells = self.layout.cell_map();
        let planes = self
            .plane
            .planes
            .iter()
            .map(|p| p.iter().zip(cells).map(|(v, &k)| v * mask[k as usize]).collect())
            .collect();
        let masked = CoefficientPlane {
            width: self.plane.width,
            height: self.plane.height,
            planes,
        };
        let mut image = idwt2d(&plane_to_pyramid(&masked, &self.spec)?)?;
        if self.clamp {
            image.clamp_unit();
        }
        Ok(image)
    }
}

pub fn perturb_reconstruct(
    image: &Image,
    layout: &FeatureLayout,
    mask: &[f64],
    spec: &WaveletSpec,
    clamp: bool,
) -> Result<Image, EngineError> {
    MaskedReconstructor::new(image, layout, spec, clamp)?.reconstruct(mask)
}

/// Attribution output, serialized as the JSON sidecar of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcamResult {
    pub config: WcamConfig,
    pub layout: LayoutSummary,
    /// Total Sobol index per feature.
    pub tsi: Vec<f64>,
    pub first_order: Vec<f64>,
    pub f_empty: f64,
    pub variance: f64,
    pub model_id: String,
    pub image_digest: String,
    /// Model evaluations performed.
    pub forwards: usize,
}

impl WcamResult {
    pub fn side(&self) -> usize {
        self.layout.side
    }

    /// Rebuilds the full feature layout the result was computed on.
    pub fn feature_layout(&self) -> Result<FeatureLayout, EngineError> {
        featurize(self.layout.side, &self.config)
    }

    pub fn argmax(&self) -> usize {
        self.tsi
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0
    }

    pub fn to_json(&self) -> Result<String, EngineError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, EngineError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Estimates the total Sobol index of every feature of `image` for `model`.
///
/// Performs exactly `config.forwards()` model evaluations. Scores are placed by
/// design-row index, so the result does not depend on batching or on how many
/// batches are in flight.
pub fn attribute(image: &Image, model: &dyn ScoreFn, config: &WcamConfig) -> Result<WcamResult, EngineError> {
    config.validate()?;
    if image.width() != image.height() {
        return Err(EngineError::Dimension(format!(
            "attribution needs a square image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let layout = featurize(image.width(), config)?;
    let k = layout.feature_count();
    let design = build_design(config.n, k, config.scramble())?;
    let recon = MaskedReconstructor::new(image, &layout, &config.spec, config.clamp_reconstruction)?;

    let total = design.total_rows();
    let batch = config.batch_size.min(model.max_batch()).max(1);
    let batches: Vec<Range<usize>> = (0..total).step_by(batch).map(|s| s..(s + batch).min(total)).collect();

    let run = |rows: Range<usize>| -> Result<Vec<f64>, EngineError> {
        let images = rows
            .into_par_iter()
            .map(|i| {
                let mut mask = vec![0.0; k];
                design.fill_row(i, &mut mask);
                recon.reconstruct(&mask)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(score_batch(model, &images)?)
    };

    let mut scores = vec![0.0; total];
    for group in batches.chunks(config.in_flight) {
        let results: Vec<Result<Vec<f64>, EngineError>> = if group.len() == 1 {
            vec![run(group[0].clone())]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = group.iter().map(|r| s.spawn(|| run(r.clone()))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scoring worker panicked"))
                    .collect()
            })
        };
        for (rows, result) in group.iter().zip(results) {
            scores[rows.clone()].copy_from_slice(&result?);
        }
    }

    let estimate = jansen_total(&DesignScores::from_rows(config.n, k, &scores)?)?;
    Ok(WcamResult {
        config: config.clone(),
        layout: layout.summary(),
        tsi: estimate.total,
        first_order: estimate.first,
        f_empty: estimate.f_empty,
        variance: estimate.variance,
        model_id: model.model_id(),
        image_digest: image.digest(),
        forwards: total,
    })
}
