//! Quasi-Monte-Carlo Sobol designs and Jansen estimators of first-order and
//! total Sobol indices for a scalar function of `K` inputs in `[0, 1]^K`.

mod design;
mod direction_numbers;
mod jansen;
mod sobol;

pub use design::{build_design, build_design_with_table, DesignRow, DesignScores, SobolDesign};
pub use jansen::{jansen_first, jansen_total, SensitivityEstimate, DEGENERATE_VARIANCE};
pub use sobol::{sobol_sequence, DirectionTable, Scramble, SobolSequence};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SensitivityError {
    #[error("dimension {requested} exceeds the {max} supported by the direction-number table")]
    UnsupportedDimension { requested: usize, max: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("score shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite score at design row {0}")]
    NonFiniteScore(usize),
    #[error("output variance {variance:e} is degenerate (mean score {f_empty})")]
    DegenerateVariance { f_empty: f64, variance: f64 },
}
