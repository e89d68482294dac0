use serde::{Deserialize, Serialize};

use super::design::DesignScores;
use super::SensitivityError;

/// Below this output variance the indices are numerical noise.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEstimate {
    /// Total indices, one per feature. Raw estimates, never clipped.
    pub total: Vec<f64>,
    /// First-order indices. May be slightly negative from estimator noise.
    pub first: Vec<f64>,
    /// Mean score over the `A` rows.
    pub f_empty: f64,
    /// Bessel-corrected variance of the `A` scores.
    pub variance: f64,
}

impl SensitivityEstimate {
    /// Total indices clipped to `[0, 1.5]` for display.
    pub fn total_for_display(&self) -> Vec<f64> {
        self.total.iter().map(|v| v.clamp(0.0, 1.5)).collect()
    }
}

fn mean_and_variance(scores: &DesignScores) -> Result<(f64, f64), SensitivityError> {
    scores.validate()?;
    let n = scores.samples() as f64;
    let f_empty = scores.f_a.iter().sum::<f64>() / n;
    let variance = scores.f_a.iter().map(|f| (f - f_empty).powi(2)).sum::<f64>() / (n - 1.0);
    if variance < DEGENERATE_VARIANCE {
        return Err(SensitivityError::DegenerateVariance { f_empty, variance });
    }
    Ok((f_empty, variance))
}

/// Half mean squared difference between two score vectors.
fn half_msd(x: &[f64], y: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = x
        .iter()
        .zip(y)
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + (a - b).powi(2), c + 1));
    sum / (2.0 * count as f64)
}

/// Jansen total indices `E[(f(A) - f(C^k))^2] / 2V`, with first-order
/// indices filled alongside.
pub fn jansen_total(scores: &DesignScores) -> Result<SensitivityEstimate, SensitivityError> {
    let (f_empty, variance) = mean_and_variance(scores)?;
    let total = scores
        .f_c
        .rows()
        .into_iter()
        .map(|fc| half_msd(&scores.f_a, fc.iter().copied()) / variance)
        .collect();
    let first = first_order(scores, variance);
    Ok(SensitivityEstimate {
        total,
        first,
        f_empty,
        variance,
    })
}

/// Jansen first-order indices `(V - E[(f(B) - f(C^k))^2] / 2) / V`.
pub fn jansen_first(scores: &DesignScores) -> Result<Vec<f64>, SensitivityError> {
    let (_, variance) = mean_and_variance(scores)?;
    Ok(first_order(scores, variance))
}

fn first_order(scores: &DesignScores, variance: f64) -> Vec<f64> {
    scores
        .f_c
        .rows()
        .into_iter()
        .map(|fc| (variance - half_msd(&scores.f_b, fc.iter().copied())) / variance)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{build_design, Scramble};
    use super::*;
    use proptest::prelude::*;

    fn estimate(n: usize, k: usize, f: impl Fn(&[f64]) -> f64) -> SensitivityEstimate {
        let design = build_design(n, k, Scramble::None).unwrap();
        jansen_total(&DesignScores::evaluate(&design, f).unwrap()).unwrap()
    }

    #[test]
    fn single_variable_owns_all_variance() {
        let est = estimate(512, 2, |x| x[0]);
        assert!((est.total[0] - 1.0).abs() < 0.05, "{:?}", est.total);
        assert!(est.total[1].abs() < 0.05);
        assert!((est.first[0] - est.total[0]).abs() < 0.03);
    }

    #[test]
    fn additive_pair_splits_evenly() {
        let est = estimate(512, 2, |x| x[0] + x[1]);
        for s in &est.first {
            assert!((s - 0.5).abs() < 0.05, "{:?}", est.first);
        }
        let est = estimate(1024, 4, |x| x[0] + 2.0 * x[1] + 0.5 * x[2] + x[3]);
        assert!((est.first.iter().sum::<f64>() - 1.0).abs() < 0.05, "{:?}", est.first);
    }

    #[test]
    fn pure_interaction_has_no_first_order_effect() {
        // With X uniform, Var(E[f|X1]) = 0 and Var(f) = 1/144, all of it interaction.
        let est = estimate(512, 2, |x| (x[0] - 0.5) * (x[1] - 0.5));
        assert!(est.first[0].abs() < 0.1, "{:?}", est.first);
        assert!((est.total[0] - 1.0).abs() < 0.1, "{:?}", est.total);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let design = build_design(64, 3, Scramble::None).unwrap();
        let scores = DesignScores::evaluate(&design, |_| 0.7).unwrap();
        assert!(matches!(
            jansen_total(&scores),
            Err(SensitivityError::DegenerateVariance { f_empty, .. }) if (f_empty - 0.7).abs() < 1e-12
        ));
        assert!(matches!(jansen_first(&scores), Err(SensitivityError::DegenerateVariance { .. })));
    }

    #[test]
    fn needs_two_samples() {
        let scores = DesignScores {
            f_a: vec![0.1],
            f_b: vec![0.2],
            f_c: ndarray::Array2::zeros((2, 1)),
        };
        assert!(matches!(jansen_total(&scores), Err(SensitivityError::InvalidDesign(_))));
    }

    #[test]
    fn display_clip_keeps_raw_values() {
        let est = SensitivityEstimate {
            total: vec![-0.1, 0.4, 2.0],
            first: vec![0.0; 3],
            f_empty: 0.0,
            variance: 1.0,
        };
        assert_eq!(est.total_for_display(), vec![0.0, 0.4, 1.5]);
        assert_eq!(est.total[2], 2.0);
    }

    #[test]
    fn deterministic_bits() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1] * x[2];
        let a = estimate(128, 3, f);
        let b = estimate(128, 3, f);
        assert_eq!(
            a.total.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.total.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn total_dominates_first_order() {
        let fns: [fn(&[f64]) -> f64; 3] = [
            |x| x[0] * x[1] + x[2],
            |x| (6.0 * x[0]).sin() * x[1] + x[2].powi(3),
            |x| (x[0] - 0.3).abs() + x[1] * x[2] * x[0],
        ];
        for f in fns {
            let est = estimate(512, 3, f);
            for (t, s) in est.total.iter().zip(&est.first) {
                assert!(*t >= s - 0.05, "total {t} first {s}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn affine_rescaling_leaves_indices_unchanged(scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0], shift in -10.0f64..10.0) {
            let f = |x: &[f64]| (x[0] * 5.0).sin() + x[1] * x[2] + 0.3 * x[3];
            let base = estimate(128, 4, f);
            let moved = estimate(128, 4, |x| scale * f(x) + shift);
            for (a, b) in base.total.iter().zip(&moved.total).chain(base.first.iter().zip(&moved.first)) {
                prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
            }
        }
    }
}
