use ndarray::Array2;

use super::sobol::{DirectionTable, Scramble, SobolSequence};
use super::SensitivityError;

/// Which matrix a design row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignRow {
    A(usize),
    B(usize),
    /// Row `row` of `C^(feature)`: row `row` of `A` with column `feature` taken from `B`.
    C { feature: usize, row: usize },
}

/// Two `N x K` quasi-random matrices drawn from disjoint dimension blocks of
/// one Sobol sequence (`A` from dimensions `0..K`, `B` from `K..2K`).
///
/// Evaluation rows are numbered `0..N(K+2)`: `A` rows first, then `B`, then
/// `C^(0)`, ..., `C^(K-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolDesign {
    a: Array2<f64>,
    b: Array2<f64>,
}

impl SobolDesign {
    pub fn samples(&self) -> usize {
        self.a.nrows()
    }

    pub fn features(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    /// `N (K + 2)`.
    pub fn total_rows(&self) -> usize {
        self.samples() * (self.features() + 2)
    }

    pub fn row_kind(&self, index: usize) -> DesignRow {
        let n = self.samples();
        assert!(index < self.total_rows(), "design row {index} out of range");
        match index / n {
            0 => DesignRow::A(index),
            1 => DesignRow::B(index - n),
            block => DesignRow::C {
                feature: block - 2,
                row: index % n,
            },
        }
    }

    /// Copies evaluation row `index` into `out` (length `K`).
    pub fn fill_row(&self, index: usize, out: &mut [f64]) {
        match self.row_kind(index) {
            DesignRow::A(j) => out.iter_mut().zip(self.a.row(j)).for_each(|(o, v)| *o = *v),
            DesignRow::B(j) => out.iter_mut().zip(self.b.row(j)).for_each(|(o, v)| *o = *v),
            DesignRow::C { feature, row } => {
                out.iter_mut().zip(self.a.row(row)).for_each(|(o, v)| *o = *v);
                out[feature] = self.b[[row, feature]];
            }
        }
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.features()];
        self.fill_row(index, &mut out);
        out
    }
}

pub fn build_design(n: usize, k: usize, scramble: Scramble) -> Result<SobolDesign, SensitivityError> {
    build_design_with_table(n, k, scramble, &DirectionTable::joe_kuo())
}

pub fn build_design_with_table(
    n: usize,
    k: usize,
    scramble: Scramble,
    table: &DirectionTable,
) -> Result<SobolDesign, SensitivityError> {
    if n < 2 {
        return Err(SensitivityError::InvalidDesign(format!("need at least 2 samples, got {n}")));
    }
    if k == 0 {
        return Err(SensitivityError::InvalidDesign("need at least one feature".into()));
    }
    let points = SobolSequence::with_table(2 * k, scramble, table)?.take_points(n);
    Ok(SobolDesign {
        a: points.slice(ndarray::s![.., ..k]).to_owned(),
        b: points.slice(ndarray::s![.., k..]).to_owned(),
    })
}

/// Model outputs on every design row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignScores {
    pub f_a: Vec<f64>,
    pub f_b: Vec<f64>,
    /// `K x N`: row `k` holds `f(C^(k)_j)` for `j = 0..N`.
    pub f_c: Array2<f64>,
}

impl DesignScores {
    /// Splits scores listed in design-row order.
    pub fn from_rows(samples: usize, features: usize, scores: &[f64]) -> Result<Self, SensitivityError> {
        let expected = samples * (features + 2);
        if scores.len() != expected {
            return Err(SensitivityError::ShapeMismatch(format!(
                "{} scores for {expected} design rows",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(SensitivityError::NonFiniteScore(i));
        }
        let n = samples;
        Ok(Self {
            f_a: scores[..n].to_vec(),
            f_b: scores[n..2 * n].to_vec(),
            f_c: Array2::from_shape_vec((features, n), scores[2 * n..].to_vec()).expect("length checked"),
        })
    }

    /// Evaluates `f` on every row of `design`.
    pub fn evaluate(design: &SobolDesign, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self, SensitivityError> {
        let mut row = vec![0.0; design.features()];
        let scores: Vec<f64> = (0..design.total_rows())
            .map(|i| {
                design.fill_row(i, &mut row);
                f(&row)
            })
            .collect();
        Self::from_rows(design.samples(), design.features(), &scores)
    }

    pub fn samples(&self) -> usize {
        self.f_a.len()
    }

    pub fn features(&self) -> usize {
        self.f_c.nrows()
    }

    pub(crate) fn validate(&self) -> Result<(), SensitivityError> {
        let n = self.samples();
        if n < 2 {
            return Err(SensitivityError::InvalidDesign(format!("need at least 2 samples, got {n}")));
        }
        if self.f_b.len() != n || self.f_c.ncols() != n {
            return Err(SensitivityError::ShapeMismatch(format!(
                "A has {n} scores, B has {}, C rows have {}",
                self.f_b.len(),
                self.f_c.ncols()
            )));
        }
        let all = self.f_a.iter().chain(&self.f_b).chain(self.f_c.iter());
        if let Some(i) = all.into_iter().position(|s| !s.is_finite()) {
            return Err(SensitivityError::NonFiniteScore(i));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn row_count_is_n_times_k_plus_two() {
        let d = build_design(2, 2, Scramble::None).unwrap();
        assert_eq!(d.total_rows(), 8);
        let kinds: HashSet<String> = (0..8).map(|i| format!("{:?}", d.row_kind(i))).collect();
        assert_eq!(kinds.len(), 8);
        // the unscrambled first point is (0.5, ..., 0.5) in every dimension, so
        // value-distinct rows need a shift
        let d = build_design(2, 2, Scramble::DigitalShift(3)).unwrap();
        let rows: HashSet<Vec<u64>> = (0..8)
            .map(|i| d.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(rows.len(), 8);
    }

    #[test]
    fn c_rows_swap_a_single_column() {
        let d = build_design(16, 5, Scramble::None).unwrap();
        for feature in 0..5 {
            for row in 0..16 {
                let idx = 2 * 16 + feature * 16 + row;
                assert_eq!(d.row_kind(idx), DesignRow::C { feature, row });
                let c = d.row(idx);
                for col in 0..5 {
                    if col == feature {
                        assert_eq!(c[col], d.b()[[row, col]]);
                    } else {
                        assert_eq!(c[col], d.a()[[row, col]]);
                    }
                }
            }
        }
    }

    #[test]
    fn a_and_b_use_disjoint_dimension_blocks() {
        let d = build_design(8, 3, Scramble::None).unwrap();
        let full = super::super::sobol_sequence(8, 6, Scramble::None).unwrap();
        for j in 0..8 {
            for k in 0..3 {
                assert_eq!(d.a()[[j, k]], full[[j, k]]);
                assert_eq!(d.b()[[j, k]], full[[j, k + 3]]);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = build_design(32, 64, Scramble::DigitalShift(7)).unwrap();
        let b = build_design(32, 64, Scramble::DigitalShift(7)).unwrap();
        let bits = |d: &SobolDesign| d.a().iter().chain(d.b().iter()).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_small_designs() {
        assert!(matches!(build_design(1, 3, Scramble::None), Err(SensitivityError::InvalidDesign(_))));
        assert!(matches!(build_design(4, 0, Scramble::None), Err(SensitivityError::InvalidDesign(_))));
        assert!(matches!(
            build_design(4, 513, Scramble::None),
            Err(SensitivityError::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn from_rows_checks_shape_and_finiteness() {
        assert!(matches!(
            DesignScores::from_rows(2, 2, &[0.0; 7]),
            Err(SensitivityError::ShapeMismatch(_))
        ));
        let mut s = vec![0.5; 8];
        s[6] = f64::NAN;
        assert_eq!(DesignScores::from_rows(2, 2, &s).unwrap_err(), SensitivityError::NonFiniteScore(6));
    }
}
