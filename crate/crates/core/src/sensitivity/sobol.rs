use std::borrow::Cow;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::direction_numbers::{DIRECTIONS, MAX_DEGREE};
use super::SensitivityError;

const BITS: usize = 32;

/// Optional randomization of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "seed")]
pub enum Scramble {
    #[default]
    None,
    /// XOR every coordinate with a per-dimension random 32-bit word.
    DigitalShift(u64),
}

/// Primitive polynomials and initial direction numbers, one entry per dimension.
#[derive(Debug, Clone)]
pub struct DirectionTable {
    entries: Cow<'static, [(u32, [u32; MAX_DEGREE])]>,
}

impl Default for DirectionTable {
    fn default() -> Self {
        Self::joe_kuo()
    }
}

impl DirectionTable {
    pub fn joe_kuo() -> Self {
        Self {
            entries: Cow::Borrowed(&DIRECTIONS[..]),
        }
    }

    /// A deliberately broken table in which every dimension past the first
    /// repeats dimension 1. Used to check that the estimator suite notices.
    pub fn corrupted() -> Self {
        let mut entries = DIRECTIONS.to_vec();
        for e in entries.iter_mut().skip(2) {
            *e = DIRECTIONS[1];
        }
        Self {
            entries: Cow::Owned(entries),
        }
    }

    pub fn max_dimension(&self) -> usize {
        self.entries.len()
    }

    fn directions(&self, dim: usize) -> [u32; BITS] {
        let mut v = [0u32; BITS];
        if dim == 0 {
            for (i, v) in v.iter_mut().enumerate() {
                *v = 1 << (BITS - 1 - i);
            }
            return v;
        }
        let (poly, m) = self.entries[dim];
        let degree = (u32::BITS - poly.leading_zeros() - 1) as usize;
        for i in 0..degree.min(BITS) {
            v[i] = m[i] << (BITS - 1 - i);
        }
        for i in degree..BITS {
            let mut x = v[i - degree] ^ (v[i - degree] >> degree);
            for k in 1..degree {
                if (poly >> (degree - k)) & 1 == 1 {
                    x ^= v[i - k];
                }
            }
            v[i] = x;
        }
        v
    }
}

/// Gray-code Sobol generator. The all-zero origin is skipped, so the first
/// point of an unscrambled sequence is `(0.5, ..., 0.5)`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    shifts: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub fn new(dim: usize, scramble: Scramble) -> Result<Self, SensitivityError> {
        Self::with_table(dim, scramble, &DirectionTable::joe_kuo())
    }

    pub fn with_table(dim: usize, scramble: Scramble, table: &DirectionTable) -> Result<Self, SensitivityError> {
        if dim == 0 {
            return Err(SensitivityError::InvalidDesign("zero-dimensional sequence".into()));
        }
        if dim > table.max_dimension() {
            return Err(SensitivityError::UnsupportedDimension {
                requested: dim,
                max: table.max_dimension(),
            });
        }
        let shifts = match scramble {
            Scramble::None => vec![0; dim],
            Scramble::DigitalShift(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..dim).map(|_| rng.gen()).collect()
            }
        };
        Ok(Self {
            directions: (0..dim).map(|d| table.directions(d)).collect(),
            shifts,
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Writes the next point into `out`.
    pub fn next_into(&mut self, out: &mut [f64]) {
        let bit = self.index.trailing_ones() as usize;
        assert!(bit < BITS, "Sobol sequence exhausted");
        self.index += 1;
        for (((x, v), s), o) in self.state.iter_mut().zip(&self.directions).zip(&self.shifts).zip(out) {
            *x ^= v[bit];
            *o = (*x ^ s) as f64 / (1u64 << BITS) as f64;
        }
    }

    /// The next `n` points as an `n x dim` matrix.
    pub fn take_points(&mut self, n: usize) -> Array2<f64> {
        let dim = self.dim();
        let mut out = Array2::zeros((n, dim));
        for mut row in out.rows_mut() {
            self.next_into(row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

/// First `n` points of the `dim`-dimensional sequence, one point per row.
pub fn sobol_sequence(n: usize, dim: usize, scramble: Scramble) -> Result<Array2<f64>, SensitivityError> {
    if n == 0 {
        return Err(SensitivityError::InvalidDesign("zero points requested".into()));
    }
    Ok(SobolSequence::new(dim, scramble)?.take_points(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference points from an independent implementation (scipy.stats.qmc.Sobol,
    // scramble=False), skipping the origin. Columns: dims 0, 1, 2, 3, 7, 63, 127, 255, 511, 1023.
    const REFERENCE_DIMS: [usize; 10] = [0, 1, 2, 3, 7, 63, 127, 255, 511, 1023];
    const REFERENCE: [(usize, [f64; 10]); 4] = [
        (1, [0.5; 10]),
        (2, [0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75]),
        (4, [0.375, 0.375, 0.625, 0.875, 0.875, 0.125, 0.625, 0.375, 0.375, 0.875]),
        (8, [0.1875, 0.3125, 0.9375, 0.4375, 0.9375, 0.6875, 0.0625, 0.4375, 0.1875, 0.0625]),
    ];
    // Deeper indices, dims 0, 5, 64, 200, 1000.
    const DEEP_DIMS: [usize; 5] = [0, 5, 64, 200, 1000];
    const DEEP: [(usize, [f64; 5]); 4] = [
        (5, [0.875, 0.625, 0.875, 0.125, 0.375]),
        (100, [0.4140625, 0.7421875, 0.1953125, 0.8515625, 0.5703125]),
        (777, [0.6923828125, 0.3564453125, 0.9384765625, 0.9912109375, 0.1083984375]),
        (1024, [0.00146484375, 0.84423828125, 0.35888671875, 0.47705078125, 0.01904296875]),
    ];

    #[test]
    fn matches_reference_generator() {
        let pts = sobol_sequence(1024, 1024, Scramble::None).unwrap();
        for (index, expected) in REFERENCE {
            for (d, e) in REFERENCE_DIMS.iter().zip(expected) {
                assert_eq!(pts[[index - 1, *d]], e, "point {index} dim {d}");
            }
        }
        for (index, expected) in DEEP {
            for (d, e) in DEEP_DIMS.iter().zip(expected) {
                assert_eq!(pts[[index - 1, *d]], e, "point {index} dim {d}");
            }
        }
    }

    #[test]
    fn first_point_is_centre_for_any_seed_when_unscrambled() {
        let pts = sobol_sequence(1, 3, Scramble::None).unwrap();
        assert_eq!(pts.row(0).to_vec(), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn entries_in_half_open_unit_interval() {
        for scramble in [Scramble::None, Scramble::DigitalShift(9)] {
            let pts = sobol_sequence(2048, 16, scramble).unwrap();
            assert!(pts.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn column_means_are_uniform() {
        let pts = sobol_sequence(4096, 32, Scramble::None).unwrap();
        for col in pts.columns() {
            let mean = col.sum() / col.len() as f64;
            assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        }
    }

    /// Warnock's closed form for the squared L2 star discrepancy.
    fn l2_star_discrepancy_sq(pts: &Array2<f64>) -> f64 {
        let (n, d) = pts.dim();
        let mut sum1 = 0.0;
        for row in pts.rows() {
            sum1 += row.iter().map(|x| (1.0 - x * x) / 2.0).product::<f64>();
        }
        let mut sum2 = 0.0;
        for a in pts.rows() {
            for b in pts.rows() {
                sum2 += a.iter().zip(b.iter()).map(|(x, y)| 1.0 - x.max(*y)).product::<f64>();
            }
        }
        3f64.powi(-(d as i32)) - 2.0 / n as f64 * sum1 + sum2 / (n * n) as f64
    }

    #[test]
    fn discrepancy_beats_pseudo_random() {
        let sobol = sobol_sequence(1024, 8, Scramble::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let random = Array2::from_shape_fn((1024, 8), |_| rng.gen::<f64>());
        let (ds, dr) = (l2_star_discrepancy_sq(&sobol), l2_star_discrepancy_sq(&random));
        assert!(ds < dr, "sobol {ds:e} vs random {dr:e}");
    }

    #[test]
    fn unsupported_dimension() {
        assert_eq!(
            sobol_sequence(4, 1025, Scramble::None).unwrap_err(),
            SensitivityError::UnsupportedDimension {
                requested: 1025,
                max: 1024
            }
        );
    }

    #[test]
    fn scrambling_is_seeded() {
        let a = sobol_sequence(64, 4, Scramble::DigitalShift(1)).unwrap();
        let b = sobol_sequence(64, 4, Scramble::DigitalShift(1)).unwrap();
        let c = sobol_sequence(64, 4, Scramble::DigitalShift(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn corrupted_table_repeats_columns() {
        let pts = SobolSequence::with_table(4, Scramble::None, &DirectionTable::corrupted())
            .unwrap()
            .take_points(16);
        assert_eq!(pts.column(1), pts.column(3));
    }
}
