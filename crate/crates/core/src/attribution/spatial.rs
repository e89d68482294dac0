use super::layout::FeatureLayout;
use super::{EngineError, WcamResult};

/// Sums, at every pixel, the indices of all features whose footprint covers
/// it. Scales are weighted equally. Row-major `side x side`.
pub fn project_spatial_raw(layout: &FeatureLayout, tsi: &[f64]) -> Vec<f64> {
    let side = layout.side();
    let mut map = vec![0.0; side * side];
    for (k, &value) in tsi.iter().enumerate().take(layout.feature_count()) {
        if value == 0.0 {
            continue;
        }
        for (m, covered) in map.iter_mut().zip(layout.footprint_mask(k)) {
            if covered {
                *m += value;
            }
        }
    }
    map
}

/// [`project_spatial_raw`] scaled to a maximum of 1 (left as is when all zero).
pub fn project_spatial(result: &WcamResult) -> Result<Vec<f64>, EngineError> {
    let layout = result.feature_layout()?;
    let mut map = project_spatial_raw(&layout, &result.tsi);
    let max = map.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        map.iter_mut().for_each(|v| *v /= max);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{featurize, WcamConfig};

    fn layout(g: usize) -> FeatureLayout {
        featurize(
            64,
            &WcamConfig {
                grid_size: g,
                ..WcamConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn single_level_one_cell_paints_its_footprint() {
        let layout = layout(8);
        let mut tsi = vec![0.0; 64];
        tsi[13] = 0.7;
        let map = project_spatial_raw(&layout, &tsi);
        for (i, &v) in map.iter().enumerate() {
            let (r, c) = (i / 64, i % 64);
            let inside = (16..32).contains(&r) && (16..32).contains(&c);
            assert_eq!(v, if inside { 0.7 } else { 0.0 });
        }
    }

    #[test]
    fn approximation_cell_is_uniform() {
        let layout = layout(8);
        let mut tsi = vec![0.0; 64];
        tsi[0] = 0.4;
        assert!(project_spatial_raw(&layout, &tsi).iter().all(|&v| v == 0.4));
    }

    #[test]
    fn same_footprint_at_two_levels_adds() {
        // feature 0 (level-3 approximation) and feature 1 (level-3 horizontal
        // detail) both describe the whole image
        let layout = layout(8);
        assert_eq!(layout.footprint_mask(0), layout.footprint_mask(1));
        let mut tsi = vec![0.0; 64];
        tsi[0] = 0.2;
        tsi[1] = 0.3;
        assert!(project_spatial_raw(&layout, &tsi).iter().all(|&v| (v - 0.5).abs() < 1e-12));
        // a level-2 cell only adds on its own quarter
        tsi[2] = 0.1;
        let map = project_spatial_raw(&layout, &tsi);
        assert!((map[0] - 0.6).abs() < 1e-12);
        assert!((map[63 * 64 + 63] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        for g in [2, 4, 8, 16] {
            let layout = layout(g);
            let tsi: Vec<f64> = (0..layout.feature_count()).map(|k| ((k * 37) % 11) as f64 / 10.0).collect();
            let mass: f64 = project_spatial_raw(&layout, &tsi).iter().sum();
            let expected: f64 = tsi
                .iter()
                .zip(layout.features())
                .map(|(t, f)| t * f.footprint_area as f64)
                .sum();
            assert!((mass - expected).abs() < 1e-9 * expected.max(1.0));
        }
    }
}
