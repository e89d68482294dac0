use serde::{Deserialize, Serialize};

use super::{EngineError, WcamConfig};
use crate::wavelet::{band_regions, BandId, Rect, WaveletSpec};

/// The part of a feature cell that falls inside one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePart {
    pub band: BandId,
    /// Region of the coefficient plane.
    pub plane_rect: Rect,
    /// Pixels whose detail (or average) those coefficients describe.
    pub pixel_rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: usize,
    /// Cell of the coefficient plane controlled by this feature.
    pub rect: Rect,
    pub parts: Vec<FeaturePart>,
    /// Area of the union of the parts' pixel footprints.
    pub footprint_area: usize,
}

impl Feature {
    pub fn bands(&self) -> Vec<BandId> {
        self.parts.iter().map(|p| p.band).collect()
    }
}

/// Uniform `g x g` tiling of the `side x side` coefficient plane. Feature `k`
/// is the cell at grid row `k / g`, column `k % g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    side: usize,
    grid_size: usize,
    spec: WaveletSpec,
    features: Vec<Feature>,
    cell_of: Vec<u32>,
}

impl FeatureLayout {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn spec(&self) -> &WaveletSpec {
        &self.spec
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, k: usize) -> &Feature {
        &self.features[k]
    }

    /// Feature owning plane position `(row, col)`.
    pub fn feature_at(&self, row: usize, col: usize) -> usize {
        self.cell_of[row * self.side + col] as usize
    }

    /// Row-major `side x side` map of plane positions to features.
    pub fn cell_map(&self) -> &[u32] {
        &self.cell_of
    }

    /// Pixels covered by feature `k`, row-major.
    pub fn footprint_mask(&self, k: usize) -> Vec<bool> {
        let mut mask = vec![false; self.side * self.side];
        for part in &self.features[k].parts {
            let r = part.pixel_rect;
            for row in r.row..r.row + r.height {
                mask[row * self.side + r.col..row * self.side + r.col + r.width].fill(true);
            }
        }
        mask
    }

    pub fn summary(&self) -> LayoutSummary {
        LayoutSummary {
            side: self.side,
            grid_size: self.grid_size,
            levels: self.spec.levels,
            feature_count: self.features.len(),
            cell_size: self.side / self.grid_size,
            feature_bands: self
                .features
                .iter()
                .map(|f| f.parts.iter().map(|p| p.band.label()).collect())
                .collect(),
        }
    }
}

/// Compact description of a layout for result files. Band labels read `A3`
/// for the level-3 approximation and `H1`, `V2`, `D3`, ... for details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub side: usize,
    pub grid_size: usize,
    pub levels: usize,
    pub feature_count: usize,
    pub cell_size: usize,
    pub feature_bands: Vec<Vec<String>>,
}

pub fn featurize(side: usize, config: &WcamConfig) -> Result<FeatureLayout, EngineError> {
    let spec = config.spec;
    let g = config.grid_size;
    spec.check_dims(side, side)?;
    if g == 0 || side % g != 0 {
        return Err(EngineError::Dimension(format!("grid {g} does not divide side {side}")));
    }
    let cell = side / g;
    let regions = band_regions(&spec, side, side);
    let mut features = Vec::with_capacity(g * g);
    let mut cell_of = vec![0u32; side * side];
    for gr in 0..g {
        for gc in 0..g {
            let id = gr * g + gc;
            let rect = Rect::new(gr * cell, gc * cell, cell, cell);
            let parts: Vec<FeaturePart> = regions
                .iter()
                .filter_map(|(band, region)| {
                    rect.intersect(region).map(|plane_rect| {
                        let scale = band.scale();
                        FeaturePart {
                            band: *band,
                            plane_rect,
                            pixel_rect: Rect::new(
                                (plane_rect.row - region.row) * scale,
                                (plane_rect.col - region.col) * scale,
                                plane_rect.height * scale,
                                plane_rect.width * scale,
                            ),
                        }
                    })
                })
                .collect();
            for row in rect.row..rect.row + cell {
                cell_of[row * side + rect.col..row * side + rect.col + cell].fill(id as u32);
            }
            features.push(Feature {
                id,
                rect,
                parts,
                footprint_area: 0,
            });
        }
    }
    let mut layout = FeatureLayout {
        side,
        grid_size: g,
        spec,
        features,
        cell_of,
    };
    for k in 0..layout.features.len() {
        let area = layout.footprint_mask(k).iter().filter(|&&b| b).count();
        layout.features[k].footprint_area = area;
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::Orientation;

    fn config(g: usize) -> WcamConfig {
        WcamConfig {
            grid_size: g,
            ..WcamConfig::default()
        }
    }

    #[test]
    fn default_grid_on_64() {
        let layout = featurize(64, &config(8)).unwrap();
        assert_eq!(layout.feature_count(), 64);
        assert!(layout.features().iter().all(|f| f.rect.area() == 64));
        let approx_only: Vec<usize> = layout
            .features()
            .iter()
            .filter(|f| f.parts.len() == 1 && matches!(f.parts[0].band, BandId::Approximation { .. }))
            .map(|f| f.id)
            .collect();
        assert_eq!(approx_only, vec![0]);
        // the approximation cell describes the whole image
        assert_eq!(layout.feature(0).footprint_area, 64 * 64);
        // feature 13 (grid row 1, column 5) lies in level-1 horizontal detail
        let f13 = layout.feature(13);
        assert_eq!(
            f13.bands(),
            vec![BandId::Detail {
                level: 1,
                orientation: Orientation::Horizontal
            }]
        );
        assert_eq!(f13.parts[0].pixel_rect, Rect::new(16, 16, 16, 16));
    }

    #[test]
    fn coarse_grid_merges_bands() {
        let layout = featurize(64, &config(2)).unwrap();
        assert_eq!(layout.feature_count(), 4);
        let nw = layout.feature(0).bands();
        assert_eq!(nw.len(), 7);
        assert!(nw.contains(&BandId::Approximation { level: 3 }));
        for level in [2, 3] {
            for orientation in Orientation::ALL {
                assert!(nw.contains(&BandId::Detail { level, orientation }));
            }
        }
        assert!(layout.features()[1..].iter().all(|f| f.parts.len() == 1));
    }

    #[test]
    fn features_tile_the_plane() {
        for g in [1, 2, 4, 8, 16, 32] {
            let layout = featurize(64, &config(g)).unwrap();
            let covered: usize = layout.features().iter().map(|f| f.rect.area()).sum();
            assert_eq!(covered, 64 * 64);
            let parts: usize = layout
                .features()
                .iter()
                .flat_map(|f| &f.parts)
                .map(|p| p.plane_rect.area())
                .sum();
            assert_eq!(parts, 64 * 64);
            for (i, &k) in layout.cell_map().iter().enumerate() {
                assert!(layout.feature(k as usize).rect.contains(i / 64, i % 64));
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(featurize(64, &config(6)), Err(EngineError::Dimension(_))));
        assert!(matches!(featurize(60, &config(4)), Err(EngineError::Wavelet(_))));
        assert!(matches!(featurize(64, &config(0)), Err(EngineError::Dimension(_))));
    }
}
