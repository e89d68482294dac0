use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::spatial::project_spatial_raw;
use super::{EngineError, WcamResult};
use crate::image::Image;
use crate::wavelet::band_regions;

/// Colour maps whose luminance increases with the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    /// Black, red, yellow, white.
    #[default]
    Hot,
    Gray,
}

impl Palette {
    /// Colour for `v` in `[0, 1]` (clamped).
    pub fn color(&self, v: f64) -> [u8; 3] {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            Palette::Hot => [q(3.0 * v), q(3.0 * v - 1.0), q(3.0 * v - 2.0)],
            Palette::Gray => [q(v); 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapMode {
    /// Per-feature indices painted on the pyramid layout.
    Scale,
    /// Indices projected to pixels, optionally over the source image.
    Spatial,
}

#[derive(Debug, Clone)]
pub struct RenderOptions<'a> {
    pub palette: Palette,
    /// Draw band boundaries in scale mode.
    pub gridlines: bool,
    /// Heatmap opacity over the source image in spatial mode.
    pub alpha: f64,
    /// Value mapped to the top of the palette; defaults to the map's maximum.
    pub scale_max: Option<f64>,
    pub source: Option<&'a Image>,
    /// Output pixels per plane position; defaults to reaching at least 256 pixels.
    pub upscale: Option<usize>,
}

impl Default for RenderOptions<'_> {
    fn default() -> Self {
        Self {
            palette: Palette::Hot,
            gridlines: true,
            alpha: 0.6,
            scale_max: None,
            source: None,
            upscale: None,
        }
    }
}

/// Values the heatmap paints, one per plane position or pixel.
fn heat_values(result: &WcamResult, mode: HeatmapMode) -> Result<Vec<f64>, EngineError> {
    let layout = result.feature_layout()?;
    let clipped: Vec<f64> = result.tsi.iter().map(|v| v.clamp(0.0, 1.5)).collect();
    Ok(match mode {
        HeatmapMode::Scale => layout.cell_map().iter().map(|&k| clipped[k as usize]).collect(),
        HeatmapMode::Spatial => project_spatial_raw(&layout, &clipped),
    })
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(0.0, f64::max)
}

fn paint(result: &WcamResult, values: &[f64], mode: HeatmapMode, opts: &RenderOptions, scale_max: f64) -> RgbImage {
    let side = result.side();
    let up = opts.upscale.unwrap_or_else(|| (256 / side).max(1));
    let out_side = (side * up) as u32;
    let norm = |v: f64| if scale_max > 0.0 { v / scale_max } else { 0.0 };
    let mut img = RgbImage::from_fn(out_side, out_side, |x, y| {
        let (r, c) = (y as usize / up, x as usize / up);
        let heat = opts.palette.color(norm(values[r * side + c]));
        match (mode, opts.source) {
            (HeatmapMode::Spatial, Some(src)) if src.width() == side && src.height() == side => {
                let a = opts.alpha.clamp(0.0, 1.0);
                let mut px = [0u8; 3];
                for (ch, p) in px.iter_mut().enumerate() {
                    let base = src.get(ch.min(src.channels() - 1), r, c).clamp(0.0, 1.0) as f64 * 255.0;
                    *p = ((1.0 - a) * base + a * heat[ch] as f64).round() as u8;
                }
                Rgb(px)
            }
            _ => Rgb(heat),
        }
    });
    if mode == HeatmapMode::Scale && opts.gridlines {
        let line = Rgb([90, 90, 90]);
        for (_, rect) in band_regions(&result.config.spec, side, side) {
            let (r0, c0) = ((rect.row * up) as u32, (rect.col * up) as u32);
            let (r1, c1) = (((rect.row + rect.height) * up) as u32, ((rect.col + rect.width) * up) as u32);
            for x in c0..c1.min(out_side) {
                if r0 > 0 {
                    img.put_pixel(x, r0, line);
                }
            }
            for y in r0..r1.min(out_side) {
                if c0 > 0 {
                    img.put_pixel(c0, y, line);
                }
            }
        }
    }
    img
}

fn encode(img: RgbImage) -> Result<Vec<u8>, EngineError> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::DynamicImage::ImageRgb8(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(crate::image::ImageError::from)?;
    Ok(out.into_inner())
}

/// Renders one result as PNG bytes.
pub fn render_heatmap(result: &WcamResult, mode: HeatmapMode, opts: &RenderOptions) -> Result<Vec<u8>, EngineError> {
    let values = heat_values(result, mode)?;
    let scale_max = opts.scale_max.unwrap_or_else(|| max_of(&values));
    encode(paint(result, &values, mode, opts, scale_max))
}

/// Renders two results side by side on one colour scale: the maximum over both
/// maps unless `opts.scale_max` is set. `sources` overrides `opts.source` per panel.
pub fn render_comparison(
    left: &WcamResult,
    right: &WcamResult,
    mode: HeatmapMode,
    opts: &RenderOptions,
    sources: (Option<&Image>, Option<&Image>),
) -> Result<Vec<u8>, EngineError> {
    let (lv, rv) = (heat_values(left, mode)?, heat_values(right, mode)?);
    let scale_max = opts.scale_max.unwrap_or_else(|| max_of(&lv).max(max_of(&rv)));
    let lopts = RenderOptions {
        source: sources.0.or(opts.source),
        ..opts.clone()
    };
    let ropts = RenderOptions {
        source: sources.1.or(opts.source),
        ..opts.clone()
    };
    let a = paint(left, &lv, mode, &lopts, scale_max);
    let b = paint(right, &rv, mode, &ropts, scale_max);
    let gap = 4;
    let mut out = RgbImage::from_pixel(a.width() + gap + b.width(), a.height().max(b.height()), Rgb([255, 255, 255]));
    image::imageops::replace(&mut out, &a, 0, 0);
    image::imageops::replace(&mut out, &b, (a.width() + gap) as i64, 0);
    encode(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{featurize, WcamConfig};

    fn result_with(tsi: Vec<f64>) -> WcamResult {
        let config = WcamConfig::default();
        let layout = featurize(64, &config).unwrap();
        WcamResult {
            config,
            layout: layout.summary(),
            first_order: vec![0.0; tsi.len()],
            tsi,
            f_empty: 0.5,
            variance: 0.1,
            model_id: "test".into(),
            image_digest: String::new(),
            forwards: 0,
        }
    }

    fn decode(bytes: &[u8]) -> RgbImage {
        image::load_from_memory(bytes).unwrap().to_rgb8()
    }

    fn luma(p: &Rgb<u8>) -> f64 {
        0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
    }

    #[test]
    fn zero_indices_render_dark() {
        let r = result_with(vec![0.0; 64]);
        for mode in [HeatmapMode::Scale, HeatmapMode::Spatial] {
            let opts = RenderOptions {
                gridlines: false,
                ..Default::default()
            };
            let img = decode(&render_heatmap(&r, mode, &opts).unwrap());
            assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));
        }
    }

    #[test]
    fn palette_is_monotone_in_brightness() {
        for palette in [Palette::Hot, Palette::Gray] {
            let mut prev = -1.0;
            for i in 0..=100 {
                let c = palette.color(i as f64 / 100.0);
                let l = luma(&Rgb(c));
                assert!(l > prev, "{palette:?} at {i}");
                prev = l;
            }
        }
    }

    #[test]
    fn larger_index_paints_brighter_cell() {
        let mut tsi = vec![0.0; 64];
        tsi[13] = 0.9;
        tsi[40] = 0.3;
        let r = result_with(tsi);
        let opts = RenderOptions {
            gridlines: false,
            upscale: Some(1),
            ..Default::default()
        };
        let img = decode(&render_heatmap(&r, HeatmapMode::Scale, &opts).unwrap());
        let at = |k: usize| {
            let rect = r.feature_layout().unwrap().feature(k).rect;
            luma(img.get_pixel(rect.col as u32 + 1, rect.row as u32 + 1))
        };
        assert!(at(13) > at(40));
        assert!(at(40) > at(0));
    }

    #[test]
    fn comparison_uses_shared_maximum() {
        let mut a = vec![0.0; 64];
        a[13] = 0.5;
        let mut b = vec![0.0; 64];
        b[13] = 1.0;
        let (ra, rb) = (result_with(a), result_with(b));
        let opts = RenderOptions {
            gridlines: false,
            upscale: Some(1),
            ..Default::default()
        };
        let img = decode(&render_comparison(&ra, &rb, HeatmapMode::Scale, &opts, (None, None)).unwrap());
        let rect = ra.feature_layout().unwrap().feature(13).rect;
        let left = img.get_pixel(rect.col as u32, rect.row as u32).0;
        let right = img.get_pixel(64 + 4 + rect.col as u32, rect.row as u32).0;
        assert_eq!(left, Palette::Hot.color(0.5));
        assert_eq!(right, Palette::Hot.color(1.0));
        // rendered alone, the left map would saturate
        let alone = decode(&render_heatmap(&ra, HeatmapMode::Scale, &opts).unwrap());
        assert_eq!(alone.get_pixel(rect.col as u32, rect.row as u32).0, Palette::Hot.color(1.0));
    }

    #[test]
    fn spatial_overlay_blends_source() {
        let r = result_with(vec![0.0; 64]);
        let src = Image::filled(64, 64, 3, 1.0).unwrap();
        let opts = RenderOptions {
            source: Some(&src),
            alpha: 0.5,
            upscale: Some(1),
            ..Default::default()
        };
        let img = decode(&render_heatmap(&r, HeatmapMode::Spatial, &opts).unwrap());
        assert!(img.pixels().all(|p| p.0 == [128, 128, 128]));
    }

    #[test]
    fn gridlines_mark_band_edges() {
        let r = result_with(vec![0.0; 64]);
        let opts = RenderOptions {
            upscale: Some(1),
            ..Default::default()
        };
        let img = decode(&render_heatmap(&r, HeatmapMode::Scale, &opts).unwrap());
        assert_ne!(img.get_pixel(10, 32).0, [0, 0, 0]);
        assert_eq!(img.get_pixel(40, 40).0, [0, 0, 0]);
    }
}
