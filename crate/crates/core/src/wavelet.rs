//! Multilevel separable 2-D discrete wavelet transform (Mallat filter bank).
//!
//! Each level filters the current approximation along rows and then along
//! columns with a low-pass/high-pass pair and keeps every second sample. Level
//! `j` (1-based) holds detail between `2^(j-1)` and `2^j` pixels; the
//! approximation left after `J` levels holds everything coarser than `2^J`.
//!
//! Filters are orthonormal, so coefficients are stored at the filter-defined
//! scale and the transform preserves energy under periodic extension.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("{width}x{height} is not divisible by 2^{levels}")]
    Dimension { width: usize, height: usize, levels: usize },
    #[error("decomposition needs at least one level")]
    NoLevels,
    #[error("input contains non-finite samples")]
    NonFiniteInput,
    #[error("malformed pyramid: {0}")]
    Structure(String),
    #[error("{family:?} does not admit perfect reconstruction with {boundary:?} boundaries")]
    UnsupportedBoundary { family: Family, boundary: Boundary },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Haar,
    /// Daubechies wavelet with two vanishing moments (4 taps).
    Db2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    /// Half-sample symmetric extension. Only exact for Haar, whose support never
    /// crosses an even-length boundary.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: Family,
    pub levels: usize,
    pub boundary: Boundary,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self::haar(3)
    }
}

impl WaveletSpec {
    pub fn haar(levels: usize) -> Self {
        Self {
            family: Family::Haar,
            levels,
            boundary: Boundary::Periodic,
        }
    }

    pub fn db2(levels: usize) -> Self {
        Self {
            family: Family::Db2,
            levels,
            boundary: Boundary::Periodic,
        }
    }

    pub fn validate(&self) -> Result<(), WaveletError> {
        if self.levels == 0 {
            return Err(WaveletError::NoLevels);
        }
        if self.family != Family::Haar && self.boundary == Boundary::Symmetric {
            return Err(WaveletError::UnsupportedBoundary {
                family: self.family,
                boundary: self.boundary,
            });
        }
        Ok(())
    }

    /// Checks that both sides are divisible by `2^levels`.
    pub fn check_dims(&self, width: usize, height: usize) -> Result<(), WaveletError> {
        self.validate()?;
        let step = 1usize
            .checked_shl(self.levels as u32)
            .filter(|s| *s > 0 && self.levels < usize::BITS as usize)
            .ok_or(WaveletError::Dimension {
                width,
                height,
                levels: self.levels,
            })?;
        if width % step != 0 || height % step != 0 || width == 0 || height == 0 {
            return Err(WaveletError::Dimension {
                width,
                height,
                levels: self.levels,
            });
        }
        Ok(())
    }

    pub fn filters(&self) -> FilterBank {
        FilterBank::new(self.family)
    }
}

/// Analysis low-pass and high-pass filters. The high-pass is the quadrature
/// mirror `hi[k] = (-1)^k lo[L-1-k]`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FilterBank {
    pub fn new(family: Family) -> Self {
        let lo = match family {
            Family::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            Family::Db2 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm]
            }
        };
        let len = lo.len();
        let hi = (0..len)
            .map(|k| if k % 2 == 0 { lo[len - 1 - k] } else { -lo[len - 1 - k] })
            .collect();
        Self { lo, hi }
    }

    /// One analysis step on `x` (even length), writing `x.len()/2` samples to each output.
    fn analyze(&self, x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
        let n = x.len();
        let taps = self.lo.len();
        for i in 0..n / 2 {
            let (mut a, mut d) = (0.0, 0.0);
            if 2 * i + taps <= n {
                for ((&h, &g), &v) in self.lo.iter().zip(&self.hi).zip(&x[2 * i..2 * i + taps]) {
                    a += h * v;
                    d += g * v;
                }
            } else {
                for (k, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                    let v = x[(2 * i + k) % n];
                    a += h * v;
                    d += g * v;
                }
            }
            lo[i] = a;
            hi[i] = d;
        }
    }

    /// Adjoint of [`analyze`](Self::analyze), which is its inverse for orthonormal filters.
    fn synthesize(&self, lo: &[f64], hi: &[f64], x: &mut [f64]) {
        let n = x.len();
        let taps = self.lo.len();
        x.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n / 2 {
            let (l, d) = (lo[i], hi[i]);
            if 2 * i + taps <= n {
                for ((&h, &g), out) in self.lo.iter().zip(&self.hi).zip(&mut x[2 * i..2 * i + taps]) {
                    *out += h * l + g * d;
                }
            } else {
                for (k, (&h, &g)) in self.lo.iter().zip(&self.hi).enumerate() {
                    x[(2 * i + k) % n] += h * l + g * d;
                }
            }
        }
    }
}

/// A dense row-major band of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Band {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// High-pass across rows: responds to horizontal edges.
    Horizontal,
    /// High-pass across columns: responds to vertical edges.
    Vertical,
    Diagonal,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Horizontal, Orientation::Vertical, Orientation::Diagonal];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDetails {
    pub horizontal: Band,
    pub vertical: Band,
    pub diagonal: Band,
}

impl LevelDetails {
    pub fn band(&self, orientation: Orientation) -> &Band {
        match orientation {
            Orientation::Horizontal => &self.horizontal,
            Orientation::Vertical => &self.vertical,
            Orientation::Diagonal => &self.diagonal,
        }
    }

    pub fn band_mut(&mut self, orientation: Orientation) -> &mut Band {
        match orientation {
            Orientation::Horizontal => &mut self.horizontal,
            Orientation::Vertical => &mut self.vertical,
            Orientation::Diagonal => &mut self.diagonal,
        }
    }

    pub fn energy(&self) -> f64 {
        self.horizontal.energy() + self.vertical.energy() + self.diagonal.energy()
    }
}

/// Decomposition of one channel. `levels[0]` is level 1, the finest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPyramid {
    pub approximation: Band,
    pub levels: Vec<LevelDetails>,
}

impl ChannelPyramid {
    pub fn energy(&self) -> f64 {
        self.approximation.energy() + self.levels.iter().map(LevelDetails::energy).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletPyramid {
    pub spec: WaveletSpec,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<ChannelPyramid>,
}

impl WaveletPyramid {
    pub fn coefficient_count(&self) -> usize {
        self.channels
            .iter()
            .map(|c| {
                c.approximation.data.len()
                    + c.levels
                        .iter()
                        .map(|l| l.horizontal.data.len() + l.vertical.data.len() + l.diagonal.data.len())
                        .sum::<usize>()
            })
            .sum()
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().map(ChannelPyramid::energy).sum()
    }

    /// Energy of the detail bands at `level` (1-based), summed over channels.
    pub fn level_energy(&self, level: usize) -> f64 {
        self.channels.iter().map(|c| c.levels[level - 1].energy()).sum()
    }

    pub fn map_coefficients(&mut self, mut f: impl FnMut(f64) -> f64) {
        for ch in &mut self.channels {
            ch.approximation.data.iter_mut().for_each(|v| *v = f(*v));
            for level in &mut ch.levels {
                for o in Orientation::ALL {
                    level.band_mut(o).data.iter_mut().for_each(|v| *v = f(*v));
                }
            }
        }
    }

    fn validate(&self) -> Result<(), WaveletError> {
        self.spec.check_dims(self.width, self.height)?;
        if self.channels.is_empty() {
            return Err(WaveletError::Structure("no channels".into()));
        }
        let check = |band: &Band, w: usize, h: usize, what: &str| {
            if band.width != w || band.height != h || band.data.len() != w * h {
                Err(WaveletError::Structure(format!(
                    "{what} is {}x{} ({} samples), expected {w}x{h}",
                    band.width,
                    band.height,
                    band.data.len()
                )))
            } else {
                Ok(())
            }
        };
        let levels = self.spec.levels;
        for ch in &self.channels {
            check(
                &ch.approximation,
                self.width >> levels,
                self.height >> levels,
                "approximation",
            )?;
            if ch.levels.len() != levels {
                return Err(WaveletError::Structure(format!(
                    "{} detail levels, expected {levels}",
                    ch.levels.len()
                )));
            }
            for (j, level) in ch.levels.iter().enumerate() {
                let (w, h) = (self.width >> (j + 1), self.height >> (j + 1));
                for o in Orientation::ALL {
                    check(level.band(o), w, h, &format!("level {} {:?}", j + 1, o))?;
                }
            }
        }
        Ok(())
    }
}

fn dwt_channel(plane: &[f32], width: usize, height: usize, spec: &WaveletSpec, fb: &FilterBank) -> ChannelPyramid {
    let mut current: Vec<f64> = plane.iter().map(|&v| v as f64).collect();
    let (mut w, mut h) = (width, height);
    let mut levels = Vec::with_capacity(spec.levels);
    let mut row_buf = vec![0.0; w.max(h)];
    let mut lo_buf = vec![0.0; w.max(h) / 2];
    let mut hi_buf = vec![0.0; w.max(h) / 2];
    for _ in 0..spec.levels {
        let (hw, hh) = (w / 2, h / 2);
        if spec.family == Family::Haar {
            let (approx, details) = haar_step(&current, w, h);
            levels.push(details);
            current = approx;
            w = hw;
            h = hh;
            continue;
        }
        // rows: low-pass half, then high-pass half
        let mut lo_x = vec![0.0; h * hw];
        let mut hi_x = vec![0.0; h * hw];
        for y in 0..h {
            fb.analyze(
                &current[y * w..(y + 1) * w],
                &mut lo_x[y * hw..(y + 1) * hw],
                &mut hi_x[y * hw..(y + 1) * hw],
            );
        }
        // columns
        let mut split_columns = |src: &[f64]| {
            let mut lo = Band::zeros(hw, hh);
            let mut hi = Band::zeros(hw, hh);
            for x in 0..hw {
                for y in 0..h {
                    row_buf[y] = src[y * hw + x];
                }
                fb.analyze(&row_buf[..h], &mut lo_buf[..hh], &mut hi_buf[..hh]);
                for y in 0..hh {
                    lo.data[y * hw + x] = lo_buf[y];
                    hi.data[y * hw + x] = hi_buf[y];
                }
            }
            (lo, hi)
        };
        let (approx, horizontal) = split_columns(&lo_x);
        let (vertical, diagonal) = split_columns(&hi_x);
        levels.push(LevelDetails {
            horizontal,
            vertical,
            diagonal,
        });
        current = approx.data;
        w = hw;
        h = hh;
    }
    ChannelPyramid {
        approximation: Band {
            width: w,
            height: h,
            data: current,
        },
        levels,
    }
}

fn idwt_channel(ch: &ChannelPyramid, fb: &FilterBank, family: Family) -> Vec<f64> {
    let mut current = ch.approximation.data.clone();
    let (mut w, mut h) = (ch.approximation.width, ch.approximation.height);
    for level in ch.levels.iter().rev() {
        let (fw, fh) = (w * 2, h * 2);
        if family == Family::Haar {
            current = haar_inverse_step(&current, level, w, h);
            w = fw;
            h = fh;
            continue;
        }
        let mut col_lo = vec![0.0; h];
        let mut col_hi = vec![0.0; h];
        let mut col_out = vec![0.0; fh];
        let mut merge_columns = |lo: &[f64], hi: &[f64]| {
            let mut out = vec![0.0; fh * w];
            for x in 0..w {
                for y in 0..h {
                    col_lo[y] = lo[y * w + x];
                    col_hi[y] = hi[y * w + x];
                }
                fb.synthesize(&col_lo, &col_hi, &mut col_out);
                for y in 0..fh {
                    out[y * w + x] = col_out[y];
                }
            }
            out
        };
        let lo_x = merge_columns(&current, &level.horizontal.data);
        let hi_x = merge_columns(&level.vertical.data, &level.diagonal.data);
        let mut full = vec![0.0; fw * fh];
        for y in 0..fh {
            fb.synthesize(
                &lo_x[y * w..(y + 1) * w],
                &hi_x[y * w..(y + 1) * w],
                &mut full[y * fw..(y + 1) * fw],
            );
        }
        current = full;
        w = fw;
        h = fh;
    }
    current
}

const HAAR_TAP: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// One Haar level computed directly on 2x2 blocks. The arithmetic is the
/// separable row-then-column filter bank with the same operation order, so the
/// results are bit-identical to the generic path, just without the buffers.
fn haar_step(x: &[f64], w: usize, h: usize) -> (Vec<f64>, LevelDetails) {
    let (hw, hh) = (w / 2, h / 2);
    let s = HAAR_TAP;
    let mut approx = vec![0.0; hw * hh];
    let mut horizontal = Band::zeros(hw, hh);
    let mut vertical = Band::zeros(hw, hh);
    let mut diagonal = Band::zeros(hw, hh);
    for y in 0..hh {
        let top = &x[2 * y * w..(2 * y + 1) * w];
        let bottom = &x[(2 * y + 1) * w..(2 * y + 2) * w];
        for i in 0..hw {
            let (a, b, c, d) = (top[2 * i], top[2 * i + 1], bottom[2 * i], bottom[2 * i + 1]);
            let (l0, h0) = (0.0 + s * a + s * b, 0.0 + s * a + -s * b);
            let (l1, h1) = (0.0 + s * c + s * d, 0.0 + s * c + -s * d);
            let o = y * hw + i;
            approx[o] = 0.0 + s * l0 + s * l1;
            horizontal.data[o] = 0.0 + s * l0 + -s * l1;
            vertical.data[o] = 0.0 + s * h0 + s * h1;
            diagonal.data[o] = 0.0 + s * h0 + -s * h1;
        }
    }
    (
        approx,
        LevelDetails {
            horizontal,
            vertical,
            diagonal,
        },
    )
}

/// Inverse of [`haar_step`] from a `w x h` approximation to `2w x 2h`.
fn haar_inverse_step(approx: &[f64], level: &LevelDetails, w: usize, h: usize) -> Vec<f64> {
    let s = HAAR_TAP;
    let fw = 2 * w;
    let mut out = vec![0.0; fw * 2 * h];
    for y in 0..h {
        for i in 0..w {
            let o = y * w + i;
            let (a, hz, v, d) = (
                approx[o],
                level.horizontal.data[o],
                level.vertical.data[o],
                level.diagonal.data[o],
            );
            // columns first, then rows, as in the generic synthesis
            let (l0, l1) = (0.0 + (s * a + s * hz), 0.0 + (s * a + -s * hz));
            let (h0, h1) = (0.0 + (s * v + s * d), 0.0 + (s * v + -s * d));
            let top = 2 * y * fw + 2 * i;
            let bottom = top + fw;
            out[top] = 0.0 + (s * l0 + s * h0);
            out[top + 1] = 0.0 + (s * l0 + -s * h0);
            out[bottom] = 0.0 + (s * l1 + s * h1);
            out[bottom + 1] = 0.0 + (s * l1 + -s * h1);
        }
    }
    out
}

/// Forward multilevel transform of every channel.
pub fn dwt2d(image: &Image, spec: &WaveletSpec) -> Result<WaveletPyramid, WaveletError> {
    spec.check_dims(image.width(), image.height())?;
    if !image.is_finite() {
        return Err(WaveletError::NonFiniteInput);
    }
    let fb = spec.filters();
    let channels = (0..image.channels())
        .map(|c| dwt_channel(image.plane(c), image.width(), image.height(), spec, &fb))
        .collect();
    Ok(WaveletPyramid {
        spec: *spec,
        width: image.width(),
        height: image.height(),
        channels,
    })
}

/// Inverse transform. The output is not clamped.
pub fn idwt2d(pyramid: &WaveletPyramid) -> Result<Image, WaveletError> {
    pyramid.validate()?;
    let n_channels = pyramid.channels.len();
    if n_channels != 1 && n_channels != 3 {
        return Err(WaveletError::Structure(format!("{n_channels} channels")));
    }
    let fb = pyramid.spec.filters();
    let mut data = Vec::with_capacity(pyramid.width * pyramid.height * n_channels);
    for ch in &pyramid.channels {
        data.extend(idwt_channel(ch, &fb, pyramid.spec.family).into_iter().map(|v| v as f32));
    }
    Image::new(pyramid.width, pyramid.height, n_channels, data)
        .map_err(|e| WaveletError::Structure(e.to_string()))
}

/// Axis-aligned rectangle in row/column units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self { row, col, height, width }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let r0 = self.row.max(other.row);
        let c0 = self.col.max(other.col);
        let r1 = (self.row + self.height).min(other.row + other.height);
        let c1 = (self.col + self.width).min(other.col + other.width);
        (r1 > r0 && c1 > c0).then(|| Rect::new(r0, c0, r1 - r0, c1 - c0))
    }
}

/// Identifies one band of a pyramid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BandId {
    Approximation { level: usize },
    Detail { level: usize, orientation: Orientation },
}

impl BandId {
    /// Downsampling factor between band coordinates and pixels.
    pub fn scale(&self) -> usize {
        match *self {
            BandId::Approximation { level } | BandId::Detail { level, .. } => 1 << level,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BandId::Approximation { level } => format!("A{level}"),
            BandId::Detail { level, orientation } => {
                let o = match orientation {
                    Orientation::Horizontal => 'H',
                    Orientation::Vertical => 'V',
                    Orientation::Diagonal => 'D',
                };
                format!("{o}{level}")
            }
        }
    }
}

/// Where each band sits in the nested-corner plane layout: approximation in
/// the north-west corner; at level `j` horizontal detail to the east of the
/// level-`j` low-pass block, vertical detail to the south, diagonal south-east.
pub fn band_regions(spec: &WaveletSpec, width: usize, height: usize) -> Vec<(BandId, Rect)> {
    let mut out = vec![(
        BandId::Approximation { level: spec.levels },
        Rect::new(0, 0, height >> spec.levels, width >> spec.levels),
    )];
    for level in (1..=spec.levels).rev() {
        let (bw, bh) = (width >> level, height >> level);
        out.push((
            BandId::Detail {
                level,
                orientation: Orientation::Horizontal,
            },
            Rect::new(0, bw, bh, bw),
        ));
        out.push((
            BandId::Detail {
                level,
                orientation: Orientation::Vertical,
            },
            Rect::new(bh, 0, bh, bw),
        ));
        out.push((
            BandId::Detail {
                level,
                orientation: Orientation::Diagonal,
            },
            Rect::new(bh, bw, bh, bw),
        ));
    }
    out
}

/// Single-plane arrangement of a pyramid, one `height x width` plane per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPlane {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f64>>,
}

impl CoefficientPlane {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.planes[channel][row * self.width + col]
    }
}

fn band_of<'a>(ch: &'a ChannelPyramid, id: BandId) -> &'a Band {
    match id {
        BandId::Approximation { .. } => &ch.approximation,
        BandId::Detail { level, orientation } => ch.levels[level - 1].band(orientation),
    }
}

fn band_of_mut(ch: &mut ChannelPyramid, id: BandId) -> &mut Band {
    match id {
        BandId::Approximation { .. } => &mut ch.approximation,
        BandId::Detail { level, orientation } => ch.levels[level - 1].band_mut(orientation),
    }
}

pub fn pyramid_layout(pyramid: &WaveletPyramid) -> Result<CoefficientPlane, WaveletError> {
    pyramid.validate()?;
    let (w, h) = (pyramid.width, pyramid.height);
    let regions = band_regions(&pyramid.spec, w, h);
    let planes = pyramid
        .channels
        .iter()
        .map(|ch| {
            let mut plane = vec![0.0; w * h];
            for &(id, rect) in &regions {
                let band = band_of(ch, id);
                for r in 0..rect.height {
                    let dst = (rect.row + r) * w + rect.col;
                    plane[dst..dst + rect.width].copy_from_slice(&band.data[r * band.width..(r + 1) * band.width]);
                }
            }
            plane
        })
        .collect();
    Ok(CoefficientPlane {
        width: w,
        height: h,
        planes,
    })
}

pub fn plane_to_pyramid(plane: &CoefficientPlane, spec: &WaveletSpec) -> Result<WaveletPyramid, WaveletError> {
    let (w, h) = (plane.width, plane.height);
    spec.check_dims(w, h)?;
    if plane.planes.iter().any(|p| p.len() != w * h) || plane.planes.is_empty() {
        return Err(WaveletError::Structure("plane size does not match its dimensions".into()));
    }
    let channels = plane
        .planes
        .iter()
        .map(|p| {
            let mut ch = ChannelPyramid {
                approximation: Band::zeros(w >> spec.levels, h >> spec.levels),
                levels: (1..=spec.levels)
                    .map(|j| LevelDetails {
                        horizontal: Band::zeros(w >> j, h >> j),
                        vertical: Band::zeros(w >> j, h >> j),
                        diagonal: Band::zeros(w >> j, h >> j),
                    })
                    .collect(),
            };
            for (id, rect) in band_regions(spec, w, h) {
                let band = band_of_mut(&mut ch, id);
                for r in 0..rect.height {
                    let src = (rect.row + r) * w + rect.col;
                    band.data[r * rect.width..(r + 1) * rect.width].copy_from_slice(&p[src..src + rect.width]);
                }
            }
            ch
        })
        .collect();
    Ok(WaveletPyramid {
        spec: *spec,
        width: w,
        height: h,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_block_path_matches_generic_filter_bank_bitwise() {
        let (w, h) = (8, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen()).collect();
        let fb = FilterBank::new(Family::Haar);
        let (hw, hh) = (w / 2, h / 2);
        let (mut lo_x, mut hi_x) = (vec![0.0; h * hw], vec![0.0; h * hw]);
        for y in 0..h {
            fb.analyze(&x[y * w..(y + 1) * w], &mut lo_x[y * hw..(y + 1) * hw], &mut hi_x[y * hw..(y + 1) * hw]);
        }
        let columns = |src: &[f64]| {
            let (mut lo, mut hi) = (vec![0.0; hw * hh], vec![0.0; hw * hh]);
            for c in 0..hw {
                let col: Vec<f64> = (0..h).map(|y| src[y * hw + c]).collect();
                let (mut l, mut g) = (vec![0.0; hh], vec![0.0; hh]);
                fb.analyze(&col, &mut l, &mut g);
                for y in 0..hh {
                    lo[y * hw + c] = l[y];
                    hi[y * hw + c] = g[y];
                }
            }
            (lo, hi)
        };
        let (a, hz) = columns(&lo_x);
        let (v, d) = columns(&hi_x);
        let (fast_a, details) = haar_step(&x, w, h);
        assert_eq!(fast_a, a);
        assert_eq!(details.horizontal.data, hz);
        assert_eq!(details.vertical.data, v);
        assert_eq!(details.diagonal.data, d);

        // inverse: columns, then rows
        let merge = |lo: &[f64], hi: &[f64]| {
            let mut out = vec![0.0; h * hw];
            for c in 0..hw {
                let l: Vec<f64> = (0..hh).map(|y| lo[y * hw + c]).collect();
                let g: Vec<f64> = (0..hh).map(|y| hi[y * hw + c]).collect();
                let mut col = vec![0.0; h];
                fb.synthesize(&l, &g, &mut col);
                for y in 0..h {
                    out[y * hw + c] = col[y];
                }
            }
            out
        };
        let (lo_x, hi_x) = (merge(&a, &hz), merge(&v, &d));
        let mut full = vec![0.0; w * h];
        for y in 0..h {
            fb.synthesize(&lo_x[y * hw..(y + 1) * hw], &hi_x[y * hw..(y + 1) * hw], &mut full[y * w..(y + 1) * w]);
        }
        assert_eq!(haar_inverse_step(&fast_a, &details, hw, hh), full);
    }

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, c, |_, _, _| rng.gen::<f32>()).unwrap()
    }

    #[test]
    fn filters_are_orthonormal() {
        for family in [Family::Haar, Family::Db2] {
            let fb = FilterBank::new(family);
            let dot = |a: &[f64], b: &[f64], shift: usize| -> f64 {
                (0..a.len()).filter(|k| k + shift < b.len()).map(|k| a[k + shift] * b[k]).sum()
            };
            assert!((dot(&fb.lo, &fb.lo, 0) - 1.0).abs() < 1e-12);
            assert!((dot(&fb.hi, &fb.hi, 0) - 1.0).abs() < 1e-12);
            assert!(dot(&fb.lo, &fb.hi, 0).abs() < 1e-12);
            assert!((fb.lo.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!(fb.hi.iter().sum::<f64>().abs() < 1e-12);
            if fb.lo.len() > 2 {
                assert!(dot(&fb.lo, &fb.lo, 2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_has_no_detail() {
        let img = Image::filled(32, 32, 3, 0.5).unwrap();
        let p = dwt2d(&img, &WaveletSpec::haar(3)).unwrap();
        for ch in &p.channels {
            for level in &ch.levels {
                assert!(level.energy() < 1e-24);
            }
            // each level scales the DC by 2 (orthonormal 2-D Haar)
            for &v in &ch.approximation.data {
                assert!((v - 0.5 * 8.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indivisible_sides() {
        let img = Image::filled(12, 16, 1, 0.0).unwrap();
        assert_eq!(
            dwt2d(&img, &WaveletSpec::haar(3)).unwrap_err(),
            WaveletError::Dimension {
                width: 12,
                height: 16,
                levels: 3
            }
        );
        assert!(dwt2d(&img, &WaveletSpec::haar(2)).is_ok());
        assert_eq!(dwt2d(&img, &WaveletSpec::haar(0)).unwrap_err(), WaveletError::NoLevels);
    }

    #[test]
    fn rejects_non_finite() {
        let mut img = Image::filled(8, 8, 1, 0.0).unwrap();
        img.data_mut()[5] = f32::NAN;
        assert_eq!(dwt2d(&img, &WaveletSpec::haar(1)).unwrap_err(), WaveletError::NonFiniteInput);
    }

    #[test]
    fn db2_symmetric_is_rejected() {
        let spec = WaveletSpec {
            boundary: Boundary::Symmetric,
            ..WaveletSpec::db2(1)
        };
        assert!(matches!(spec.validate(), Err(WaveletError::UnsupportedBoundary { .. })));
        let haar_sym = WaveletSpec {
            boundary: Boundary::Symmetric,
            ..WaveletSpec::haar(2)
        };
        let img = random_image(16, 16, 1, 3);
        let a = dwt2d(&img, &haar_sym).unwrap();
        let b = dwt2d(&img, &WaveletSpec::haar(2)).unwrap();
        assert_eq!(a.channels, b.channels);
    }

    #[test]
    fn db2_round_trip_and_energy() {
        let img = random_image(32, 16, 3, 11);
        let p = dwt2d(&img, &WaveletSpec::db2(3)).unwrap();
        let back = idwt2d(&p).unwrap();
        assert!(img.max_abs_diff(&back) < 1e-6);
        let e_in: f64 = img.data().iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((p.energy() - e_in).abs() / e_in < 1e-9);
    }

    #[test]
    fn idwt_of_zero_pyramid_is_zero() {
        let img = random_image(16, 16, 1, 5);
        let mut p = dwt2d(&img, &WaveletSpec::haar(2)).unwrap();
        p.map_coefficients(|_| 0.0);
        assert!(idwt2d(&p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idwt_rejects_bad_structure() {
        let img = random_image(16, 16, 1, 5);
        let mut p = dwt2d(&img, &WaveletSpec::haar(2)).unwrap();
        p.channels[0].levels[1].diagonal.data.pop();
        assert!(matches!(idwt2d(&p), Err(WaveletError::Structure(_))));
        let mut p = dwt2d(&img, &WaveletSpec::haar(2)).unwrap();
        p.channels[0].levels.pop();
        assert!(matches!(idwt2d(&p), Err(WaveletError::Structure(_))));
    }

    #[test]
    fn layout_one_level_puts_approximation_north_west() {
        let img = random_image(4, 4, 1, 1);
        let p = dwt2d(&img, &WaveletSpec::haar(1)).unwrap();
        let plane = pyramid_layout(&p).unwrap();
        let ch = &p.channels[0];
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(plane.get(0, r, c), ch.approximation.get(r, c));
                assert_eq!(plane.get(0, r, c + 2), ch.levels[0].horizontal.get(r, c));
                assert_eq!(plane.get(0, r + 2, c), ch.levels[0].vertical.get(r, c));
                assert_eq!(plane.get(0, r + 2, c + 2), ch.levels[0].diagonal.get(r, c));
            }
        }
    }

    #[test]
    fn layout_nests_coarser_levels() {
        let img = random_image(8, 8, 1, 2);
        let p = dwt2d(&img, &WaveletSpec::haar(2)).unwrap();
        let plane = pyramid_layout(&p).unwrap();
        let l2 = &p.channels[0].levels[1];
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(plane.get(0, r, c), p.channels[0].approximation.get(r, c));
                assert_eq!(plane.get(0, r, c + 2), l2.horizontal.get(r, c));
                assert_eq!(plane.get(0, r + 2, c), l2.vertical.get(r, c));
                assert_eq!(plane.get(0, r + 2, c + 2), l2.diagonal.get(r, c));
            }
        }
        let regions = band_regions(&WaveletSpec::haar(2), 8, 8);
        let covered: usize = regions.iter().map(|(_, r)| r.area()).sum();
        assert_eq!(covered, 64);
    }

    #[test]
    fn plane_to_pyramid_rejects_indivisible_plane() {
        let plane = CoefficientPlane {
            width: 6,
            height: 6,
            planes: vec![vec![0.0; 36]],
        };
        assert!(matches!(
            plane_to_pyramid(&plane, &WaveletSpec::haar(2)),
            Err(WaveletError::Dimension { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn layout_is_a_bijection(seed in any::<u64>(), levels in 1usize..=3, channels in prop::sample::select(vec![1usize, 3])) {
            let spec = WaveletSpec::haar(levels);
            let img = random_image(16, 8, channels, seed);
            let p = dwt2d(&img, &spec).unwrap();
            let plane = pyramid_layout(&p).unwrap();
            prop_assert_eq!(plane_to_pyramid(&plane, &spec).unwrap(), p);
        }

        #[test]
        fn transform_is_linear(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let spec = WaveletSpec::haar(3);
            let x = random_image(16, 16, 3, seed);
            let y = random_image(16, 16, 3, seed.wrapping_add(1));
            let mix = Image::new(16, 16, 3, x.data().iter().zip(y.data()).map(|(&u, &v)| a * u + b * v).collect()).unwrap();
            let (px, py, pm) = (dwt2d(&x, &spec).unwrap(), dwt2d(&y, &spec).unwrap(), dwt2d(&mix, &spec).unwrap());
            let plane = |p: &WaveletPyramid| pyramid_layout(p).unwrap().planes.concat();
            for ((u, v), m) in plane(&px).iter().zip(plane(&py)).zip(plane(&pm)) {
                prop_assert!((a as f64 * u + b as f64 * v - m).abs() < 1e-5);
            }
        }

        #[test]
        fn channels_transform_independently(seed in any::<u64>()) {
            let spec = WaveletSpec::db2(2);
            let img = random_image(8, 8, 3, seed);
            let joint = dwt2d(&img, &spec).unwrap();
            for c in 0..3 {
                let single = Image::new(8, 8, 1, img.plane(c).to_vec()).unwrap();
                let p = dwt2d(&single, &spec).unwrap();
                prop_assert_eq!(&p.channels[0], &joint.channels[c]);
            }
        }
    }
}
