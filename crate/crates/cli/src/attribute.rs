use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wcam::attribution::{render_comparison, render_heatmap, HeatmapMode, RenderOptions};
use wcam::wavelet::{Boundary, Family};
use wcam::{attribute, Image, WcamConfig, WcamResult};

use crate::models::{AdapterSettings, ModelSpec};
use crate::output::OutputSet;
use crate::{load_config, parse_enum, thread_pool};

#[derive(Debug, Args)]
pub struct AttributeArgs {
    /// Input image (PNG or JPEG); repeat for several images.
    #[arg(long = "image", value_name = "PATH")]
    pub images: Vec<PathBuf>,
    /// builtin:cell<k>, builtin:mean, stdio:<command> or http(s)://host:port.
    #[arg(long)]
    pub model: Option<ModelSpec>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sobol samples per design matrix.
    #[arg(long)]
    pub n: Option<usize>,
    /// Features per side of the wavelet-plane grid.
    #[arg(long = "grid-size", alias = "grid")]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// haar or db2.
    #[arg(long, value_parser = parse_enum::<Family>)]
    pub family: Option<Family>,
    /// periodic or symmetric.
    #[arg(long, value_parser = parse_enum::<Boundary>)]
    pub boundary: Option<Boundary>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Digital-shift scramble the design with the seed.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scramble: Option<bool>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub in_flight: Option<usize>,
    /// Clamp masked reconstructions to [0, 1] before scoring.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clamp_reconstruction: Option<bool>,
    /// Gain of the built-in cell-energy model.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Crop the centred SIZE x SIZE window before attribution.
    #[arg(long, value_name = "SIZE")]
    pub center_crop: Option<usize>,
    /// Also render the two images side by side on a shared colour scale.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub compare: Option<bool>,
    /// Images attributed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_batch: Option<usize>,
    #[arg(long)]
    pub retries: Option<usize>,
}

/// Everything that determines an attribution run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeRun {
    pub images: Vec<PathBuf>,
    pub model: Option<ModelSpec>,
    pub out: PathBuf,
    pub alpha: f64,
    pub center_crop: Option<usize>,
    pub compare: bool,
    pub jobs: usize,
    pub wcam: WcamConfig,
    pub adapter: AdapterSettings,
}

impl Default for AttributeRun {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            model: None,
            out: PathBuf::from("."),
            alpha: wcam::model::CellEnergyModel::DEFAULT_ALPHA,
            center_crop: None,
            compare: false,
            jobs: 1,
            wcam: WcamConfig::default(),
            adapter: AdapterSettings::default(),
        }
    }
}

impl AttributeArgs {
    pub fn resolve(self) -> Result<AttributeRun> {
        let mut run: AttributeRun = match &self.config {
            Some(path) => load_config(path)?,
            None => AttributeRun::default(),
        };
        if !self.images.is_empty() {
            run.images = self.images;
        }
        macro_rules! set {
            ($($flag:expr => $field:expr),* $(,)?) => {$(
                if let Some(v) = $flag {
                    $field = v;
                }
            )*};
        }
        set! {
            self.out => run.out,
            self.alpha => run.alpha,
            self.compare => run.compare,
            self.jobs => run.jobs,
            self.n => run.wcam.n,
            self.grid_size => run.wcam.grid_size,
            self.levels => run.wcam.spec.levels,
            self.family => run.wcam.spec.family,
            self.boundary => run.wcam.spec.boundary,
            self.seed => run.wcam.seed,
            self.scramble => run.wcam.scramble,
            self.batch_size => run.wcam.batch_size,
            self.in_flight => run.wcam.in_flight,
            self.clamp_reconstruction => run.wcam.clamp_reconstruction,
            self.timeout_ms => run.adapter.timeout_ms,
            self.max_batch => run.adapter.max_batch,
            self.retries => run.adapter.retries,
        }
        if self.model.is_some() {
            run.model = self.model;
        }
        if self.center_crop.is_some() {
            run.center_crop = self.center_crop;
        }
        run.model = Some(ModelSpec::resolve(run.model)?);
        if run.images.is_empty() {
            bail!("no input image; pass --image PATH");
        }
        if run.jobs == 0 {
            bail!("--jobs must be positive");
        }
        if run.compare && run.images.len() != 2 {
            bail!("--compare needs exactly two images, got {}", run.images.len());
        }
        run.wcam.validate()?;
        Ok(run)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn load_input(path: &Path, crop: Option<usize>) -> Result<Image> {
    if !path.is_file() {
        bail!("input image {} does not exist", path.display());
    }
    let img = Image::load(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match crop {
        Some(size) => img.center_crop(size, size),
        None => img,
    })
}

pub fn run(args: AttributeArgs) -> Result<()> {
    let run = args.resolve()?;
    let model = run.model.clone().expect("resolved above");

    let mut stems = HashSet::new();
    for path in &run.images {
        if !stems.insert(stem(path)) {
            bail!("two inputs share the file stem {:?}; outputs would collide", stem(path));
        }
    }
    let images: Vec<Image> = run
        .images
        .iter()
        .map(|p| load_input(p, run.center_crop))
        .collect::<Result<_>>()?;

    let external = if model.is_external() {
        Some(model.connect_external(&run.adapter)?)
    } else {
        None
    };
    let results: Vec<WcamResult> = thread_pool(run.jobs)?.install(|| {
        images
            .par_iter()
            .zip(&run.images)
            .map(|(img, path)| -> Result<WcamResult> {
                let result = match &external {
                    Some(m) => attribute(img, m.as_ref(), &run.wcam),
                    None => attribute(img, model.builtin(img.width(), &run.wcam, run.alpha)?.as_ref(), &run.wcam),
                };
                result.with_context(|| format!("attributing {}", path.display()))
            })
            .collect::<Result<Vec<WcamResult>>>()
    })?;

    let mut out = OutputSet::new();
    for ((path, img), result) in run.images.iter().zip(&images).zip(&results) {
        let name = stem(path);
        out.add(run.out.join(format!("{name}.wcam.json")), result.to_json()?);
        out.add(
            run.out.join(format!("{name}.scale.png")),
            render_heatmap(result, HeatmapMode::Scale, &RenderOptions::default())?,
        );
        let overlay = RenderOptions {
            source: Some(img),
            ..RenderOptions::default()
        };
        out.add(run.out.join(format!("{name}.spatial.png")), render_heatmap(result, HeatmapMode::Spatial, &overlay)?);
    }
    if run.compare {
        let opts = RenderOptions::default();
        for (mode, name) in [(HeatmapMode::Scale, "compare.scale.png"), (HeatmapMode::Spatial, "compare.spatial.png")] {
            let sources = match mode {
                HeatmapMode::Spatial => (Some(&images[0]), Some(&images[1])),
                HeatmapMode::Scale => (None, None),
            };
            out.add(run.out.join(name), render_comparison(&results[0], &results[1], mode, &opts, sources)?);
        }
    }
    out.add_json(run.out.join("attribute.config.json"), &run)?;
    out.commit()?;

    for (path, result) in run.images.iter().zip(&results) {
        let k = result.argmax();
        println!(
            "{}: argmax feature {k} [{}] TSI {:.3}, {} forwards",
            path.display(),
            result.layout.feature_bands[k].join(" "),
            result.tsi[k],
            result.forwards
        );
    }
    Ok(())
}
