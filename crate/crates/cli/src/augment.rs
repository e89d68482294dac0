use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wcam::augment::{blur_wp, gaussian_blur, wavelet_perturb, AugmentConfig, PerturbReport};
use wcam::wavelet::Family;
use wcam::Image;

use crate::output::OutputSet;
use crate::{load_config, parse_enum, thread_pool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Blur,
    Wp,
    BlurWp,
}

impl Operator {
    fn suffix(self) -> &'static str {
        match self {
            Operator::Blur => "blur",
            Operator::Wp => "wp",
            Operator::BlurWp => "blur-wp",
        }
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Operator to apply.
    #[arg(long = "op", value_enum)]
    pub op: Option<Operator>,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub drop_rate: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long, value_parser = parse_enum::<Family>)]
    pub family: Option<Family>,
    /// Base seed; the i-th input in sorted order uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRun {
    pub op: Operator,
    pub input: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub augment: AugmentConfig,
}

impl Default for AugmentRun {
    fn default() -> Self {
        Self {
            op: Operator::BlurWp,
            input: PathBuf::new(),
            out: PathBuf::from("."),
            jobs: 1,
            augment: AugmentConfig::default(),
        }
    }
}

impl AugmentArgs {
    pub fn resolve(self) -> Result<AugmentRun> {
        let mut run: AugmentRun = match &self.config {
            Some(path) => load_config(path)?,
            None => AugmentRun::default(),
        };
        if let Some(v) = self.op {
            run.op = v;
        }
        if let Some(v) = self.input {
            run.input = v;
        }
        if let Some(v) = self.out {
            run.out = v;
        }
        if let Some(v) = self.jobs {
            run.jobs = v;
        }
        if let Some(v) = self.sigma {
            run.augment.sigma = v;
        }
        if let Some(v) = self.drop_rate {
            run.augment.drop_rate = v;
        }
        if let Some(v) = self.levels {
            run.augment.spec.levels = v;
        }
        if let Some(v) = self.family {
            run.augment.spec.family = v;
        }
        if let Some(v) = self.seed {
            run.augment.seed = v;
        }
        if run.input.as_os_str().is_empty() {
            bail!("no input; pass --input FILE|DIR");
        }
        if run.jobs == 0 {
            bail!("--jobs must be positive");
        }
        run.augment.validate()?;
        Ok(run)
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn list_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("input {} does not exist", input.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && is_image(p));
    files.sort();
    if files.is_empty() {
        bail!("no PNG or JPEG images in {}", input.display());
    }
    Ok(files)
}

fn apply(op: Operator, image: &Image, config: &AugmentConfig) -> Result<(Image, Option<PerturbReport>)> {
    Ok(match op {
        Operator::Blur => {
            let mut out = gaussian_blur(image, config.sigma)?;
            out.clamp_unit();
            (out, None)
        }
        Operator::Wp => {
            let (img, report) = wavelet_perturb(image, config)?;
            (img, Some(report))
        }
        Operator::BlurWp => {
            let (img, report) = blur_wp(image, config)?;
            (img, Some(report))
        }
    })
}

pub fn run(args: AugmentArgs) -> Result<()> {
    let run = args.resolve()?;
    let inputs = list_inputs(&run.input)?;
    let processed: Vec<(Vec<u8>, Option<PerturbReport>)> = thread_pool(run.jobs)?.install(|| {
        inputs
            .par_iter()
            .enumerate()
            .map(|(i, path)| -> Result<_> {
                let img = Image::load(path).with_context(|| format!("reading {}", path.display()))?;
                let config = AugmentConfig {
                    seed: run.augment.seed.wrapping_add(i as u64),
                    ..run.augment.clone()
                };
                let (out, report) = apply(run.op, &img, &config).with_context(|| format!("augmenting {}", path.display()))?;
                Ok((out.encode_png()?, report))
            })
            .collect::<Result<Vec<(Vec<u8>, Option<PerturbReport>)>>>()
    })?;

    let mut out = OutputSet::new();
    for (path, (png, _)) in inputs.iter().zip(&processed) {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.add(run.out.join(format!("{stem}.{}.png", run.op.suffix())), png.clone());
    }
    out.add_json(run.out.join("augment.config.json"), &run)?;
    out.commit()?;

    for (path, (_, report)) in inputs.iter().zip(&processed) {
        match report {
            Some(r) => {
                let counts = &r.cancelled;
                let per_channel = if counts.windows(2).all(|w| w[0] == w[1]) {
                    format!("{}/{}", counts[0], r.coefficients_per_channel)
                } else {
                    format!("{counts:?}/{}", r.coefficients_per_channel)
                };
                println!("{}: {per_channel} coefficients cancelled per channel", path.display());
            }
            None => println!("{}: blurred with sigma {}", path.display(), run.augment.sigma),
        }
    }
    println!("{} image(s) written to {}", inputs.len(), run.out.display());
    Ok(())
}
