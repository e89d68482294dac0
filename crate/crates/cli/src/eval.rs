use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use wcam::metrics::{
    disentangle_report, pair_positives, probability_shift, read_manifest, Label, ManifestEntry, MetricsError, PairingSpec,
    Provider,
};
use wcam::model::score_batch;
use wcam::{Image, WcamConfig};

use crate::models::{AdapterSettings, ModelSpec};
use crate::output::OutputSet;
use crate::{load_config, parse_enum, DataIncomplete};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with columns path,label,provider,installation_id,test_set.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSON object mapping manifest paths to scores.
    #[arg(long, conflicts_with = "model")]
    pub scores: Option<PathBuf>,
    /// Score the manifest's images live with this model instead.
    #[arg(long)]
    pub model: Option<ModelSpec>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Provider whose positives are the reference of the shift analysis.
    #[arg(long, value_parser = parse_enum::<Provider>)]
    pub source: Option<Provider>,
    #[arg(long, value_parser = parse_enum::<Provider>)]
    pub target: Option<Provider>,
    #[arg(long)]
    pub source_test_set: Option<String>,
    #[arg(long)]
    pub target_test_set: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalRun {
    pub manifest: PathBuf,
    pub scores: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub out: PathBuf,
    pub threshold: f64,
    pub pairing: PairingSpec,
    /// Model parameters used for live scoring with a built-in model.
    pub wcam: WcamConfig,
    pub adapter: AdapterSettings,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            scores: None,
            model: None,
            out: PathBuf::from("."),
            threshold: 0.5,
            pairing: PairingSpec::default(),
            wcam: WcamConfig::default(),
            adapter: AdapterSettings::default(),
        }
    }
}

impl EvalArgs {
    pub fn resolve(self) -> Result<EvalRun> {
        let mut run: EvalRun = match &self.config {
            Some(path) => load_config(path)?,
            None => EvalRun::default(),
        };
        if let Some(v) = self.manifest {
            run.manifest = v;
        }
        if self.scores.is_some() {
            run.scores = self.scores;
            run.model = None;
        }
        if self.model.is_some() {
            run.model = self.model;
            run.scores = None;
        }
        if let Some(v) = self.out {
            run.out = v;
        }
        if let Some(v) = self.threshold {
            run.threshold = v;
        }
        if let Some(v) = self.source {
            run.pairing.source = v;
        }
        if let Some(v) = self.target {
            run.pairing.target = v;
        }
        if self.source_test_set.is_some() {
            run.pairing.source_test_set = self.source_test_set;
        }
        if self.target_test_set.is_some() {
            run.pairing.target_test_set = self.target_test_set;
        }
        if run.manifest.as_os_str().is_empty() {
            bail!("no manifest; pass --manifest PATH");
        }
        if run.scores.is_none() && run.model.is_none() {
            bail!("pass --scores PATH or --model SPEC");
        }
        if !(0.0..=1.0).contains(&run.threshold) {
            bail!("threshold must lie in [0, 1]");
        }
        Ok(run)
    }
}

fn data_error(e: MetricsError) -> anyhow::Error {
    match e {
        MetricsError::MissingScores(paths) => {
            DataIncomplete(format!("{} manifest entries have no score:\n  {}", paths.len(), paths.join("\n  "))).into()
        }
        MetricsError::EmptyTestSet(row) => DataIncomplete(format!("manifest row {row} has an empty test_set")).into(),
        MetricsError::UnpairedEntry(id) => {
            DataIncomplete(format!("installation {id} has no counterpart in the paired provider")).into()
        }
        other => other.into(),
    }
}

fn read_scores(path: &Path) -> Result<HashMap<String, f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing scores {}", path.display()))
}

/// Scores every manifest image, resolving relative paths against the manifest's directory.
fn score_live(run: &EvalRun, model: &ModelSpec, entries: &[ManifestEntry]) -> Result<HashMap<String, f64>> {
    let base = run.manifest.parent().unwrap_or(Path::new(""));
    let external = if model.is_external() {
        Some(model.connect_external(&run.adapter)?)
    } else {
        None
    };
    let mut scores = HashMap::with_capacity(entries.len());
    for e in entries {
        let path = base.join(&e.path);
        let img = Image::load(&path).with_context(|| format!("reading {}", path.display()))?;
        let s = match &external {
            Some(m) => score_batch(m.as_ref(), std::slice::from_ref(&img))?,
            None => {
                let m = model.builtin(img.width(), &run.wcam, wcam::model::CellEnergyModel::DEFAULT_ALPHA)?;
                score_batch(m.as_ref(), std::slice::from_ref(&img))?
            }
        };
        scores.insert(e.path.clone(), s[0]);
    }
    Ok(scores)
}

pub fn run(args: EvalArgs) -> Result<()> {
    let run = args.resolve()?;
    let file = File::open(&run.manifest).with_context(|| format!("opening {}", run.manifest.display()))?;
    let entries = read_manifest(file).map_err(data_error)?;
    let scores = match (&run.scores, &run.model) {
        (Some(path), _) => read_scores(path)?,
        (None, Some(model)) => score_live(&run, model, &entries)?,
        (None, None) => unreachable!("checked in resolve"),
    };
    let report = disentangle_report(&entries, &scores, run.threshold).map_err(data_error)?;
    // the shift analysis needs positives from both providers; a single-provider
    // manifest just skips it
    let has_side = |provider: Provider, set: &Option<String>| {
        entries.iter().any(|e| {
            e.label == Label::Pv && e.provider == provider && set.as_ref().map_or(true, |s| *s == e.test_set)
        })
    };
    let pairs = if has_side(run.pairing.source, &run.pairing.source_test_set)
        && has_side(run.pairing.target, &run.pairing.target_test_set)
    {
        pair_positives(&entries, &scores, &run.pairing).map_err(data_error)?
    } else {
        Vec::new()
    };

    let mut out = OutputSet::new();
    out.add(run.out.join("report.csv"), report.to_csv());
    out.add_json(run.out.join("report.json"), &report)?;
    let shift = if pairs.is_empty() {
        None
    } else {
        let analysis = probability_shift(&pairs, run.threshold)?;
        #[derive(Serialize)]
        struct ShiftOutput<'a> {
            source: Provider,
            target: Provider,
            #[serde(flatten)]
            analysis: &'a wcam::metrics::ShiftAnalysis,
            paired: &'a [wcam::metrics::PairedScore],
        }
        out.add_json(
            run.out.join("shift.json"),
            &ShiftOutput {
                source: run.pairing.source,
                target: run.pairing.target,
                analysis: &analysis,
                paired: &pairs,
            },
        )?;
        Some(analysis)
    };
    out.add_json(run.out.join("eval.config.json"), &run)?;
    out.commit()?;

    print!("{}", report.to_pretty());
    match shift {
        Some(a) => println!(
            "probability shift over {} paired positives: mean delta {:.2}, {:.0}% cross the threshold downward",
            a.pairs,
            a.mean_delta,
            100.0 * a.downward_crossing_fraction
        ),
        None => println!("no paired positives for the shift analysis"),
    }
    Ok(())
}
