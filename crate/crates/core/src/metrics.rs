//! Classification metrics and the source-to-target probability-shift analysis.
//!
//! A manifest lists every evaluated image with its ground-truth label, the
//! imagery provider it came from, the physical installation it depicts and the
//! test set it belongs to. Scores are joined on the path.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("{0} is undefined for these counts")]
    Undefined(&'static str),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("manifest row {0} has an empty test_set")]
    EmptyTestSet(usize),
    #[error("{} manifest entries have no score, first: {}", .0.len(), .0[0])]
    MissingScores(Vec<String>),
    #[error("installation {0} has no counterpart in the paired provider")]
    UnpairedEntry(String),
    #[error("installation {0} appears more than once on one side of the pairing")]
    AmbiguousPair(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "pv")]
    Pv,
    #[serde(rename = "no-pv")]
    NoPv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Google,
    Ign,
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Predicts positive when `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionCounts, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        if !s.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
        match (s >= threshold, l) {
            (true, Label::Pv) => c.tp += 1,
            (false, Label::NoPv) => c.tn += 1,
            (true, Label::NoPv) => c.fp += 1,
            (false, Label::Pv) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2 tp / (2 tp + fp + fn)`.
pub fn f1(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return Err(MetricsError::Undefined("F1"));
    }
    Ok(2.0 * c.tp as f64 / denom as f64)
}

/// Per-class rates; undefined when either class is absent.
pub fn rates(c: &ConfusionCounts) -> Result<Rates, MetricsError> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::Undefined("rates"));
    }
    Ok(Rates {
        tpr: c.tp as f64 / pos as f64,
        fnr: c.fn_ as f64 / pos as f64,
        tnr: c.tn as f64 / neg as f64,
        fpr: c.fp as f64 / neg as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub provider: Provider,
    pub installation_id: String,
    pub test_set: String,
}

const MANIFEST_HEADER: [&str; 5] = ["path", "label", "provider", "installation_id", "test_set"];

/// Parses a manifest CSV. Paths must be unique and may not contain commas.
pub fn read_manifest(reader: impl Read) -> Result<Vec<ManifestEntry>, MetricsError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header != MANIFEST_HEADER {
        return Err(MetricsError::Manifest(format!(
            "expected header {}, got {}",
            MANIFEST_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (line, record) in csv.deserialize::<ManifestEntry>().enumerate() {
        let entry = record.map_err(|e| MetricsError::Manifest(format!("row {}: {e}", line + 1)))?;
        if entry.test_set.is_empty() {
            return Err(MetricsError::EmptyTestSet(line + 1));
        }
        if entry.path.is_empty() || entry.installation_id.is_empty() {
            return Err(MetricsError::Manifest(format!("row {}: empty field", line + 1)));
        }
        if entry.path.contains(',') {
            return Err(MetricsError::Manifest(format!("row {}: path contains a comma", line + 1)));
        }
        if !seen.insert(entry.path.clone()) {
            return Err(MetricsError::Manifest(format!("duplicate path {}", entry.path)));
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test_set: String,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub f1: Option<f64>,
    pub rates: Option<Rates>,
}

/// Per-test-set metrics, ordered by test-set name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
}

fn scores_for(entries: &[&ManifestEntry], scores: &HashMap<String, f64>) -> Result<Vec<f64>, MetricsError> {
    let missing: Vec<String> = entries
        .iter()
        .filter(|e| !scores.contains_key(&e.path))
        .map(|e| e.path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingScores(missing));
    }
    Ok(entries.iter().map(|e| scores[&e.path]).collect())
}

pub fn disentangle_report(
    manifest: &[ManifestEntry],
    scores: &HashMap<String, f64>,
    threshold: f64,
) -> Result<Report, MetricsError> {
    let mut groups: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in manifest {
        groups.entry(&e.test_set).or_default().push(e);
    }
    let all: Vec<&ManifestEntry> = manifest.iter().collect();
    scores_for(&all, scores)?;
    let mut rows = Vec::with_capacity(groups.len());
    for (name, entries) in groups {
        let s = scores_for(&entries, scores)?;
        let labels: Vec<Label> = entries.iter().map(|e| e.label).collect();
        let counts = confusion(&s, &labels, threshold)?;
        rows.push(ReportRow {
            test_set: name.to_string(),
            n: counts.total(),
            counts,
            f1: f1(&counts).ok(),
            rates: rates(&counts).ok(),
        });
    }
    Ok(Report { threshold, rows })
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test_set,n,tp,tn,fp,fn,f1,tpr,tnr,fpr,fnr\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let c = &r.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.test_set,
                r.n,
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                opt(r.f1),
                opt(r.rates.map(|x| x.tpr)),
                opt(r.rates.map(|x| x.tnr)),
                opt(r.rates.map(|x| x.fpr)),
                opt(r.rates.map(|x| x.fnr)),
            );
        }
        out
    }

    /// Fixed-width table with two decimals.
    pub fn to_pretty(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let width = self.rows.iter().map(|r| r.test_set.len()).max().unwrap_or(8).max(8);
        let mut out = format!(
            "{:<width$} {:>6} {:>6} {:>6} {:>6} {:>6} {:>5} {:>5} {:>5} {:>5} {:>5}\n",
            "test set", "n", "tp", "tn", "fp", "fn", "F1", "TPR", "TNR", "FPR", "FNR"
        );
        for r in &self.rows {
            let c = &r.counts;
            let _ = writeln!(
                out,
                "{:<width$} {:>6} {:>6} {:>6} {:>6} {:>6} {:>5} {:>5} {:>5} {:>5} {:>5}",
                r.test_set,
                r.n,
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                fmt(r.f1),
                fmt(r.rates.map(|x| x.tpr)),
                fmt(r.rates.map(|x| x.tnr)),
                fmt(r.rates.map(|x| x.fpr)),
                fmt(r.rates.map(|x| x.fnr)),
            );
        }
        out
    }
}

/// Which entries to pair: positives of `source` against positives of `target`,
/// optionally restricted to one test set on each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub source: Provider,
    pub target: Provider,
    pub source_test_set: Option<String>,
    pub target_test_set: Option<String>,
}

impl Default for PairingSpec {
    fn default() -> Self {
        Self {
            source: Provider::Google,
            target: Provider::Ign,
            source_test_set: None,
            target_test_set: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScore {
    pub installation_id: String,
    pub source: f64,
    pub target: f64,
}

pub fn pair_positives(
    manifest: &[ManifestEntry],
    scores: &HashMap<String, f64>,
    spec: &PairingSpec,
) -> Result<Vec<PairedScore>, MetricsError> {
    let side = |e: &ManifestEntry, provider: Provider, set: &Option<String>| {
        e.label == Label::Pv && e.provider == provider && set.as_ref().map_or(true, |s| *s == e.test_set)
    };
    let mut sources: BTreeMap<&str, &ManifestEntry> = BTreeMap::new();
    let mut targets: BTreeMap<&str, &ManifestEntry> = BTreeMap::new();
    for e in manifest {
        for (map, provider, set) in [
            (&mut sources, spec.source, &spec.source_test_set),
            (&mut targets, spec.target, &spec.target_test_set),
        ] {
            if side(e, provider, set) && map.insert(&e.installation_id, e).is_some() {
                return Err(MetricsError::AmbiguousPair(e.installation_id.clone()));
            }
        }
    }
    if let Some(id) = sources
        .keys()
        .find(|k| !targets.contains_key(*k))
        .or_else(|| targets.keys().find(|k| !sources.contains_key(*k)))
    {
        return Err(MetricsError::UnpairedEntry(id.to_string()));
    }
    let involved: Vec<&ManifestEntry> = sources.values().chain(targets.values()).copied().collect();
    scores_for(&involved, scores)?;
    Ok(sources
        .iter()
        .map(|(id, s)| PairedScore {
            installation_id: id.to_string(),
            source: scores[&s.path],
            target: scores[&targets[id].path],
        })
        .collect())
}

pub const SHIFT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftAnalysis {
    /// `SHIFT_BINS + 1` edges spanning `[-1, 1]`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean_delta: f64,
    /// Fraction of pairs whose score drops from `>= threshold` to `< threshold`.
    pub downward_crossing_fraction: f64,
    pub pairs: usize,
}

impl ShiftAnalysis {
    /// Share of pairs in the first and last bins.
    pub fn extreme_mass(&self) -> f64 {
        (self.counts[0] + self.counts[SHIFT_BINS - 1]) as f64 / self.pairs as f64
    }
}

/// Histogram of `target - source` score deltas.
pub fn probability_shift(pairs: &[PairedScore], threshold: f64) -> Result<ShiftAnalysis, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Undefined("probability shift of zero pairs"));
    }
    let width = 2.0 / SHIFT_BINS as f64;
    let mut counts = vec![0u64; SHIFT_BINS];
    let mut sum = 0.0;
    let mut crossings = 0usize;
    for (i, p) in pairs.iter().enumerate() {
        if !p.source.is_finite() || !p.target.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
        let d = (p.target - p.source).clamp(-1.0, 1.0);
        let bin = (((d + 1.0) / width).floor() as usize).min(SHIFT_BINS - 1);
        counts[bin] += 1;
        sum += d;
        if p.source >= threshold && p.target < threshold {
            crossings += 1;
        }
    }
    Ok(ShiftAnalysis {
        bin_edges: (0..=SHIFT_BINS).map(|i| -1.0 + i as f64 * width).collect(),
        counts,
        mean_delta: sum / pairs.len() as f64,
        downward_crossing_fraction: crossings as f64 / pairs.len() as f64,
        pairs: pairs.len(),
    })
}
