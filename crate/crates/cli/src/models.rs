//! `--model` strings: built-in analytic models or external scorers.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use wcam::attribution::featurize;
use wcam::model::remote::{connect, AdapterConfig, Transport, ENDPOINT_ENV};
use wcam::model::{CellEnergyModel, MeanPixelModel};
use wcam::{ScoreFn, WcamConfig};

/// One of `builtin:cell<k>`, `builtin:mean`, `stdio:<command>`, `http(s)://...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Cell(usize),
    Mean,
    Stdio(String),
    Http(String),
}

impl FromStr for ModelSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("builtin:") {
            if rest == "mean" {
                return Ok(Self::Mean);
            }
            if let Some(k) = rest.strip_prefix("cell") {
                return Ok(Self::Cell(k.parse().map_err(|_| anyhow::anyhow!("bad cell index in {s:?}"))?));
            }
            bail!("unknown built-in model {s:?} (expected builtin:cell<k> or builtin:mean)");
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                bail!("stdio model needs a command");
            }
            return Ok(Self::Stdio(cmd.to_string()));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Self::Http(s.to_string()));
        }
        bail!("unrecognised model {s:?}")
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cell(k) => write!(f, "builtin:cell{k}"),
            Self::Mean => f.write_str("builtin:mean"),
            Self::Stdio(cmd) => write!(f, "stdio:{cmd}"),
            Self::Http(url) => f.write_str(url),
        }
    }
}

/// Adapter knobs for external scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterSettings {
    pub timeout_ms: u64,
    pub max_batch: usize,
    pub retries: usize,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        let d = AdapterConfig::new(Transport::Http, "");
        Self {
            timeout_ms: d.timeout_ms,
            max_batch: d.max_batch,
            retries: d.retries,
        }
    }
}

impl ModelSpec {
    pub fn is_external(&self) -> bool {
        matches!(self, Self::Stdio(_) | Self::Http(_))
    }

    /// `--model` if given, otherwise the endpoint in the environment.
    pub fn resolve(flag: Option<ModelSpec>) -> Result<ModelSpec> {
        match flag {
            Some(m) => Ok(m),
            None => match std::env::var(ENDPOINT_ENV) {
                Ok(e) if e.starts_with("http://") || e.starts_with("https://") => Ok(Self::Http(e)),
                Ok(e) if !e.trim().is_empty() => Ok(Self::Stdio(e)),
                _ => bail!("no --model given and {ENDPOINT_ENV} is not set"),
            },
        }
    }

    /// Connects an external scorer; the environment endpoint overrides the flag.
    pub fn connect_external(&self, settings: &AdapterSettings) -> Result<Box<dyn ScoreFn>> {
        let (transport, endpoint) = match self {
            Self::Stdio(cmd) => (Transport::Stdio, cmd.clone()),
            Self::Http(url) => (Transport::Http, url.clone()),
            _ => bail!("{self} is not an external model"),
        };
        let mut config = AdapterConfig::new(transport, endpoint).with_env_override();
        config.timeout_ms = settings.timeout_ms;
        config.max_batch = settings.max_batch;
        config.retries = settings.retries;
        Ok(connect(&config)?)
    }

    /// Instantiates a built-in model for `side x side` inputs under `config`.
    pub fn builtin(&self, side: usize, config: &WcamConfig, alpha: f64) -> Result<Box<dyn ScoreFn>> {
        match self {
            Self::Mean => Ok(Box::new(MeanPixelModel)),
            Self::Cell(k) => {
                let layout = featurize(side, config)?;
                Ok(Box::new(CellEnergyModel::new(&layout, *k, alpha)?))
            }
            _ => bail!("{self} is not a built-in model"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        for s in ["builtin:cell13", "builtin:mean", "stdio:python3 scorer.py", "http://127.0.0.1:8000"] {
            assert_eq!(s.parse::<ModelSpec>().unwrap().to_string(), s);
        }
        assert_eq!("builtin:cell7".parse::<ModelSpec>().unwrap(), ModelSpec::Cell(7));
        assert!("builtin:cellx".parse::<ModelSpec>().is_err());
        assert!("resnet".parse::<ModelSpec>().is_err());
        assert!("stdio: ".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn serializes_as_string() {
        let json = serde_json::to_string(&ModelSpec::Cell(3)).unwrap();
        assert_eq!(json, "\"builtin:cell3\"");
        assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), ModelSpec::Cell(3));
    }
}
