//! Run configuration: a JSON file merged with command-line overrides.
//! Precedence is flag, then file, then built-in default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tvbic::model::{Hyperparams, ModelKind};
use tvbic::sampler::SweepConfig;
use tvbic::synth::SuiteConfig;
use tvbic::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hyperparams: Hyperparams,
    pub sweep: SweepConfig,
    /// Models fitted to a suite and scored by `evaluate`.
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub chains: usize,
    /// Worker threads; all cores when absent.
    pub jobs: Option<usize>,
    pub include_diagonal: bool,
    pub suite: SuiteConfig,
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hyperparams: Hyperparams::default(),
            sweep: SweepConfig::default(),
            models: ModelKind::ALL.to_vec(),
            seed: 1,
            chains: 1,
            jobs: None,
            include_diagonal: true,
            suite: SuiteConfig::default(),
            data: None,
            manifest: None,
            out: None,
        }
    }
}

/// Flags shared by every command that fits or scores.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `pirm`, `dpirm` or `dzipirm`.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Total sweeps per chain, burn-in included.
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains per fit.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Drop self-relations `x[t][i][i]` from the likelihood.
    #[arg(long)]
    pub exclude_diagonal: bool,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Validation(format!("config file {} not found", path.display())));
        }
        tvbic::io::read_json(path)
    }

    /// File (if any) with flags applied on top.
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(m) = flags.model {
            cfg.sweep.model = m;
            cfg.models = vec![m];
        }
        if let Some(s) = flags.sweeps {
            cfg.sweep.sweeps = s;
        }
        if let Some(b) = flags.burn_in {
            cfg.sweep.burn_in = b;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(c) = flags.chains {
            cfg.chains = c;
        }
        if flags.exclude_diagonal {
            cfg.include_diagonal = false;
        }
        if flags.jobs.is_some() {
            cfg.jobs = flags.jobs;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.sweep.validate()?;
        if self.chains == 0 {
            return Err(Error::Validation("chains must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Validation("jobs must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Validation("no models selected".into()));
        }
        for (name, path) in [("data", &self.data), ("manifest", &self.manifest)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::Validation(format!("{name} file {} not found", p.display())));
                }
            }
        }
        Ok(())
    }
}
