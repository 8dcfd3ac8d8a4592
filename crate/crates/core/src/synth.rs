//! Synthetic block-structured count tensors with known assignments.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClusterState;
use crate::rng::{derive_seed, draw_bernoulli, draw_poisson, RngHandle};
use crate::tensor::CountTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub clusters: usize,
    pub steps: usize,
    pub objects: usize,
    /// Rates are drawn uniformly from `0..=rate_max`.
    pub rate_max: u32,
    /// Fraction of objects moved to another cluster at each step.
    pub movement: f64,
    /// Probability that a cell is overwritten with zero.
    pub zero_ratio: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clusters: 4,
            steps: 5,
            objects: 16,
            rate_max: 9,
            movement: 0.1,
            zero_ratio: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.steps == 0 || self.objects == 0 {
            return Err(Error::Validation("clusters, steps and objects must be positive".into()));
        }
        if self.clusters > self.objects {
            return Err(Error::Validation(format!(
                "{} clusters cannot be filled by {} objects",
                self.clusters, self.objects
            )));
        }
        for (name, v) in [("movement", self.movement), ("zero_ratio", self.zero_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.clusters == 1 && self.movement > 0.0 {
            return Err(Error::Validation("objects cannot move with a single cluster".into()));
        }
        Ok(())
    }

    /// Objects moved per step: `⌈m·N⌉`.
    pub fn moves_per_step(&self) -> usize {
        // The epsilon keeps e.g. 0.3 * 10 from rounding up to 4.
        (self.movement * self.objects as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: CountTensor,
    pub z: ClusterState,
    /// True block rates; may contain zeros.
    pub rates: Vec<Vec<u32>>,
}

/// Ground truth written next to each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub config: SynthConfig,
    /// 1-based labels, `z[t][i]`.
    pub z: Vec<Vec<usize>>,
    pub lambda: Vec<Vec<u32>>,
}

impl Truth {
    pub fn assignments(&self) -> Result<ClusterState> {
        ClusterState::from_one_based(&self.z)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn generate_dataset<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let (k, steps, n) = (cfg.clusters, cfg.steps, cfg.objects);

    let rates = loop {
        let rates: Vec<Vec<u32>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0..=cfg.rate_max)).collect())
            .collect();
        if rates.iter().flatten().any(|&r| r > 0) || cfg.rate_max == 0 {
            break rates;
        }
    };

    if n % k != 0 {
        log::warn!("{n} objects do not split evenly into {k} clusters; sizes differ by one");
    }
    let mut labels = Vec::with_capacity(steps * n);
    labels.extend((0..n).map(|i| i * k / n));
    let moves = cfg.moves_per_step();
    for t in 1..steps {
        let mut next: Vec<usize> = labels[(t - 1) * n..t * n].to_vec();
        for i in sample_indices(rng, n, moves) {
            let d = rng.random_range(0..k - 1);
            next[i] = if d >= next[i] { d + 1 } else { d };
        }
        labels.extend(next);
    }
    let z = ClusterState::new(steps, n, labels, k)?;

    let mut x = CountTensor::zeros(steps, n)?;
    for t in 0..steps {
        for i in 0..n {
            for j in 0..n {
                let c = draw_poisson(rates[z.get(t, i)][z.get(t, j)] as f64, rng)?;
                let zeroed = draw_bernoulli(cfg.zero_ratio, rng)? == 1;
                x.set(t, i, j, if zeroed { 0 } else { c });
            }
        }
    }
    Ok(SyntheticDataset { x, z, rates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub base: SynthConfig,
    pub movements: Vec<f64>,
    pub zero_ratios: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            base: SynthConfig::default(),
            movements: vec![0.1, 0.2, 0.3],
            zero_ratios: vec![0.3, 0.5, 0.7],
            replicates: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub movement: f64,
    pub zero_ratio: f64,
    pub replicate: usize,
    pub seed: u64,
    /// Paths relative to the manifest's directory.
    pub data: PathBuf,
    pub truth: PathBuf,
}

impl ManifestEntry {
    pub fn config(&self, base: &SynthConfig) -> SynthConfig {
        SynthConfig {
            movement: self.movement,
            zero_ratio: self.zero_ratio,
            ..*base
        }
    }

    /// Regenerate the dataset from its recorded seed.
    pub fn regenerate(&self, base: &SynthConfig) -> Result<SyntheticDataset> {
        generate_dataset(&self.config(base), &mut RngHandle::new(self.seed, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SuiteConfig,
    pub datasets: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Directory name of one grid cell, e.g. `m0.1_s0.3`.
pub fn cell_name(movement: f64, zero_ratio: f64) -> String {
    format!("m{movement}_s{zero_ratio}")
}

/// The suite's datasets without touching disk. Seeds depend only on the
/// suite seed and the entry's grid position.
pub fn plan_suite(cfg: &SuiteConfig) -> Result<Vec<ManifestEntry>> {
    if cfg.replicates == 0 {
        return Err(Error::Validation("replicates must be positive".into()));
    }
    let mut out = Vec::new();
    for (mi, &m) in cfg.movements.iter().enumerate() {
        for (si, &s) in cfg.zero_ratios.iter().enumerate() {
            SynthConfig {
                movement: m,
                zero_ratio: s,
                ..cfg.base
            }
            .validate()?;
            let cell_seed = derive_seed(cfg.seed, (mi * cfg.zero_ratios.len() + si) as u64);
            let dir = PathBuf::from(cell_name(m, s));
            for rep in 0..cfg.replicates {
                let rep_dir = dir.join(format!("rep{:03}", rep + 1));
                out.push(ManifestEntry {
                    movement: m,
                    zero_ratio: s,
                    replicate: rep + 1,
                    seed: derive_seed(cell_seed, rep as u64),
                    data: rep_dir.join("data.csv"),
                    truth: rep_dir.join("truth.json"),
                });
            }
        }
    }
    Ok(out)
}

/// Write every dataset of the grid under `root` plus `root/manifest.json`.
pub fn generate_suite(cfg: &SuiteConfig, root: &Path) -> Result<Manifest> {
    let datasets = plan_suite(cfg)?;
    datasets.par_iter().try_for_each(|entry| -> Result<()> {
        let ds = entry.regenerate(&cfg.base)?;
        let dir = root.join(entry.data.parent().expect("entry paths have a parent"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        ds.x.save_csv(&root.join(&entry.data))?;
        let truth = Truth {
            seed: entry.seed,
            config: entry.config(&cfg.base),
            z: ds.z.to_one_based(),
            lambda: ds.rates,
        };
        let path = root.join(&entry.truth);
        fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| Error::io(&path, e))
    })?;
    let manifest = Manifest {
        config: cfg.clone(),
        datasets,
    };
    let path = root.join("manifest.json");
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
