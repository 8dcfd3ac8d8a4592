//! Model state shared by the samplers, the generator and the evaluators.
//!
//! Labels are 0-based in memory and 1-based on disk.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Static Poisson IRM, fitted independently per time step.
    Pirm,
    /// Dynamic Poisson IRM with sticky HDP-HMM cluster dynamics.
    Dpirm,
    /// Dynamic zero-inflated Poisson IRM.
    Dzipirm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Pirm, ModelKind::Dpirm, ModelKind::Dzipirm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pirm => "pirm",
            ModelKind::Dpirm => "dpirm",
            ModelKind::Dzipirm => "dzipirm",
        }
    }

    pub fn is_zero_inflated(self) -> bool {
        self == ModelKind::Dzipirm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pirm" => Ok(ModelKind::Pirm),
            "dpirm" => Ok(ModelKind::Dpirm),
            "dzipirm" => Ok(ModelKind::Dzipirm),
            other => Err(Error::Validation(format!(
                "unknown model `{other}` (expected pirm, dpirm or dzipirm)"
            ))),
        }
    }
}

/// Fixed hyperparameters.
///
/// `b` is a Gamma *rate*: the prior density of a block rate is proportional
/// to `λ^(a-1) e^(-bλ)`, which is what the conjugate updates assume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub kappa: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            d: 1.0,
            gamma: 1.0,
            alpha0: 1.0,
            kappa: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("gamma", self.gamma),
            ("alpha0", self.alpha0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("hyperparameter {name} must be > 0, got {v}")));
            }
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Validation(format!(
                "hyperparameter kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Self-transition share `κ / (α₀ + κ)`.
    pub fn rho(&self) -> f64 {
        self.kappa / (self.alpha0 + self.kappa)
    }
}

/// Cluster labels `z[t][i]` with `k` labels in use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterState {
    steps: usize,
    objects: usize,
    labels: Vec<usize>,
    k: usize,
}

impl ClusterState {
    pub fn single_cluster(steps: usize, objects: usize) -> Self {
        Self {
            steps,
            objects,
            labels: vec![0; steps * objects],
            k: 1,
        }
    }

    /// `labels` is row-major `(t, i)`. `k` must cover every label.
    pub fn new(steps: usize, objects: usize, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != steps * objects {
            return Err(Error::StateInconsistency(format!(
                "expected {} labels, got {}",
                steps * objects,
                labels.len()
            )));
        }
        let s = Self {
            steps,
            objects,
            labels,
            k,
        };
        s.validate()?;
        Ok(s)
    }

    /// Build from labels, taking `k` as one past the largest label.
    pub fn from_labels(steps: usize, objects: usize, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |&m| m + 1);
        Self::new(steps, objects, labels, k)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.k) {
            return Err(Error::StateInconsistency(format!(
                "label {} outside 1..={}",
                bad + 1,
                self.k
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> usize {
        self.labels[t * self.objects + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, label: usize) {
        debug_assert!(label < self.k);
        self.labels[t * self.objects + i] = label;
    }

    pub(crate) fn set_k(&mut self, k: usize) {
        self.k = k;
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn step(&self, t: usize) -> &[usize] {
        &self.labels[t * self.objects..(t + 1) * self.objects]
    }

    /// Labels as nested 1-based vectors, `[t][i]`.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        (0..self.steps)
            .map(|t| self.step(t).iter().map(|&l| l + 1).collect())
            .collect()
    }

    pub fn from_one_based(rows: &[Vec<usize>]) -> Result<Self> {
        let steps = rows.len();
        let objects = rows.first().map_or(0, Vec::len);
        let mut labels = Vec::with_capacity(steps * objects);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != objects {
                return Err(Error::StateInconsistency(format!(
                    "step {} has {} labels, expected {objects}",
                    t + 1,
                    row.len()
                )));
            }
            for &l in row {
                if l == 0 {
                    return Err(Error::StateInconsistency("labels are 1-based".into()));
                }
                labels.push(l - 1);
            }
        }
        Self::from_labels(steps, objects, labels)
    }

    /// Sizes of each label's membership across all steps.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.k];
        for &l in &self.labels {
            occ[l] += 1;
        }
        occ
    }

    /// Relabel so labels appear in order of first use (scanning `t`, then
    /// `i`) and drop unused labels. Returns the new state and the map from
    /// old label to new label (`None` for dropped labels).
    pub fn canonicalize(&self) -> (ClusterState, Vec<Option<usize>>) {
        let mut map = vec![None; self.k];
        let mut next = 0;
        for &l in &self.labels {
            if map[l].is_none() {
                map[l] = Some(next);
                next += 1;
            }
        }
        let labels = self.labels.iter().map(|&l| map[l].unwrap()).collect();
        (
            ClusterState {
                steps: self.steps,
                objects: self.objects,
                labels,
                k: next.max(1),
            },
            map,
        )
    }
}

/// Square matrix of block rates `λ[k][ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    k: usize,
    data: Vec<f64>,
}

impl RateMatrix {
    pub fn filled(k: usize, value: f64) -> Self {
        Self {
            k,
            data: vec![value; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::StateInconsistency("rate matrix must be square".into()));
        }
        Ok(Self { k, data: rows.concat() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.k + l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        self.data[k * self.k + l] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::StateInconsistency(format!("block rate {v} is not positive")));
        }
        Ok(())
    }

    /// Grow by one cluster; `fill(k, l)` supplies the new entries.
    pub(crate) fn grow(&mut self, mut fill: impl FnMut(usize, usize) -> f64) {
        let old = self.k;
        let k = old + 1;
        let mut data = vec![0.0; k * k];
        for r in 0..k {
            for c in 0..k {
                data[r * k + c] = if r < old && c < old {
                    self.data[r * old + c]
                } else {
                    fill(r, c)
                };
            }
        }
        self.k = k;
        self.data = data;
    }

    /// Keep the labels listed in `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> RateMatrix {
        let k = keep.len();
        let mut data = Vec::with_capacity(k * k);
        for &r in keep {
            for &c in keep {
                data.push(self.get(r, c));
            }
        }
        RateMatrix { k, data }
    }
}

/// Per-cell zero-inflation state of the dZIPIRM, indexed like the tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipState {
    /// Poisson mixing weights in `(0, 1)`.
    pub w: Vec<f64>,
    /// 1 when the cell is drawn from the Poisson component.
    pub r: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionState {
    pub lambda: RateMatrix,
    pub zip: Option<ZipState>,
}

/// Global weights and per-step transition rows of the sticky HDP-HMM.
///
/// Every vector has one trailing entry holding the mass of clusters not yet
/// instantiated. `initial` is the row used at the first step; `transitions[s][k]`
/// is the row from cluster `k` at step `s` into step `s + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsState {
    pub beta: Vec<f64>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl DynamicsState {
    /// Number of instantiated clusters.
    pub fn k(&self) -> usize {
        self.beta.len() - 1
    }

    /// Transition row into step `t` given the label at `t - 1`, or the
    /// initial row when `t == 0`.
    #[inline]
    pub fn row(&self, t: usize, prev: usize) -> &[f64] {
        if t == 0 {
            &self.initial
        } else {
            &self.transitions[t - 1][prev]
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.initial).chain(self.transitions.iter().flatten())
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let k = self.k();
        let beta_sum: f64 = self.beta.iter().sum();
        if (beta_sum - 1.0).abs() > tol || self.beta.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::StateInconsistency(format!(
                "beta is not a probability vector (sum {beta_sum})"
            )));
        }
        for (idx, row) in self.rows().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::StateInconsistency(format!(
                    "transition row {idx} has length {}, expected {}",
                    row.len(),
                    k + 1
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol || row.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::StateInconsistency(format!(
                    "transition row {idx} is not a positive probability vector (sum {s})"
                )));
            }
        }
        for step in &self.transitions {
            if step.len() != k {
                return Err(Error::StateInconsistency("one transition row per cluster".into()));
            }
        }
        Ok(())
    }

    /// Keep clusters in `keep` (in that order); mass of dropped clusters moves
    /// to the residual entry.
    pub fn select(&self, keep: &[usize]) -> DynamicsState {
        let remap = |row: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = keep.iter().map(|&c| row[c]).collect();
            let dropped: f64 = (0..row.len() - 1).filter(|c| !keep.contains(c)).map(|c| row[c]).sum();
            out.push(row[row.len() - 1] + dropped);
            out
        };
        DynamicsState {
            beta: remap(&self.beta),
            initial: remap(&self.initial),
            transitions: self
                .transitions
                .iter()
                .map(|step| keep.iter().map(|&k| remap(&step[k])).collect())
                .collect(),
        }
    }
}
