//! Clustering agreement, fit summaries and the zero-inflation rate identities.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterState, Hyperparams, ModelKind};
use crate::sampler::block_stats;
use crate::stats::std_dev;
use crate::tensor::CountTensor;

struct Contingency {
    n: u64,
    pairs_both: u64,
    pairs_p: u64,
    pairs_q: u64,
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn contingency(p: &[usize], q: &[usize]) -> Result<Contingency> {
    if p.len() != q.len() {
        return Err(Error::Validation(format!(
            "partitions cover {} and {} items",
            p.len(),
            q.len()
        )));
    }
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in p.iter().zip(q) {
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    Ok(Contingency {
        n: p.len() as u64,
        pairs_both: joint.values().map(|&c| choose2(c)).sum(),
        pairs_p: rows.values().map(|&c| choose2(c)).sum(),
        pairs_q: cols.values().map(|&c| choose2(c)).sum(),
    })
}

/// Fraction of item pairs on which the two partitions agree. A single item
/// has no pairs; its partitions are identical, so the index is 1.
pub fn rand_index(p: &[usize], q: &[usize]) -> Result<f64> {
    let c = contingency(p, q)?;
    let total = choose2(c.n);
    if total == 0 {
        return Ok(1.0);
    }
    // Pairs together in both plus pairs apart in both.
    let apart_both = total + c.pairs_both - c.pairs_p - c.pairs_q;
    Ok((c.pairs_both + apart_both) as f64 / total as f64)
}

/// Hubert–Arabie adjusted Rand index; 1 when both partitions are trivial
/// in the same way.
pub fn adjusted_rand_index(p: &[usize], q: &[usize]) -> Result<f64> {
    let c = contingency(p, q)?;
    let total = choose2(c.n) as f64;
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = c.pairs_p as f64 * c.pairs_q as f64 / total;
    let max = 0.5 * (c.pairs_p + c.pairs_q) as f64;
    if max == expected {
        return Ok(1.0);
    }
    Ok((c.pairs_both as f64 - expected) / (max - expected))
}

fn check_dims(truth: &ClusterState, est: &ClusterState) -> Result<()> {
    if truth.steps() != est.steps() || truth.objects() != est.objects() {
        return Err(Error::Validation(format!(
            "assignments are {}x{} and {}x{}",
            truth.steps(),
            truth.objects(),
            est.steps(),
            est.objects()
        )));
    }
    Ok(())
}

/// Mean over steps of the per-step Rand index.
pub fn time_averaged_ri(truth: &ClusterState, est: &ClusterState) -> Result<f64> {
    check_dims(truth, est)?;
    let mut total = 0.0;
    for t in 0..truth.steps() {
        total += rand_index(truth.step(t), est.step(t))?;
    }
    Ok(total / truth.steps() as f64)
}

pub fn time_averaged_ari(truth: &ClusterState, est: &ClusterState) -> Result<f64> {
    check_dims(truth, est)?;
    let mut total = 0.0;
    for t in 0..truth.steps() {
        total += adjusted_rand_index(truth.step(t), est.step(t))?;
    }
    Ok(total / truth.steps() as f64)
}

/// Score each single-step fit against its own step's truth and keep the best.
pub fn pirm_best_ri(truth: &ClusterState, fits: &[ClusterState]) -> Result<f64> {
    if fits.len() != truth.steps() {
        return Err(Error::Validation(format!(
            "{} per-step fits for {} steps",
            fits.len(),
            truth.steps()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for (t, fit) in fits.iter().enumerate() {
        if fit.steps() != 1 || fit.objects() != truth.objects() {
            return Err(Error::Validation(format!("fit for step {} has the wrong shape", t + 1)));
        }
        best = best.max(rand_index(truth.step(t), fit.step(0))?);
    }
    Ok(best)
}

/// Per-block comparison of the dPIRM and dZIPIRM rate conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    /// 1-based block coordinates.
    pub row: usize,
    pub col: usize,
    pub cells: u64,
    pub sum_r: u64,
    pub sum_x: u64,
    pub sum_rx: u64,
    /// `(b + Σr) / (b + |C|)`.
    pub alpha: f64,
    pub mean_dp: f64,
    pub mean_zip: f64,
    pub var_dp: f64,
    pub var_zip: f64,
}

impl BlockCheck {
    /// `Σ r·x == Σ x`.
    pub fn identity_holds(&self) -> bool {
        self.sum_rx == self.sum_x
    }

    pub fn alpha_in_unit_interval(&self) -> bool {
        (0.0..=1.0).contains(&self.alpha)
    }

    /// Relative error of `E_dP = α·E_zip`.
    pub fn mean_error(&self) -> f64 {
        rel_err(self.mean_dp, self.alpha * self.mean_zip)
    }

    /// Relative error of `V_dP = α²·V_zip`.
    pub fn var_error(&self) -> f64 {
        rel_err(self.var_dp, self.alpha * self.alpha * self.var_zip)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.identity_holds() && self.alpha_in_unit_interval() && self.mean_error() <= tol && self.var_error() <= tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Posterior means and variances of each block rate under both models, from
/// the closed-form Gamma moments. Invalid indicators are reported through
/// [`BlockCheck::identity_holds`], not rejected.
pub fn theorem1_check(x: &CountTensor, z: &ClusterState, r: &[u8], hp: &Hyperparams) -> Result<Vec<BlockCheck>> {
    let stats = block_stats(x, z, Some(r))?;
    let k = stats.k;
    let mut out = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            let b = stats.at(row, col);
            let shape = hp.a + stats.sum_x[b] as f64;
            let rate_dp = hp.b + stats.cells[b] as f64;
            let rate_zip = hp.b + stats.sum_r[b] as f64;
            out.push(BlockCheck {
                row: row + 1,
                col: col + 1,
                cells: stats.cells[b],
                sum_r: stats.sum_r[b],
                sum_x: stats.sum_x[b],
                sum_rx: stats.sum_rx[b],
                alpha: rate_zip / rate_dp,
                mean_dp: shape / rate_dp,
                mean_zip: shape / rate_zip,
                var_dp: shape / (rate_dp * rate_dp),
                var_zip: shape / (rate_zip * rate_zip),
            });
        }
    }
    Ok(out)
}

/// One fitted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub movement: f64,
    pub zero_ratio: f64,
    pub replicate: usize,
    pub model: ModelKind,
    pub ri: f64,
    pub ari: f64,
    pub normalized_log_likelihood: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub movement: f64,
    pub zero_ratio: f64,
    pub model: ModelKind,
    pub datasets: usize,
    pub ri_mean: f64,
    pub ri_sd: f64,
    pub ll_mean: f64,
    pub ll_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<DatasetResult>,
    pub summary: Vec<CellSummary>,
    /// Expected (dataset, model) pairs with no result.
    pub missing: Vec<String>,
}

/// Key identifying one expected fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expected {
    pub movement: f64,
    pub zero_ratio: f64,
    pub replicate: usize,
    pub model: ModelKind,
}

fn grid_key(m: f64, s: f64, model: ModelKind) -> (u64, u64, ModelKind) {
    (m.to_bits(), s.to_bits(), model)
}

/// Aggregate per (movement, zero ratio, model): mean and sample standard
/// deviation of RI and normalized log-likelihood.
pub fn compare_models(expected: &[Expected], rows: Vec<DatasetResult>) -> EvalReport {
    let missing = expected
        .iter()
        .filter(|e| {
            !rows.iter().any(|r| {
                r.movement == e.movement
                    && r.zero_ratio == e.zero_ratio
                    && r.replicate == e.replicate
                    && r.model == e.model
            })
        })
        .map(|e| {
            format!(
                "{} rep{:03} {}",
                crate::synth::cell_name(e.movement, e.zero_ratio),
                e.replicate,
                e.model
            )
        })
        .collect();

    let mut groups: BTreeMap<(u64, u64, ModelKind), Vec<&DatasetResult>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &rows {
        let key = grid_key(r.movement, r.zero_ratio, r.model);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    order.sort_by(|a, b| {
        f64::from_bits(a.0)
            .total_cmp(&f64::from_bits(b.0))
            .then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1)))
            .then(a.2.cmp(&b.2))
    });
    let summary = order
        .iter()
        .map(|key| {
            let members = &groups[key];
            let ri: Vec<f64> = members.iter().map(|r| r.ri).collect();
            let ll: Vec<f64> = members.iter().map(|r| r.normalized_log_likelihood).collect();
            CellSummary {
                movement: f64::from_bits(key.0),
                zero_ratio: f64::from_bits(key.1),
                model: key.2,
                datasets: members.len(),
                ri_mean: ri.iter().sum::<f64>() / ri.len() as f64,
                ri_sd: std_dev(&ri),
                ll_mean: ll.iter().sum::<f64>() / ll.len() as f64,
                ll_sd: std_dev(&ll),
            }
        })
        .collect();
    EvalReport { rows, summary, missing }
}

impl EvalReport {
    pub fn summary_for(&self, movement: f64, zero_ratio: f64, model: ModelKind) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.movement == movement && c.zero_ratio == zero_ratio && c.model == model)
    }

    /// `rows.csv` (one line per fitted dataset), `summary.csv` and
    /// `report.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut rows = csv::Writer::from_path(dir.join("rows.csv"))?;
        for r in &self.rows {
            rows.serialize(r)?;
        }
        rows.flush().map_err(|e| Error::io(dir.join("rows.csv"), e))?;
        let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
        for c in &self.summary {
            summary.serialize(c)?;
        }
        summary.flush().map_err(|e| Error::io(dir.join("summary.csv"), e))?;
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// Fixed-width table of RI and log-likelihood, models side by side.
    pub fn render_table(&self) -> String {
        let mut out = String::from("cell          model      n   RI mean (sd)      loglik mean (sd)\n");
        for c in &self.summary {
            out.push_str(&format!(
                "{:<13} {:<8} {:>3}   {:.3} ({:.3})     {:.3} ({:.3})\n",
                crate::synth::cell_name(c.movement, c.zero_ratio),
                c.model.as_str(),
                c.datasets,
                c.ri_mean,
                c.ri_sd,
                c.ll_mean,
                c.ll_sd
            ));
        }
        out
    }
}
