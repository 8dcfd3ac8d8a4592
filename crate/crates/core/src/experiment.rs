//! Fit every model to every dataset of a synthetic grid and score the fits.

use rayon::prelude::*;

use crate::density::{joint_log_likelihood, normalized_log_likelihood};
use crate::error::{Error, Result};
use crate::eval::{adjusted_rand_index, pirm_best_ri, time_averaged_ari, time_averaged_ri, DatasetResult};
use crate::model::{ClusterState, Hyperparams, ModelKind};
use crate::rng::{derive_seed, RngHandle};
use crate::sampler::{pirm_fit_all, run_chain, ChainResult, SweepConfig};
use crate::synth::{ManifestEntry, SynthConfig};
use crate::tensor::CountTensor;

/// Scores of one fit against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitScore {
    pub ri: f64,
    pub ari: f64,
    pub normalized_log_likelihood: f64,
    pub clusters: usize,
}

/// Score a dynamic-model chain's point estimate.
pub fn score_chain(x: &CountTensor, truth: &ClusterState, fit: &ChainResult) -> Result<FitScore> {
    let est = &fit.estimate.state;
    Ok(FitScore {
        ri: time_averaged_ri(truth, &est.z)?,
        ari: time_averaged_ari(truth, &est.z)?,
        normalized_log_likelihood: normalized_log_likelihood(x, &est.z, &est.emission(), est.model)?,
        clusters: est.z.k(),
    })
}

/// Score per-step static fits: best per-step RI, and the summed per-step
/// log-likelihood over all included cells.
pub fn score_static(x: &CountTensor, truth: &ClusterState, fits: &[ChainResult]) -> Result<FitScore> {
    let mut labels = Vec::with_capacity(fits.len());
    let mut lls = Vec::with_capacity(fits.len());
    for (t, fit) in fits.iter().enumerate() {
        let est = &fit.estimate.state;
        labels.push(est.z.clone());
        lls.push(joint_log_likelihood(
            &x.slice(t),
            &est.z,
            &est.emission(),
            ModelKind::Pirm,
        )?);
    }
    score_static_parts(x, truth, &labels, &lls)
}

/// As [`score_static`], from each step's single-step labels and joint
/// log-likelihood.
pub fn score_static_parts(
    x: &CountTensor,
    truth: &ClusterState,
    labels: &[ClusterState],
    log_likelihoods: &[f64],
) -> Result<FitScore> {
    if labels.len() != x.steps() || log_likelihoods.len() != x.steps() {
        return Err(Error::StateInconsistency(format!(
            "expected {} per-step fits, got {}",
            x.steps(),
            labels.len()
        )));
    }
    let ri = pirm_best_ri(truth, labels)?;
    let mut ari = f64::NEG_INFINITY;
    for (t, z) in labels.iter().enumerate() {
        ari = ari.max(adjusted_rand_index(truth.step(t), z.step(0))?);
    }
    Ok(FitScore {
        ri,
        ari,
        normalized_log_likelihood: log_likelihoods.iter().sum::<f64>() / x.included_cells() as f64,
        clusters: labels.iter().map(ClusterState::k).max().unwrap_or(0),
    })
}

/// Fit `model` with chain seed `seed` and score it.
pub fn fit_and_score(
    x: &CountTensor,
    truth: &ClusterState,
    model: ModelKind,
    cfg: &SweepConfig,
    hp: &Hyperparams,
    seed: u64,
) -> Result<FitScore> {
    let cfg = SweepConfig { model, ..*cfg };
    match model {
        ModelKind::Pirm => score_static(x, truth, &pirm_fit_all(x, &cfg, hp, seed, 0)?),
        _ => score_chain(x, truth, &run_chain(x, &cfg, hp, &mut RngHandle::new(seed, 0))?),
    }
}

/// Regenerate each dataset from its seed, fit each model and score it, in
/// parallel. The chain seed of (dataset, model) is derived from `seed`, the
/// dataset seed and the model.
pub fn run_grid(
    entries: &[ManifestEntry],
    base: &SynthConfig,
    models: &[ModelKind],
    cfg: &SweepConfig,
    hp: &Hyperparams,
    seed: u64,
) -> Result<Vec<DatasetResult>> {
    let jobs: Vec<(&ManifestEntry, ModelKind)> = entries
        .iter()
        .flat_map(|e| models.iter().map(move |&m| (e, m)))
        .collect();
    jobs.par_iter()
        .map(|&(entry, model)| {
            let ds = entry.regenerate(base)?;
            let chain_seed = derive_seed(derive_seed(seed, entry.seed), model as u64);
            let score = fit_and_score(&ds.x, &ds.z, model, cfg, hp, chain_seed)?;
            Ok(DatasetResult {
                movement: entry.movement,
                zero_ratio: entry.zero_ratio,
                replicate: entry.replicate,
                model,
                ri: score.ri,
                ari: score.ari,
                normalized_log_likelihood: score.normalized_log_likelihood,
                clusters: score.clusters,
            })
        })
        .collect()
}
