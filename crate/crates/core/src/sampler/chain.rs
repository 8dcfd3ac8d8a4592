use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::beam::{beam_sweep_z, TruncationPolicy};
use super::dynamics::sample_dynamics;
use super::lambda::{sample_lambda_dpirm, sample_lambda_dzipirm};
use super::zip::{sample_r, sample_w};
use super::ChainState;
use crate::density::joint_log_likelihood;
use crate::error::{Error, Result};
use crate::model::{ClusterState, DynamicsState, Hyperparams, ModelKind, RateMatrix, ZipState};
use crate::rng::{draw_beta, stick_break, RngHandle};
use crate::tensor::CountTensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointEstimateRule {
    /// Highest joint log-likelihood among post-burn-in sweeps.
    #[default]
    MaxJointLikelihood,
    LastSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitStrategy {
    /// Every object in one cluster at every step. The chain is slow to leave
    /// this state on block-structured data.
    SingleCluster,
    /// Labels drawn uniformly from `k` clusters; surplus clusters merge away.
    Random { k: usize },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Random { k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub sweeps: usize,
    pub burn_in: usize,
    pub truncation_cap: usize,
    pub truncation_policy: TruncationPolicy,
    pub point_estimate: PointEstimateRule,
    pub init: InitStrategy,
    /// Follow each beam update with a single-site pass that integrates out
    /// the block rates. Without it, new clusters start from prior rates and
    /// are almost never adopted.
    pub collapsed_moves: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Dpirm,
            sweeps: 300,
            burn_in: 100,
            truncation_cap: 50,
            truncation_policy: TruncationPolicy::Error,
            point_estimate: PointEstimateRule::MaxJointLikelihood,
            init: InitStrategy::default(),
            collapsed_moves: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Validation("sweeps must be positive".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Validation(format!(
                "burn-in ({}) must be smaller than sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        let initial_k = match self.init {
            InitStrategy::SingleCluster => 1,
            InitStrategy::Random { k } => k,
        };
        if initial_k == 0 {
            return Err(Error::Validation("random initialization needs k >= 1".into()));
        }
        if self.truncation_cap < initial_k {
            return Err(Error::Validation(format!(
                "truncation cap {} is below the initial cluster count {initial_k}",
                self.truncation_cap
            )));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the run settings, serialized with sorted keys.
pub fn config_digest(cfg: &SweepConfig, hp: &Hyperparams, include_diagonal: bool) -> String {
    let doc = serde_json::json!({
        "sweep": cfg,
        "hyperparams": hp,
        "include_diagonal": include_diagonal,
    });
    // `serde_json::Value` maps are ordered by key, so the text is canonical.
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Snapshot after one sweep. `sweep` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub k: usize,
    pub log_likelihood: f64,
    pub z: ClusterState,
    pub lambda: RateMatrix,
    pub dynamics: DynamicsState,
    /// Flat indices of cells currently assigned to the structural-zero
    /// component (dZIPIRM only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural_zeros: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcTrace {
    pub model: ModelKind,
    pub seed: u64,
    pub stream: u64,
    pub config_digest: String,
    pub records: Vec<SweepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub sweep: usize,
    pub log_likelihood: f64,
    pub state: ChainState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub trace: McmcTrace,
    pub estimate: PointEstimate,
    pub final_state: ChainState,
}

/// Initial state per `cfg.init`: stick-broken `β`, dynamics and rates from
/// their conditionals, and for the dZIPIRM prior mixing weights followed by
/// the indicator conditional.
pub fn init_state<R: Rng + ?Sized>(
    x: &CountTensor,
    cfg: &SweepConfig,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<ChainState> {
    let (steps, n, _) = x.dims();
    let z = match cfg.init {
        InitStrategy::SingleCluster => ClusterState::single_cluster(steps, n),
        InitStrategy::Random { k } => {
            let labels = (0..steps * n).map(|_| rng.random_range(0..k)).collect();
            ClusterState::new(steps, n, labels, k)?.canonicalize().0
        }
    };
    let (mut beta, residual) = stick_break(hp.gamma, z.k(), rng)?;
    beta.push(residual);
    let flavor = super::DynamicsFlavor::for_model(cfg.model);
    let dynamics = sample_dynamics(&z, &beta, hp, flavor, rng)?;
    let lambda = sample_lambda_dpirm(x, &z, hp, rng)?;
    let zip = if cfg.model.is_zero_inflated() {
        let w = (0..x.len())
            .map(|_| draw_beta(hp.c, hp.d, rng).map(|w| w.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)))
            .collect::<Result<Vec<_>>>()?;
        let r = sample_r(x, &z, &lambda, &w, rng)?;
        Some(ZipState { w, r })
    } else {
        None
    };
    Ok(ChainState {
        model: cfg.model,
        z,
        dynamics,
        lambda,
        zip,
    })
}

/// One sweep: dynamics, assignments, rates, then (dZIPIRM) indicators and
/// mixing weights.
pub fn sweep<R: Rng + ?Sized>(
    x: &CountTensor,
    state: &mut ChainState,
    hp: &Hyperparams,
    cfg: &SweepConfig,
    rng: &mut R,
) -> Result<()> {
    state.dynamics = sample_dynamics(&state.z, &state.dynamics.beta, hp, state.flavor(), rng)?;
    beam_sweep_z(
        x,
        state,
        hp,
        cfg.truncation_cap,
        cfg.truncation_policy,
        cfg.collapsed_moves,
        rng,
    )?;
    match state.zip.as_mut() {
        None => state.lambda = sample_lambda_dpirm(x, &state.z, hp, rng)?,
        Some(zip) => {
            state.lambda = sample_lambda_dzipirm(x, &state.z, &zip.r, hp, rng)?;
            zip.r = sample_r(x, &state.z, &state.lambda, &zip.w, rng)?;
            zip.w = sample_w(&zip.r, hp, rng)?;
        }
    }
    Ok(())
}

fn record(x: &CountTensor, state: &ChainState, sweep: usize) -> Result<SweepRecord> {
    let log_likelihood = joint_log_likelihood(x, &state.z, &state.emission(), state.model)?;
    let (structural_zeros, mean_w) = match &state.zip {
        None => (None, None),
        Some(zip) => (
            Some(
                zip.r
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r == 0)
                    .map(|(i, _)| i)
                    .collect(),
            ),
            Some(zip.w.iter().sum::<f64>() / zip.w.len() as f64),
        ),
    };
    Ok(SweepRecord {
        sweep,
        k: state.z.k(),
        log_likelihood,
        z: state.z.clone(),
        lambda: state.lambda.clone(),
        dynamics: state.dynamics.clone(),
        structural_zeros,
        mean_w,
    })
}

/// Run one chain. The static model is only defined on a single step; use
/// [`super::pirm_fit_all`] for longer data.
pub fn run_chain(x: &CountTensor, cfg: &SweepConfig, hp: &Hyperparams, rng: &mut RngHandle) -> Result<ChainResult> {
    cfg.validate()?;
    hp.validate()?;
    if cfg.model == ModelKind::Pirm && x.steps() != 1 {
        return Err(Error::Validation(format!(
            "the static model fits one step at a time; data has {} steps",
            x.steps()
        )));
    }
    let mut state = init_state(x, cfg, hp, rng)?;
    let mut records = Vec::with_capacity(cfg.sweeps);
    let mut best: Option<PointEstimate> = None;
    for s in 1..=cfg.sweeps {
        sweep(x, &mut state, hp, cfg, rng)?;
        let rec = record(x, &state, s)?;
        let take = match cfg.point_estimate {
            PointEstimateRule::MaxJointLikelihood => {
                s > cfg.burn_in && best.as_ref().is_none_or(|b| rec.log_likelihood > b.log_likelihood)
            }
            PointEstimateRule::LastSweep => s == cfg.sweeps,
        };
        if take {
            best = Some(PointEstimate {
                sweep: s,
                log_likelihood: rec.log_likelihood,
                state: state.clone(),
            });
        }
        records.push(rec);
    }
    let estimate = best.ok_or_else(|| Error::StateInconsistency("no sweep after burn-in".into()))?;
    Ok(ChainResult {
        trace: McmcTrace {
            model: cfg.model,
            seed: rng.seed(),
            stream: rng.stream(),
            config_digest: config_digest(cfg, hp, x.include_diagonal()),
            records,
        },
        estimate,
        final_state: state,
    })
}
