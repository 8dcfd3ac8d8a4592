//! One MCMC sweep per model: sticky HDP-HMM dynamics, beam-sampled
//! assignments, conjugate block rates and the zero-inflation latents.

mod beam;
mod chain;
mod collapsed;
mod dynamics;
mod lambda;
mod pirm;
mod zip;

pub use beam::{beam_resample_assignments, beam_sweep_z, compact, BeamOutcome, TruncationPolicy};
pub use chain::{
    config_digest, init_state, run_chain, sweep, ChainResult, InitStrategy, McmcTrace, PointEstimate,
    PointEstimateRule, SweepConfig, SweepRecord,
};
pub use dynamics::{sample_dynamics, transition_counts, DynamicsFlavor, TransitionCounts};
pub use lambda::{block_stats, lambda_posterior, sample_lambda_dpirm, sample_lambda_dzipirm, BlockStats};
pub use pirm::{pirm_fit, pirm_fit_all};
pub use zip::{r_probability, sample_r, sample_w};

use crate::model::{ClusterState, DynamicsState, EmissionState, ModelKind, RateMatrix, ZipState};

/// Everything one chain carries between sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub model: ModelKind,
    pub z: ClusterState,
    pub dynamics: DynamicsState,
    pub lambda: RateMatrix,
    pub zip: Option<ZipState>,
}

impl ChainState {
    pub fn emission(&self) -> EmissionState {
        EmissionState {
            lambda: self.lambda.clone(),
            zip: self.zip.clone(),
        }
    }

    pub fn flavor(&self) -> DynamicsFlavor {
        DynamicsFlavor::for_model(self.model)
    }
}
