//! Bayesian bi-clustering of time-varying relational count data.
//!
//! Three models share one state representation: a static Poisson infinite
//! relational model fitted per time step, a dynamic variant whose cluster
//! memberships follow a sticky HDP-HMM, and a zero-inflated dynamic variant.
//! Inference is by beam-sampling MCMC.

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
