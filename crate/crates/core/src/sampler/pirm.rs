//! The static baseline: each time step is clustered on its own, with labels
//! drawn from `β` directly.

use rayon::prelude::*;

use super::chain::{run_chain, ChainResult, SweepConfig};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelKind};
use crate::rng::{derive_seed, RngHandle};
use crate::tensor::CountTensor;

/// Fit one single-step slice.
pub fn pirm_fit(slice: &CountTensor, cfg: &SweepConfig, hp: &Hyperparams, rng: &mut RngHandle) -> Result<ChainResult> {
    if slice.steps() != 1 {
        return Err(Error::Validation(format!(
            "expected a single time step, got {}",
            slice.steps()
        )));
    }
    let cfg = SweepConfig {
        model: ModelKind::Pirm,
        ..*cfg
    };
    run_chain(slice, &cfg, hp, rng)
}

/// Fit every step independently. Step `t` uses seed `derive_seed(seed, t)`
/// on `stream`, so results do not depend on scheduling.
pub fn pirm_fit_all(
    x: &CountTensor,
    cfg: &SweepConfig,
    hp: &Hyperparams,
    seed: u64,
    stream: u64,
) -> Result<Vec<ChainResult>> {
    (0..x.steps())
        .into_par_iter()
        .map(|t| {
            let mut rng = RngHandle::new(derive_seed(seed, t as u64), stream);
            pirm_fit(&x.slice(t), cfg, hp, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::draw_poisson;

    fn flat(steps: usize, n: usize, seed: u64) -> CountTensor {
        let mut rng = RngHandle::new(seed, 0);
        let counts = (0..steps * n * n)
            .map(|_| draw_poisson(3.0, &mut rng).unwrap())
            .collect();
        CountTensor::from_vec(steps, n, counts).unwrap()
    }

    #[test]
    fn flat_data_stays_in_one_cluster() {
        let x = flat(1, 10, 61);
        let cfg = SweepConfig {
            sweeps: 300,
            burn_in: 50,
            ..Default::default()
        };
        let out = pirm_fit(&x, &cfg, &Hyperparams::default(), &mut RngHandle::new(1, 0)).unwrap();
        let single = out.trace.records.iter().filter(|r| r.k == 1).count();
        assert!(single as f64 >= 0.9 * out.trace.records.len() as f64, "{single}");
    }

    #[test]
    fn one_fit_per_step_and_order_free() {
        let x = flat(3, 5, 62);
        let cfg = SweepConfig {
            sweeps: 20,
            burn_in: 5,
            ..Default::default()
        };
        let hp = Hyperparams::default();
        let fits = pirm_fit_all(&x, &cfg, &hp, 77, 0).unwrap();
        assert_eq!(fits.len(), 3);
        for (t, fit) in fits.iter().enumerate() {
            let mut rng = RngHandle::new(derive_seed(77, t as u64), 0);
            let again = pirm_fit(&x.slice(t), &cfg, &hp, &mut rng).unwrap();
            assert_eq!(again.trace, fit.trace);
            assert_eq!(fit.trace.model, ModelKind::Pirm);
        }
    }

    #[test]
    fn rejects_multi_step_input() {
        let x = flat(2, 3, 63);
        let err = pirm_fit(
            &x,
            &SweepConfig::default(),
            &Hyperparams::default(),
            &mut RngHandle::new(1, 0),
        );
        assert!(err.unwrap_err().is_validation());
    }
}
