use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ClusterState, Hyperparams, RateMatrix};
use crate::rng::{draw_bernoulli, draw_beta};
use crate::tensor::CountTensor;

/// Largest double below one; keeps `ln(1 - w)` finite.
const W_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// `w ~ Beta(c + r, d + 1 - r)` independently per cell.
pub fn sample_w<R: Rng + ?Sized>(r: &[u8], hp: &Hyperparams, rng: &mut R) -> Result<Vec<f64>> {
    r.iter()
        .map(|&ri| {
            let ri = ri as f64;
            let w = draw_beta(hp.c + ri, hp.d + 1.0 - ri, rng)?;
            Ok(w.clamp(f64::MIN_POSITIVE, W_MAX))
        })
        .collect()
}

/// `P(r = 1 | x, λ, w)`: 1 for a positive count, otherwise
/// `w e^{-λ} / (w e^{-λ} + 1 - w)`.
pub fn r_probability(x: u32, lambda: f64, w: f64) -> f64 {
    if x > 0 {
        return 1.0;
    }
    let log_poisson = w.ln() - lambda;
    let log_structural = (-w).ln_1p();
    1.0 / (1.0 + (log_structural - log_poisson).exp())
}

pub fn sample_r<R: Rng + ?Sized>(
    x: &CountTensor,
    z: &ClusterState,
    lambda: &RateMatrix,
    w: &[f64],
    rng: &mut R,
) -> Result<Vec<u8>> {
    if w.len() != x.len() {
        return Err(Error::StateInconsistency("mixing weights do not match data".into()));
    }
    let (steps, n, _) = x.dims();
    let mut r = vec![1u8; x.len()];
    for t in 0..steps {
        for i in 0..n {
            let zi = z.get(t, i);
            for j in 0..n {
                let idx = x.index(t, i, j);
                let c = x.as_slice()[idx];
                if c == 0 {
                    let p = r_probability(0, lambda.get(zi, z.get(t, j)), w[idx]);
                    r[idx] = draw_bernoulli(p, rng)?;
                }
            }
        }
    }
    Ok(r)
}
