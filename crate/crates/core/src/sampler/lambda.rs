use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ClusterState, Hyperparams, RateMatrix};
use crate::rng::draw_gamma;
use crate::tensor::CountTensor;

/// Sufficient statistics of each block `C[k][ℓ] = {(t,i,j): z_ti = k, z_tj = ℓ}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStats {
    pub k: usize,
    /// `Σ x` over the block.
    pub sum_x: Vec<u64>,
    /// `Σ r·x` over the block.
    pub sum_rx: Vec<u64>,
    /// `|C|`.
    pub cells: Vec<u64>,
    /// `Σ r` over the block.
    pub sum_r: Vec<u64>,
}

impl BlockStats {
    #[inline]
    pub fn at(&self, k: usize, l: usize) -> usize {
        k * self.k + l
    }
}

/// Tally block statistics over included cells. Without `r` every cell counts
/// as a Poisson cell.
pub fn block_stats(x: &CountTensor, z: &ClusterState, r: Option<&[u8]>) -> Result<BlockStats> {
    if z.steps() != x.steps() || z.objects() != x.objects() {
        return Err(Error::StateInconsistency("assignments do not match data dims".into()));
    }
    if let Some(r) = r {
        if r.len() != x.len() {
            return Err(Error::StateInconsistency("latent indicators do not match data".into()));
        }
    }
    let k = z.k();
    let mut s = BlockStats {
        k,
        sum_x: vec![0; k * k],
        sum_rx: vec![0; k * k],
        cells: vec![0; k * k],
        sum_r: vec![0; k * k],
    };
    for (t, i, j, c) in x.cells() {
        let b = s.at(z.get(t, i), z.get(t, j));
        let ri = r.map_or(1, |r| r[x.index(t, i, j)]) as u64;
        s.sum_x[b] += c as u64;
        s.sum_rx[b] += ri * c as u64;
        s.cells[b] += 1;
        s.sum_r[b] += ri;
    }
    Ok(s)
}

/// Shape and rate of each block's Gamma full conditional, row-major.
/// With `zero_inflated` the rate counts only Poisson cells (`Σ r`); the shape
/// uses `Σ x`, which equals `Σ r·x` for any valid state.
pub fn lambda_posterior(stats: &BlockStats, hp: &Hyperparams, zero_inflated: bool) -> Vec<(f64, f64)> {
    (0..stats.k * stats.k)
        .map(|b| {
            let exposure = if zero_inflated { stats.sum_r[b] } else { stats.cells[b] };
            (hp.a + stats.sum_x[b] as f64, hp.b + exposure as f64)
        })
        .collect()
}

fn draw_matrix<R: Rng + ?Sized>(k: usize, params: &[(f64, f64)], rng: &mut R) -> Result<RateMatrix> {
    let mut lambda = RateMatrix::filled(k, 1.0);
    for a in 0..k {
        for b in 0..k {
            let (shape, rate) = params[a * k + b];
            // Guard against a draw that underflows to exactly zero.
            let v = draw_gamma(shape, rate, rng)?.max(f64::MIN_POSITIVE);
            lambda.set(a, b, v);
        }
    }
    Ok(lambda)
}

/// `λ[k][ℓ] ~ Gamma(a + Σ_C x, b + |C|)`; empty blocks draw from the prior.
pub fn sample_lambda_dpirm<R: Rng + ?Sized>(
    x: &CountTensor,
    z: &ClusterState,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<RateMatrix> {
    let stats = block_stats(x, z, None)?;
    draw_matrix(z.k(), &lambda_posterior(&stats, hp, false), rng)
}

/// `λ[k][ℓ] ~ Gamma(a + Σ_C x, b + Σ_C r)`.
pub fn sample_lambda_dzipirm<R: Rng + ?Sized>(
    x: &CountTensor,
    z: &ClusterState,
    r: &[u8],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<RateMatrix> {
    check_r_constraint(x, r)?;
    let stats = block_stats(x, z, Some(r))?;
    draw_matrix(z.k(), &lambda_posterior(&stats, hp, true), rng)
}

pub(crate) fn check_r_constraint(x: &CountTensor, r: &[u8]) -> Result<()> {
    if r.len() != x.len() {
        return Err(Error::StateInconsistency("latent indicators do not match data".into()));
    }
    let (_, n, _) = x.dims();
    for (idx, (&c, &ri)) in x.as_slice().iter().zip(r).enumerate() {
        if ri > 1 {
            return Err(Error::StateInconsistency(format!("indicator {ri} is not binary")));
        }
        if c > 0 && ri == 0 {
            let (t, rem) = (idx / (n * n), idx % (n * n));
            return Err(Error::StateInconsistency(format!(
                "cell ({},{},{}) has count {c} but is marked structural zero",
                t + 1,
                rem / n + 1,
                rem % n + 1
            )));
        }
    }
    Ok(())
}
