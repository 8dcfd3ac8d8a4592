//! Beam sampling of the assignments.
//!
//! Each label gets a slice variable `u = U · π(prev → current)`. Clusters are
//! instantiated by stick-breaking until every row's residual mass is below
//! `min u`, which leaves finitely many admissible transitions. Each object's
//! label chain is then drawn by forward filtering / backward sampling with
//! the other objects held fixed.

use rand::Rng;

use super::collapsed::relabel_sites;
use super::dynamics::{draw_row, DynamicsFlavor};
use super::ChainState;
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::rng::{draw_beta_split, draw_categorical, draw_gamma, uniform_open};
use crate::tensor::CountTensor;

/// What to do when the slice threshold asks for more clusters than the cap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationPolicy {
    /// Fail the sweep.
    #[default]
    Error,
    /// Stop extending; labels stay within the first `cap` clusters.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOutcome {
    /// Clusters instantiated by this sweep.
    pub added: usize,
    /// Whether the cap stopped the extension early.
    pub clamped: bool,
    pub min_slice: f64,
}

/// Resample every object's label chain. With `collapsed`, follow this with
/// one single-site pass that integrates out the block rates, under the same
/// slice variables. The state may be left with empty clusters; see
/// [`compact`].
pub fn beam_resample_assignments<R: Rng + ?Sized>(
    x: &CountTensor,
    state: &mut ChainState,
    hp: &Hyperparams,
    cap: usize,
    policy: TruncationPolicy,
    collapsed: bool,
    rng: &mut R,
) -> Result<BeamOutcome> {
    let (steps, n, _) = x.dims();
    let z = &state.z;
    if z.steps() != steps || z.objects() != n {
        return Err(Error::StateInconsistency("assignments do not match data dims".into()));
    }
    if state.dynamics.k() != z.k() || state.lambda.k() != z.k() {
        return Err(Error::StateInconsistency(format!(
            "{} labels but {} weights and a {}x{} rate matrix",
            z.k(),
            state.dynamics.k(),
            state.lambda.k(),
            state.lambda.k()
        )));
    }
    if let Some(zip) = &state.zip {
        if zip.r.len() != x.len() {
            return Err(Error::StateInconsistency("latent indicators do not match data".into()));
        }
    }

    let mut u = vec![0.0; steps * n];
    for t in 0..steps {
        for i in 0..n {
            let prev = if t == 0 { 0 } else { z.get(t - 1, i) };
            u[t * n + i] = uniform_open(rng) * state.dynamics.row(t, prev)[z.get(t, i)];
        }
    }
    let min_slice = u.iter().copied().fold(f64::INFINITY, f64::min);

    let flavor = state.flavor();
    let mut added = 0;
    let mut clamped = false;
    loop {
        let residual = state.dynamics.rows().map(|r| r[r.len() - 1]).fold(0.0, f64::max);
        if residual <= min_slice {
            break;
        }
        if state.dynamics.k() >= cap {
            match policy {
                TruncationPolicy::Error => {
                    return Err(Error::TruncationCap { cap, min_slice });
                }
                TruncationPolicy::Clamp => {
                    clamped = true;
                    break;
                }
            }
        }
        extend(state, hp, flavor, rng)?;
        added += 1;
    }
    let k = state.dynamics.k();
    state.z.set_k(k);

    let log_lambda: Vec<f64> = (0..k * k).map(|b| state.lambda.get(b / k, b % k).ln()).collect();
    let mut emission = vec![0.0; steps * k];
    let mut forward = vec![0.0; steps * k];
    let mut weights = vec![0.0; k];
    let mut stats = vec![0u64; 4 * k];

    for i in 0..n {
        for t in 0..steps {
            object_emission(
                x,
                state,
                i,
                t,
                &log_lambda,
                &mut stats,
                &mut emission[t * k..(t + 1) * k],
            );
        }

        // Forward pass; each step is rescaled so its largest entry is 1.
        for t in 0..steps {
            let ut = u[t * n + i];
            for c in 0..k {
                let reach: f64 = if t == 0 {
                    if ut < state.dynamics.initial[c] {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let prev = &forward[(t - 1) * k..t * k];
                    let rows = &state.dynamics.transitions[t - 1];
                    (0..k).filter(|&p| ut < rows[p][c]).map(|p| prev[p]).sum()
                };
                forward[t * k + c] = if reach > 0.0 {
                    reach.ln() + emission[t * k + c]
                } else {
                    f64::NEG_INFINITY
                };
            }
            let row = &mut forward[t * k..(t + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::StateInconsistency(format!(
                    "object {} has no admissible label at step {}",
                    i + 1,
                    t + 1
                )));
            }
            for v in row.iter_mut() {
                *v = (*v - max).exp();
            }
        }

        let last = steps - 1;
        let mut next = draw_categorical(&forward[last * k..], rng)?;
        state.z.set(last, i, next);
        for t in (0..last).rev() {
            let ut = u[(t + 1) * n + i];
            let rows = &state.dynamics.transitions[t];
            for c in 0..k {
                weights[c] = if ut < rows[c][next] { forward[t * k + c] } else { 0.0 };
            }
            next = draw_categorical(&weights, rng)?;
            state.z.set(t, i, next);
        }
    }

    if collapsed {
        relabel_sites(x, state, hp, &u, rng)?;
    }

    Ok(BeamOutcome {
        added,
        clamped,
        min_slice,
    })
}

/// Log emission weight of object `i` taking each label at step `t`, with all
/// other labels fixed. Structural-zero cells are skipped.
fn object_emission(
    x: &CountTensor,
    state: &ChainState,
    i: usize,
    t: usize,
    log_lambda: &[f64],
    stats: &mut [u64],
    out: &mut [f64],
) {
    let k = out.len();
    let z = &state.z;
    let r = state.zip.as_ref().map(|zip| zip.r.as_slice());
    let poisson = |idx: usize| r.is_none_or(|r| r[idx] == 1);
    stats.fill(0);
    let (out_sum, rest) = stats.split_at_mut(k);
    let (out_cnt, rest) = rest.split_at_mut(k);
    let (in_sum, in_cnt) = rest.split_at_mut(k);
    for j in 0..x.objects() {
        if j == i {
            continue;
        }
        let l = z.get(t, j);
        let a = x.index(t, i, j);
        if poisson(a) {
            out_sum[l] += x.as_slice()[a] as u64;
            out_cnt[l] += 1;
        }
        let b = x.index(t, j, i);
        if poisson(b) {
            in_sum[l] += x.as_slice()[b] as u64;
            in_cnt[l] += 1;
        }
    }
    let diag = x.index(t, i, i);
    let diag_used = x.include_diagonal() && poisson(diag);
    let diag_x = x.as_slice()[diag] as f64;
    let lambda = &state.lambda;
    for (c, o) in out.iter_mut().enumerate() {
        let mut v = 0.0;
        for l in 0..k {
            if out_cnt[l] > 0 {
                v += out_sum[l] as f64 * log_lambda[c * k + l] - out_cnt[l] as f64 * lambda.get(c, l);
            }
            if in_cnt[l] > 0 {
                v += in_sum[l] as f64 * log_lambda[l * k + c] - in_cnt[l] as f64 * lambda.get(l, c);
            }
        }
        if diag_used {
            v += diag_x * log_lambda[c * k + c] - lambda.get(c, c);
        }
        *o = v;
    }
}

/// Instantiate one cluster from the residual mass: split `β`'s residual by a
/// `Beta(1, γ)` stick, split each row's residual by
/// `Beta(α₀β_new, α₀β_rest)`, give the new cluster fresh rows, and draw its
/// block rates from the prior.
fn extend<R: Rng + ?Sized>(
    state: &mut ChainState,
    hp: &Hyperparams,
    flavor: DynamicsFlavor,
    rng: &mut R,
) -> Result<()> {
    let d = &mut state.dynamics;
    let k = d.k();
    let residual = d.beta[k];
    let (v, rest) = draw_beta_split(1.0, hp.gamma, rng)?;
    let new = (residual * v).max(f64::MIN_POSITIVE);
    let rest = (residual * rest).max(f64::MIN_POSITIVE);
    d.beta[k] = new;
    d.beta.push(rest);

    match flavor {
        DynamicsFlavor::Static => {
            d.initial = d.beta.clone();
            for step in &mut d.transitions {
                *step = vec![d.beta.clone(); k + 1];
            }
        }
        DynamicsFlavor::StickyHdp => {
            let split = |row: &mut Vec<f64>, rng: &mut R| -> Result<()> {
                let (p, q) = draw_beta_split(hp.alpha0 * new, hp.alpha0 * rest, rng)?;
                let r = row[k];
                row[k] = (r * p).max(f64::MIN_POSITIVE);
                row.push((r * q).max(f64::MIN_POSITIVE));
                Ok(())
            };
            split(&mut d.initial, rng)?;
            for step in &mut d.transitions {
                for row in step.iter_mut() {
                    split(row, rng)?;
                }
                step.push(draw_row(&d.beta, hp, Some(k), None, rng)?);
            }
        }
    }

    let fresh = (0..2 * k + 1)
        .map(|_| draw_gamma(hp.a, hp.b, rng).map(|v| v.max(f64::MIN_POSITIVE)))
        .collect::<Result<Vec<_>>>()?;
    let mut fresh = fresh.into_iter();
    state.lambda.grow(|_, _| fresh.next().expect("one draw per new entry"));
    state.z.set_k(k + 1);
    Ok(())
}

/// Drop empty clusters and relabel by first appearance, carrying rates and
/// dynamics along. Mass of dropped clusters returns to the residual.
pub fn compact(state: &mut ChainState) {
    let (z, map) = state.z.canonicalize();
    let mut keep = vec![0; z.k()];
    for (old, new) in map.iter().enumerate() {
        if let Some(new) = new {
            keep[*new] = old;
        }
    }
    state.lambda = state.lambda.select(&keep);
    state.dynamics = state.dynamics.select(&keep);
    state.z = z;
}

/// One full assignment update: resample, then compact.
pub fn beam_sweep_z<R: Rng + ?Sized>(
    x: &CountTensor,
    state: &mut ChainState,
    hp: &Hyperparams,
    cap: usize,
    policy: TruncationPolicy,
    collapsed: bool,
    rng: &mut R,
) -> Result<BeamOutcome> {
    let outcome = beam_resample_assignments(x, state, hp, cap, policy, collapsed, rng)?;
    compact(state);
    Ok(outcome)
}
