//! Single-site label moves with the block rates integrated out.
//!
//! Runs inside the beam update, after forward filtering / backward sampling
//! and under the same slice variables `u`. Given `u`, the dynamics enter
//! only through the indicators `u[t][i] < π(z[t-1][i] → k)` and
//! `u[t+1][i] < π(k → z[t+1][i])`, so each `z[t][i]` is redrawn over the
//! instantiated clusters in proportion to those indicators times the
//! Gamma–Poisson marginal of the blocks, `ln Γ(a + S) − (a + S) ln(b + n)`
//! up to terms that do not depend on `z`. The rates are stale afterwards and
//! must be redrawn from their conditional.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::ChainState;
use crate::error::Result;
use crate::model::Hyperparams;
use crate::rng::draw_log_categorical;
use crate::tensor::CountTensor;

struct Blocks {
    k: usize,
    sum: Vec<u64>,
    cells: Vec<u64>,
}

impl Blocks {
    fn add(&mut self, a: usize, b: usize, s: u64, n: u64) {
        self.sum[a * self.k + b] += s;
        self.cells[a * self.k + b] += n;
    }

    fn sub(&mut self, a: usize, b: usize, s: u64, n: u64) {
        self.sum[a * self.k + b] -= s;
        self.cells[a * self.k + b] -= n;
    }
}

#[inline]
fn marginal(hp: &Hyperparams, s: u64, n: u64) -> f64 {
    let shape = hp.a + s as f64;
    ln_gamma(shape) - shape * (hp.b + n as f64).ln()
}

/// Change in log marginal when a block gains `(s, n)`.
#[inline]
fn gain(hp: &Hyperparams, blocks: &Blocks, a: usize, b: usize, s: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let idx = a * blocks.k + b;
    let (bs, bn) = (blocks.sum[idx], blocks.cells[idx]);
    marginal(hp, bs + s, bn + n) - marginal(hp, bs, bn)
}

/// One pass over every `(t, i)` in order. `slices` holds `u[t][i]` row-major
/// and must be consistent with the current labels.
pub(super) fn relabel_sites<R: Rng + ?Sized>(
    x: &CountTensor,
    state: &mut ChainState,
    hp: &Hyperparams,
    slices: &[f64],
    rng: &mut R,
) -> Result<()> {
    let (steps, n, _) = x.dims();
    let k = state.z.k();
    let r = state.zip.as_ref().map(|zip| zip.r.clone());
    let poisson = |idx: usize| r.as_ref().is_none_or(|r| r[idx] == 1);

    let mut blocks = Blocks {
        k,
        sum: vec![0; k * k],
        cells: vec![0; k * k],
    };
    for (t, i, j, c) in x.cells() {
        if poisson(x.index(t, i, j)) {
            blocks.add(state.z.get(t, i), state.z.get(t, j), c as u64, 1);
        }
    }

    let dynamics = &state.dynamics;
    let mut out_s = vec![0u64; k];
    let mut out_n = vec![0u64; k];
    let mut in_s = vec![0u64; k];
    let mut in_n = vec![0u64; k];
    let mut scores = vec![0.0; k];
    for t in 0..steps {
        for i in 0..n {
            out_s.fill(0);
            out_n.fill(0);
            in_s.fill(0);
            in_n.fill(0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let l = state.z.get(t, j);
                let a = x.index(t, i, j);
                if poisson(a) {
                    out_s[l] += x.as_slice()[a] as u64;
                    out_n[l] += 1;
                }
                let b = x.index(t, j, i);
                if poisson(b) {
                    in_s[l] += x.as_slice()[b] as u64;
                    in_n[l] += 1;
                }
            }
            let d = x.index(t, i, i);
            let (diag_s, diag_n) = if x.include_diagonal() && poisson(d) {
                (x.as_slice()[d] as u64, 1)
            } else {
                (0, 0)
            };

            let current = state.z.get(t, i);
            for l in 0..k {
                if l == current {
                    blocks.sub(
                        current,
                        current,
                        out_s[l] + in_s[l] + diag_s,
                        out_n[l] + in_n[l] + diag_n,
                    );
                } else {
                    blocks.sub(current, l, out_s[l], out_n[l]);
                    blocks.sub(l, current, in_s[l], in_n[l]);
                }
            }

            for (c, score) in scores.iter_mut().enumerate() {
                let prev = if t == 0 { 0 } else { state.z.get(t - 1, i) };
                let mut admissible = slices[t * n + i] < dynamics.row(t, prev)[c];
                if t + 1 < steps {
                    admissible &= slices[(t + 1) * n + i] < dynamics.transitions[t][c][state.z.get(t + 1, i)];
                }
                if !admissible {
                    *score = f64::NEG_INFINITY;
                    continue;
                }
                let mut v = 0.0;
                for l in 0..k {
                    if l == c {
                        v += gain(
                            hp,
                            &blocks,
                            c,
                            c,
                            out_s[l] + in_s[l] + diag_s,
                            out_n[l] + in_n[l] + diag_n,
                        );
                    } else {
                        v += gain(hp, &blocks, c, l, out_s[l], out_n[l]);
                        v += gain(hp, &blocks, l, c, in_s[l], in_n[l]);
                    }
                }
                *score = v;
            }
            let chosen = draw_log_categorical(&scores, rng)?;

            for l in 0..k {
                if l == chosen {
                    blocks.add(chosen, chosen, out_s[l] + in_s[l] + diag_s, out_n[l] + in_n[l] + diag_n);
                } else {
                    blocks.add(chosen, l, out_s[l], out_n[l]);
                    blocks.add(l, chosen, in_s[l], in_n[l]);
                }
            }
            state.z.set(t, i, chosen);
        }
    }
    Ok(())
}
