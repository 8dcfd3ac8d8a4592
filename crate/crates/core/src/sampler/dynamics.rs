//! Global weights and transition rows given the assignments.
//!
//! Transition rows are integrated out when resampling `β`: each transition
//! count is seated in a Chinese restaurant with concentration
//! `α₀β_ℓ + κ·1{k=ℓ}`, self-transition tables that came from the sticky mass
//! are removed (binomial override with probability `ρ / (ρ + β_k(1-ρ))`,
//! `ρ = κ/(α₀+κ)`), and `β ~ Dir(m̄_·1, …, m̄_·K, γ)`. Rows are then drawn as
//! `Dir(α₀β + κδ_k + n_k)` with the residual column carrying `α₀β_res`.
//!
//! The first step has no predecessor: its labels come from a virtual row with
//! no sticky term, `Dir(α₀β + n_init)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ClusterState, DynamicsState, Hyperparams, ModelKind};
use crate::rng::{draw_bernoulli, draw_dirichlet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsFlavor {
    /// Sticky HDP-HMM transitions (dPIRM, dZIPIRM).
    StickyHdp,
    /// Labels drawn from `β` directly with no time structure (PIRM).
    Static,
}

impl DynamicsFlavor {
    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::Pirm => DynamicsFlavor::Static,
            ModelKind::Dpirm | ModelKind::Dzipirm => DynamicsFlavor::StickyHdp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    pub k: usize,
    /// Occupancy of each label at the first step.
    pub initial: Vec<u64>,
    /// `transitions[s][k * K + ℓ]` = objects moving from `k` at step `s` to
    /// `ℓ` at step `s + 1`.
    pub transitions: Vec<Vec<u64>>,
}

pub fn transition_counts(z: &ClusterState) -> TransitionCounts {
    let k = z.k();
    let mut initial = vec![0; k];
    for &l in z.step(0) {
        initial[l] += 1;
    }
    let transitions = (1..z.steps())
        .map(|t| {
            let mut n = vec![0; k * k];
            for (&from, &to) in z.step(t - 1).iter().zip(z.step(t)) {
                n[from * k + to] += 1;
            }
            n
        })
        .collect();
    TransitionCounts {
        k,
        initial,
        transitions,
    }
}

/// Number of occupied tables after seating `customers` with concentration
/// `theta`.
fn draw_table_count<R: Rng + ?Sized>(customers: u64, theta: f64, rng: &mut R) -> Result<u64> {
    let mut tables = 0;
    for seated in 0..customers {
        tables += draw_bernoulli(theta / (theta + seated as f64), rng)? as u64;
    }
    Ok(tables)
}

/// Draw a transition row `Dir(α₀β + κδ_self + counts)` over the instantiated
/// clusters plus the residual.
pub(crate) fn draw_row<R: Rng + ?Sized>(
    beta: &[f64],
    hp: &Hyperparams,
    self_label: Option<usize>,
    counts: Option<&[u64]>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = beta.len() - 1;
    let mut alpha: Vec<f64> = beta.iter().map(|&b| hp.alpha0 * b).collect();
    if let Some(s) = self_label {
        alpha[s] += hp.kappa;
    }
    if let Some(counts) = counts {
        for (a, &c) in alpha[..k].iter_mut().zip(counts) {
            *a += c as f64;
        }
    }
    draw_dirichlet(&alpha, rng)
}

/// Resample `β` and every transition row given `z`. `beta` is the current
/// global weight vector (length `K + 1`), needed for the table-count step.
pub fn sample_dynamics<R: Rng + ?Sized>(
    z: &ClusterState,
    beta: &[f64],
    hp: &Hyperparams,
    flavor: DynamicsFlavor,
    rng: &mut R,
) -> Result<DynamicsState> {
    let k = z.k();
    if beta.len() != k + 1 {
        return Err(Error::StateInconsistency(format!(
            "global weights have {} entries for {k} clusters",
            beta.len()
        )));
    }
    if let Some(empty) = z.occupancy().iter().position(|&o| o == 0) {
        return Err(Error::StateInconsistency(format!(
            "cluster {} is empty; compact the state first",
            empty + 1
        )));
    }
    let counts = transition_counts(z);

    match flavor {
        DynamicsFlavor::Static => {
            let mut occ: Vec<f64> = z.occupancy().iter().map(|&o| o as f64).collect();
            occ.push(hp.gamma);
            let beta = draw_dirichlet(&occ, rng)?;
            let transitions = (1..z.steps()).map(|_| vec![beta.clone(); k]).collect();
            Ok(DynamicsState {
                initial: beta.clone(),
                beta,
                transitions,
            })
        }
        DynamicsFlavor::StickyHdp => {
            let rho = hp.rho();
            let mut tables = vec![0u64; k];
            for (l, &n) in counts.initial.iter().enumerate() {
                tables[l] += draw_table_count(n, hp.alpha0 * beta[l], rng)?;
            }
            for step in &counts.transitions {
                for from in 0..k {
                    for to in 0..k {
                        let n = step[from * k + to];
                        if n == 0 {
                            continue;
                        }
                        let sticky = if from == to { hp.kappa } else { 0.0 };
                        let mut m = draw_table_count(n, hp.alpha0 * beta[to] + sticky, rng)?;
                        if from == to && rho > 0.0 {
                            let p = rho / (rho + beta[to] * (1.0 - rho));
                            let mut overridden = 0;
                            for _ in 0..m {
                                overridden += draw_bernoulli(p, rng)? as u64;
                            }
                            m -= overridden;
                        }
                        tables[to] += m;
                    }
                }
            }
            let mut alpha: Vec<f64> = tables.iter().map(|&m| m as f64).collect();
            alpha.push(hp.gamma);
            let beta = draw_dirichlet(&alpha, rng)?;
            if beta[..k].iter().any(|&b| b <= 0.0) {
                return Err(Error::StateInconsistency(
                    "an occupied cluster received no tables".into(),
                ));
            }

            let initial = draw_row(&beta, hp, None, Some(&counts.initial), rng)?;
            let transitions = counts
                .transitions
                .iter()
                .map(|step| {
                    (0..k)
                        .map(|from| draw_row(&beta, hp, Some(from), Some(&step[from * k..(from + 1) * k]), rng))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DynamicsState {
                beta,
                initial,
                transitions,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;

    #[test]
    fn counts_tally_transitions() {
        let z = ClusterState::new(3, 3, vec![0, 0, 1, 0, 1, 1, 1, 1, 1], 2).unwrap();
        let c = transition_counts(&z);
        assert_eq!(c.initial, vec![2, 1]);
        assert_eq!(c.transitions[0], vec![1, 1, 0, 1]);
        assert_eq!(c.transitions[1], vec![0, 1, 0, 2]);
    }

    #[test]
    fn table_counts_are_bounded() {
        let mut rng = RngHandle::new(31, 0);
        for n in 0..20 {
            let m = draw_table_count(n, 0.7, &mut rng).unwrap();
            assert!(m <= n && (n == 0 || m >= 1));
        }
    }

    #[test]
    fn rows_are_positive_simplices() {
        let z = ClusterState::new(4, 5, (0..20).map(|v| v % 3).collect(), 3).unwrap();
        let hp = Hyperparams::default();
        let mut rng = RngHandle::new(32, 0);
        let mut beta = vec![0.25; 4];
        for _ in 0..200 {
            let d = sample_dynamics(&z, &beta, &hp, DynamicsFlavor::StickyHdp, &mut rng).unwrap();
            d.validate(1e-12).unwrap();
            assert_eq!(d.transitions.len(), 3);
            beta = d.beta;
        }
    }

    #[test]
    fn empty_cluster_is_rejected() {
        let z = ClusterState::new(1, 2, vec![0, 0], 2).unwrap();
        let mut rng = RngHandle::new(33, 0);
        let r = sample_dynamics(
            &z,
            &[0.3, 0.3, 0.4],
            &Hyperparams::default(),
            DynamicsFlavor::StickyHdp,
            &mut rng,
        );
        assert!(r.is_err());
    }

    /// One object that stays in one cluster over two steps. The occupied
    /// cluster's weight is a size-biased pick from the sticks, so a priori
    /// Beta(1, γ); the stay contributes (α₀β₁ + κ)/(α₀ + κ). With
    /// α₀ = κ = γ = 1, p(β₁ | z) ∝ 1 + β₁ and the mean is (5/6)/(3/2) = 5/9.
    #[test]
    fn single_object_posterior_matches_enumeration() {
        let z = ClusterState::single_cluster(2, 1);
        let hp = Hyperparams::default();
        let mut rng = RngHandle::new(34, 0);
        let mut beta = vec![0.5, 0.5];
        let mut total = 0.0;
        let draws = 200_000;
        for _ in 0..draws {
            let d = sample_dynamics(&z, &beta, &hp, DynamicsFlavor::StickyHdp, &mut rng).unwrap();
            beta = d.beta;
            total += beta[0];
        }
        let mean = total / draws as f64;
        assert!((mean - 5.0 / 9.0).abs() < 0.01, "mean {mean}");

        // κ = 0: the stay contributes β₁ alone, so Beta(2, γ), mean 2/3.
        let hp0 = Hyperparams { kappa: 0.0, ..hp };
        let mut total = 0.0;
        for _ in 0..draws {
            let d = sample_dynamics(&z, &beta, &hp0, DynamicsFlavor::StickyHdp, &mut rng).unwrap();
            beta = d.beta;
            total += beta[0];
        }
        assert!((total / draws as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn rows_concentrate_on_beta_as_alpha0_grows() {
        let z = ClusterState::new(2, 4, vec![0, 0, 1, 1, 0, 1, 1, 0], 2).unwrap();
        let beta = vec![0.5, 0.3, 0.2];
        let mut rng = RngHandle::new(35, 0);
        let mut distances = Vec::new();
        for alpha0 in [1.0, 10.0, 100.0, 1000.0] {
            let hp = Hyperparams {
                alpha0,
                kappa: 0.0,
                ..Default::default()
            };
            let mut acc = 0.0;
            let reps = 2000;
            for _ in 0..reps {
                let d = sample_dynamics(&z, &beta, &hp, DynamicsFlavor::StickyHdp, &mut rng).unwrap();
                let row = &d.transitions[0][0];
                acc += row.iter().zip(&d.beta).map(|(p, b)| (p - b).abs()).sum::<f64>();
            }
            distances.push(acc / reps as f64);
        }
        assert!(distances.windows(2).all(|w| w[1] < w[0]), "{distances:?}");
    }

    #[test]
    fn self_transition_mass_grows_with_kappa() {
        let z = ClusterState::new(3, 4, vec![0, 0, 1, 1, 0, 0, 1, 1, 0, 1, 1, 1], 2).unwrap();
        let mut rng = RngHandle::new(36, 0);
        let mut means = Vec::new();
        for kappa in [0.0, 1.0, 10.0] {
            let hp = Hyperparams {
                kappa,
                ..Default::default()
            };
            let mut beta = vec![0.4, 0.4, 0.2];
            let mut acc = 0.0;
            let reps = 5000;
            for _ in 0..reps {
                let d = sample_dynamics(&z, &beta, &hp, DynamicsFlavor::StickyHdp, &mut rng).unwrap();
                acc += d.transitions.iter().map(|s| s[0][0] + s[1][1]).sum::<f64>();
                beta = d.beta;
            }
            means.push(acc / reps as f64);
        }
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }

    #[test]
    fn static_flavor_uses_beta_for_every_row() {
        let z = ClusterState::new(1, 6, vec![0, 0, 0, 1, 1, 2], 3).unwrap();
        let mut rng = RngHandle::new(37, 0);
        let d = sample_dynamics(
            &z,
            &[0.25; 4],
            &Hyperparams::default(),
            DynamicsFlavor::Static,
            &mut rng,
        )
        .unwrap();
        assert_eq!(d.initial, d.beta);
        d.validate(1e-12).unwrap();
    }
}
