//! Per-sweep consistency checks on a saved trace.
//!
//! For every sweep: the block identity `Σ r·x = Σ x`, the ratio identities
//! between the Poisson and zero-inflated rate posteriors with `α ∈ [0, 1]`,
//! positive rates, labels inside `1..=K`, and probability simplices for `β`
//! and every transition row.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::theorem1_check;
use crate::io::TraceLine;
use crate::model::Hyperparams;
use crate::tensor::CountTensor;

/// Relative tolerance for the posterior ratio identities.
pub const RATIO_TOL: f64 = 1e-12;
/// Absolute tolerance on simplex sums.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    pub sweep: usize,
    /// `None` when the sweep carries no zero-inflation state.
    pub identity: Option<bool>,
    pub ratios: Option<bool>,
    pub alpha_range: Option<bool>,
    pub simplex: bool,
    pub rates_positive: bool,
    pub labels_valid: bool,
    pub problems: Vec<String>,
}

impl SweepDiagnostics {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub sweeps: Vec<SweepDiagnostics>,
    pub min_alpha: Option<f64>,
    pub max_alpha: Option<f64>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.sweeps.iter().all(SweepDiagnostics::passed)
    }

    pub fn failures(&self) -> usize {
        self.sweeps.iter().filter(|s| !s.passed()).count()
    }
}

/// Check one trace line against the data it was fitted to.
pub fn diagnose_line(x: &CountTensor, line: &TraceLine, hp: &Hyperparams) -> (SweepDiagnostics, Option<(f64, f64)>) {
    let mut problems = Vec::new();
    let (steps, n, _) = x.dims();

    let z = line.assignments();
    let labels_valid = match &z {
        Ok(z) if z.steps() == steps && z.objects() == n && z.k() <= line.k => true,
        Ok(z) => {
            problems.push(format!(
                "labels cover {}×{} objects with K={}, expected {steps}×{n} with K≤{}",
                z.steps(),
                z.objects(),
                z.k(),
                line.k
            ));
            false
        }
        Err(e) => {
            problems.push(format!("labels: {e}"));
            false
        }
    };

    let rates_positive = match line.rates().and_then(|l| l.validate().map(|_| l)) {
        Ok(l) if l.k() == line.k => true,
        Ok(l) => {
            problems.push(format!("rate matrix is {}×{}, expected K={}", l.k(), l.k(), line.k));
            false
        }
        Err(e) => {
            problems.push(format!("rates: {e}"));
            false
        }
    };

    let simplex = match line.dynamics().validate(SIMPLEX_TOL) {
        Ok(()) => true,
        Err(e) => {
            problems.push(format!("dynamics: {e}"));
            false
        }
    };

    let mut identity = None;
    let mut ratios = None;
    let mut alpha_range = None;
    let mut alpha_span = None;
    match (line.indicators(steps, n), &z) {
        (Ok(Some(r)), Ok(z)) if labels_valid => match theorem1_check(x, z, &r, hp) {
            Ok(blocks) => {
                let id = blocks.iter().all(|b| b.identity_holds());
                let ra = blocks
                    .iter()
                    .all(|b| b.mean_error() <= RATIO_TOL && b.var_error() <= RATIO_TOL);
                let al = blocks.iter().all(|b| b.alpha_in_unit_interval());
                for b in blocks.iter().filter(|b| !b.identity_holds()) {
                    problems.push(format!(
                        "block ({}, {}): Σ r·x = {} but Σ x = {}",
                        b.row, b.col, b.sum_rx, b.sum_x
                    ));
                }
                if !ra {
                    problems.push("posterior ratio identities fail".into());
                }
                if !al {
                    problems.push("alpha outside [0, 1]".into());
                }
                let lo = blocks.iter().map(|b| b.alpha).fold(f64::INFINITY, f64::min);
                let hi = blocks.iter().map(|b| b.alpha).fold(f64::NEG_INFINITY, f64::max);
                alpha_span = Some((lo, hi));
                identity = Some(id);
                ratios = Some(ra);
                alpha_range = Some(al);
            }
            Err(e) => problems.push(format!("block check: {e}")),
        },
        (Err(e), _) => problems.push(format!("structural zeros: {e}")),
        _ => {}
    }

    (
        SweepDiagnostics {
            sweep: line.sweep,
            identity,
            ratios,
            alpha_range,
            simplex,
            rates_positive,
            labels_valid,
            problems,
        },
        alpha_span,
    )
}

pub fn diagnose_trace(x: &CountTensor, lines: &[TraceLine], hp: &Hyperparams) -> Result<DiagnosticsReport> {
    let mut sweeps = Vec::with_capacity(lines.len());
    let mut min_alpha: Option<f64> = None;
    let mut max_alpha: Option<f64> = None;
    for line in lines {
        let (d, span) = diagnose_line(x, line, hp);
        if let Some((lo, hi)) = span {
            min_alpha = Some(min_alpha.map_or(lo, |m| m.min(lo)));
            max_alpha = Some(max_alpha.map_or(hi, |m| m.max(hi)));
        }
        sweeps.push(d);
    }
    Ok(DiagnosticsReport {
        sweeps,
        min_alpha,
        max_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::rng::RngHandle;
    use crate::sampler::{run_chain, SweepConfig};

    fn trace(model: ModelKind) -> (CountTensor, Vec<TraceLine>) {
        let counts = (0..32).map(|v| (v * 5 % 7) as u32 * (v % 3 != 0) as u32).collect();
        let x = CountTensor::from_vec(2, 4, counts).unwrap();
        let cfg = SweepConfig {
            model,
            sweeps: 20,
            burn_in: 5,
            ..Default::default()
        };
        let fit = run_chain(&x, &cfg, &Hyperparams::default(), &mut RngHandle::new(4, 0)).unwrap();
        let lines = fit
            .trace
            .records
            .iter()
            .map(|r| TraceLine::from_record(r, &fit, &x))
            .collect();
        (x, lines)
    }

    #[test]
    fn healthy_traces_pass() {
        for model in [ModelKind::Dpirm, ModelKind::Dzipirm] {
            let (x, lines) = trace(model);
            let report = diagnose_trace(&x, &lines, &Hyperparams::default()).unwrap();
            assert!(report.passed(), "{:?}", report.sweeps.iter().find(|s| !s.passed()));
            if model == ModelKind::Dzipirm {
                assert!(report.sweeps.iter().all(|s| s.identity == Some(true)));
                let (lo, hi) = (report.min_alpha.unwrap(), report.max_alpha.unwrap());
                assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
            } else {
                assert!(report.sweeps.iter().all(|s| s.identity.is_none()));
            }
        }
    }

    #[test]
    fn structural_zero_on_positive_cell_is_flagged() {
        let (x, mut lines) = trace(ModelKind::Dzipirm);
        let (t, i, j, _) = x.cells().find(|c| c.3 > 0).unwrap();
        lines[7].structural_zeros.as_mut().unwrap().push([t + 1, i + 1, j + 1]);
        let report = diagnose_trace(&x, &lines, &Hyperparams::default()).unwrap();
        assert_eq!(report.failures(), 1);
        assert_eq!(report.sweeps[7].identity, Some(false));
    }

    #[test]
    fn broken_simplex_is_flagged() {
        let (x, mut lines) = trace(ModelKind::Dpirm);
        lines[2].beta[0] += 0.1;
        let report = diagnose_trace(&x, &lines, &Hyperparams::default()).unwrap();
        assert!(!report.sweeps[2].simplex);
        assert_eq!(report.failures(), 1);
    }
}
