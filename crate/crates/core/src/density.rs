//! Exact log densities for cells and whole tensors.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ClusterState, EmissionState, ModelKind, RateMatrix};
use crate::tensor::CountTensor;

/// `ln(x!)`.
#[inline]
pub fn ln_factorial(x: u32) -> f64 {
    if x < 2 {
        0.0
    } else {
        ln_gamma(x as f64 + 1.0)
    }
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Poisson rate must be finite and > 0, got {lambda}"
        )))
    }
}

pub fn poisson_log_pmf(x: u32, lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    Ok(x as f64 * lambda.ln() - lambda - ln_factorial(x))
}

/// Log pmf of the mixture `(1-w)·1{x=0} + w·Poisson(x; λ)`.
pub fn zip_log_pmf(x: u32, lambda: f64, w: f64) -> Result<f64> {
    check_rate(lambda)?;
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Domain(format!("mixing weight must lie in (0,1), got {w}")));
    }
    Ok(zip_log_pmf_unchecked(x, lambda, w))
}

#[inline]
pub(crate) fn zip_log_pmf_unchecked(x: u32, lambda: f64, w: f64) -> f64 {
    if x > 0 {
        w.ln() + x as f64 * lambda.ln() - lambda - ln_factorial(x)
    } else {
        log_add_exp((-w).ln_1p(), w.ln() - lambda)
    }
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_state(x: &CountTensor, z: &ClusterState, lambda: &RateMatrix) -> Result<()> {
    if z.steps() != x.steps() || z.objects() != x.objects() {
        return Err(Error::StateInconsistency(format!(
            "assignments are {}x{} but data is {}x{}",
            z.steps(),
            z.objects(),
            x.steps(),
            x.objects()
        )));
    }
    if let Some(&l) = z.labels().iter().find(|&&l| l >= lambda.k()) {
        return Err(Error::StateInconsistency(format!(
            "label {} has no row in the {}x{} rate matrix",
            l + 1,
            lambda.k(),
            lambda.k()
        )));
    }
    lambda.validate()
}

/// Log-likelihood of `x` given assignments and emission parameters, with
/// the zero-inflation indicator summed out for the dZIPIRM.
pub fn joint_log_likelihood(
    x: &CountTensor,
    z: &ClusterState,
    emission: &EmissionState,
    model: ModelKind,
) -> Result<f64> {
    let lambda = &emission.lambda;
    check_state(x, z, lambda)?;
    let mut total = 0.0;
    match model {
        ModelKind::Pirm | ModelKind::Dpirm => {
            for (t, i, j, c) in x.cells() {
                let rate = lambda.get(z.get(t, i), z.get(t, j));
                total += c as f64 * rate.ln() - rate - ln_factorial(c);
            }
        }
        ModelKind::Dzipirm => {
            let zip = emission
                .zip
                .as_ref()
                .ok_or_else(|| Error::StateInconsistency("dZIPIRM likelihood needs mixing weights".into()))?;
            if zip.w.len() != x.len() {
                return Err(Error::StateInconsistency("mixing weights do not match data".into()));
            }
            for (t, i, j, c) in x.cells() {
                let rate = lambda.get(z.get(t, i), z.get(t, j));
                let w = zip.w[x.index(t, i, j)];
                if !(w > 0.0 && w < 1.0) {
                    return Err(Error::Domain(format!("mixing weight {w} outside (0,1)")));
                }
                total += zip_log_pmf_unchecked(c, rate, w);
            }
        }
    }
    Ok(total)
}

/// [`joint_log_likelihood`] divided by the number of included cells.
pub fn normalized_log_likelihood(
    x: &CountTensor,
    z: &ClusterState,
    emission: &EmissionState,
    model: ModelKind,
) -> Result<f64> {
    let cells = x.included_cells();
    if cells == 0 {
        return Err(Error::Domain("no cells to normalize by".into()));
    }
    Ok(joint_log_likelihood(x, z, emission, model)? / cells as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ZipState;
    use proptest::prelude::*;

    fn emission(lambda: RateMatrix) -> EmissionState {
        EmissionState { lambda, zip: None }
    }

    #[test]
    fn poisson_examples() {
        assert!((poisson_log_pmf(0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        // ln(2^2 e^-2 / 2!) = ln 2 - 2
        let expected = std::f64::consts::LN_2 - 2.0;
        assert!((poisson_log_pmf(2, 2.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected + 1.306_852_819_440_054_7).abs() < 1e-15);
        assert!(matches!(poisson_log_pmf(5, 0.0), Err(Error::Domain(_))));
        assert!(poisson_log_pmf(5, f64::NAN).is_err());
        assert!(poisson_log_pmf(5, f64::INFINITY).is_err());
    }

    #[test]
    fn large_counts_are_finite() {
        let v = poisson_log_pmf(1_000_000, 1_000_000.0).unwrap();
        // Stirling: ≈ -0.5 ln(2π·10^6)
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI * 1e6).ln()).abs() < 1e-6);
    }

    #[test]
    fn zip_examples() {
        let got = zip_log_pmf(3, 2.0, 0.5).unwrap();
        let want = 0.5f64.ln() + poisson_log_pmf(3, 2.0).unwrap();
        assert!((got - want).abs() < 1e-14);
        for &(lambda, w) in &[(0.3, 0.2), (2.0, 0.9), (40.0, 0.5)] {
            let got = zip_log_pmf(0, lambda, w).unwrap();
            let want = ((1.0 - w) + w * (-lambda).exp()).ln();
            assert!((got - want).abs() < 1e-14);
        }
        assert!(zip_log_pmf(0, 1.0, 0.0).is_err());
        assert!(zip_log_pmf(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zip_normalizes() {
        let total: f64 = (0..=200).map(|x| zip_log_pmf(x, 3.0, 0.7).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn all_zero_single_cluster() {
        let x = CountTensor::zeros(3, 4).unwrap();
        let z = ClusterState::single_cluster(3, 4);
        let e = emission(RateMatrix::filled(1, 1.0));
        let ll = joint_log_likelihood(&x, &z, &e, ModelKind::Pirm).unwrap();
        assert!((ll + 48.0).abs() < 1e-12);
        let e = emission(RateMatrix::filled(1, 2.0));
        let nll = normalized_log_likelihood(&x, &z, &e, ModelKind::Dpirm).unwrap();
        assert!((nll + 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_by_two_hand_sum() {
        let x = CountTensor::from_vec(2, 2, vec![3, 0, 1, 2, 0, 5, 4, 1]).unwrap();
        let z = ClusterState::new(2, 2, vec![0, 1, 1, 1], 2).unwrap();
        let lambda = RateMatrix::from_rows(&[vec![1.5, 0.5], vec![2.5, 3.0]]).unwrap();
        // Independent per-cell sum written out by hand.
        let p = |x: u32, l: f64| -> f64 {
            let fact: f64 = (1..=x).map(|v| v as f64).product();
            (l.powi(x as i32) * (-l).exp() / fact).ln()
        };
        let want = p(3, 1.5) + p(0, 0.5) + p(1, 2.5) + p(2, 3.0) + p(0, 3.0) + p(5, 3.0) + p(4, 3.0) + p(1, 3.0);
        let got = joint_log_likelihood(&x, &z, &emission(lambda.clone()), ModelKind::Dpirm).unwrap();
        assert!((got - want).abs() < 1e-12);

        // Diagonal excluded: drop x[t,i,i].
        let xd = x.clone().with_diagonal(false);
        let want_off = p(0, 0.5) + p(1, 2.5) + p(5, 3.0) + p(4, 3.0);
        let got = joint_log_likelihood(&xd, &z, &emission(lambda), ModelKind::Dpirm).unwrap();
        assert!((got - want_off).abs() < 1e-12);
    }

    #[test]
    fn label_without_rate_is_inconsistent() {
        let x = CountTensor::zeros(1, 2).unwrap();
        let z = ClusterState::new(1, 2, vec![0, 1], 2).unwrap();
        let e = emission(RateMatrix::filled(1, 1.0));
        assert!(matches!(
            joint_log_likelihood(&x, &z, &e, ModelKind::Dpirm),
            Err(Error::StateInconsistency(_))
        ));
    }

    #[test]
    fn zip_dominates_poisson_on_zeros() {
        let x = CountTensor::zeros(2, 3).unwrap();
        let z = ClusterState::single_cluster(2, 3);
        let lambda = RateMatrix::filled(1, 1.7);
        for &w in &[0.01, 0.3, 0.999] {
            let zip = ZipState {
                w: vec![w; x.len()],
                r: vec![1; x.len()],
            };
            let e = EmissionState {
                lambda: lambda.clone(),
                zip: Some(zip),
            };
            let a = joint_log_likelihood(&x, &z, &e, ModelKind::Dzipirm).unwrap();
            let b = joint_log_likelihood(&x, &z, &e, ModelKind::Dpirm).unwrap();
            assert!(a >= b);
        }
    }

    proptest! {
        #[test]
        fn zip_sums_to_one(lambda in 0.05f64..20.0, w in 0.001f64..0.999) {
            let total: f64 = (0..=400).map(|x| zip_log_pmf(x, lambda, w).unwrap().exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn zip_tends_to_poisson(x in 0u32..30, lambda in 0.05f64..5.0) {
            let w = 1.0 - 1e-12;
            let d = zip_log_pmf(x, lambda, w).unwrap() - poisson_log_pmf(x, lambda).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }
    }
}
