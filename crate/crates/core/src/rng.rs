//! Seedable random streams and the variates the samplers need.
//!
//! The generator is ChaCha8 with an explicit stream id, so `(seed, stream)`
//! pins the whole sequence. Gamma, Beta and Poisson variates come from
//! `rand_distr`; Dirichlet and Beta splits with tiny parameters go through
//! log-space Gamma draws so small weights stay positive instead of
//! underflowing to zero.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};

/// A reproducible random stream; one per chain.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Derive a child seed from a parent seed and a tag (SplitMix64 finalizer).
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    let mut z = parent ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Uniform on the open interval `(0, 1)`.
#[inline]
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gamma variate with the given shape and *rate*.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Log of a unit-rate Gamma variate. For `shape < 1` uses
/// `G(a) = G(a + 1) · U^(1/a)` evaluated in log space.
pub fn draw_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(g.sample(rng).ln())
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(g.sample(rng).ln() + uniform_open(rng).ln() / shape)
    }
}

pub fn draw_beta<R: Rng + ?Sized>(c: f64, d: f64, rng: &mut R) -> Result<f64> {
    Ok(draw_beta_split(c, d, rng)?.0)
}

/// A Beta(a, b) draw `p` returned together with `1 - p`, both computed from
/// the underlying Gamma pair so neither collapses to 0 by cancellation.
pub fn draw_beta_split<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<(f64, f64)> {
    let la = draw_log_gamma(a, rng)?;
    let lb = draw_log_gamma(b, rng)?;
    let m = la.max(lb);
    let (ea, eb) = ((la - m).exp(), (lb - m).exp());
    let s = ea + eb;
    let floor = f64::MIN_POSITIVE;
    Ok(((ea / s).max(floor), (eb / s).max(floor)))
}

/// Dirichlet draw. Zero concentrations give exact zeros; positive ones give
/// strictly positive weights.
pub fn draw_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::Domain(format!(
            "dirichlet concentrations must be >= 0: {alpha:?}"
        )));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::Domain(
            "dirichlet needs at least one positive concentration".into(),
        ));
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a == 0.0 {
                Ok(f64::NEG_INFINITY)
            } else {
                draw_log_gamma(a, rng)
            }
        })
        .collect::<Result<_>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    for (wi, &a) in w.iter_mut().zip(alpha) {
        *wi /= s;
        if a > 0.0 {
            *wi = wi.max(f64::MIN_POSITIVE);
        }
    }
    Ok(w)
}

/// Index `k` with probability `weights[k] / Σ weights`.
pub fn draw_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain(format!("categorical weights must be >= 0: {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("categorical weights sum to zero".into()));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if target < acc {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// Categorical draw from unnormalized log weights (`-inf` entries excluded).
pub fn draw_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain("no admissible category".into()));
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    draw_categorical(&w, rng)
}

/// Poisson variate; a zero rate yields 0.
pub fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u32> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("Poisson rate must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(lambda).map_err(|e| Error::Domain(e.to_string()))?;
    let v: f64 = p.sample(rng);
    Ok(v as u32)
}

pub fn draw_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "Bernoulli probability must lie in [0,1], got {p}"
        )));
    }
    Ok(u8::from(rng.random::<f64>() < p))
}

/// First `count` stick-breaking weights `β_k = v_k Π_{l<k} (1 - v_l)`,
/// `v_k ~ Beta(1, γ)`, and the remaining mass `Π (1 - v_l)`.
pub fn stick_break<R: Rng + ?Sized>(gamma: f64, count: usize, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    positive("stick-breaking concentration", gamma)?;
    let mut residual = 1.0;
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        let (v, rest) = draw_beta_split(1.0, gamma, rng)?;
        weights.push(v * residual);
        residual *= rest;
    }
    Ok((weights, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::poisson_log_pmf;
    use crate::stats::{chi_square_p_value, ks_p_value, mean_var};
    use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

    const DRAWS: usize = 100_000;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8)
            .map({
                let mut r = RngHandle::new(7, 0);
                move |_| r.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..8)
            .map({
                let mut r = RngHandle::new(7, 0);
                move |_| r.next_u64()
            })
            .collect();
        let c: Vec<u64> = (0..8)
            .map({
                let mut r = RngHandle::new(7, 1);
                move |_| r.next_u64()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RngHandle::new(11, 0);
        let xs: Vec<f64> = (0..DRAWS).map(|_| draw_gamma(2.0, 4.0, &mut rng).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 0.5).abs() < 0.02, "mean {m}");
        assert!((v - 0.125).abs() < 0.01, "var {v}");
    }

    #[test]
    fn gamma_ks_against_incomplete_gamma_cdf() {
        let mut rng = RngHandle::new(12, 0);
        let xs: Vec<f64> = (0..5_000).map(|_| draw_gamma(7.0, 4.0, &mut rng).unwrap()).collect();
        let dist = GammaDist::new(7.0, 4.0).unwrap();
        let p = ks_p_value(&xs, |x| dist.cdf(x));
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn small_shape_gamma_is_correct() {
        let mut rng = RngHandle::new(13, 0);
        let xs: Vec<f64> = (0..5_000)
            .map(|_| draw_log_gamma(0.3, &mut rng).unwrap().exp())
            .collect();
        let dist = GammaDist::new(0.3, 1.0).unwrap();
        assert!(ks_p_value(&xs, |x| dist.cdf(x)) > 0.001);
        // Far below f64 range in linear space, still finite in log space.
        let l = draw_log_gamma(1e-4, &mut rng).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn gamma_rejects_bad_params() {
        let mut rng = RngHandle::new(1, 0);
        assert!(draw_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(draw_gamma(1.0, -1.0, &mut rng).is_err());
        assert!(draw_beta(1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn beta_moments_and_ks() {
        let mut rng = RngHandle::new(14, 0);
        let u: Vec<f64> = (0..DRAWS).map(|_| draw_beta(1.0, 1.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&u).0 - 0.5).abs() < 0.01);
        let b: Vec<f64> = (0..DRAWS).map(|_| draw_beta(2.0, 1.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&b).0 - 2.0 / 3.0).abs() < 0.01);
        let xs: Vec<f64> = (0..5_000).map(|_| draw_beta(1.0, 3.0, &mut rng).unwrap()).collect();
        let p = ks_p_value(&xs, |x| 1.0 - (1.0 - x).powi(3));
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = RngHandle::new(15, 0);
        for _ in 0..1000 {
            assert_eq!(draw_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        let ones = (0..DRAWS)
            .filter(|_| draw_categorical(&[1.0, 1.0], &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / DRAWS as f64 - 0.5).abs() < 0.01);
        let mut counts = [0usize; 3];
        for _ in 0..DRAWS {
            counts[draw_categorical(&[2.0, 3.0, 5.0], &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.3, 0.5]) {
            assert!((*c as f64 / DRAWS as f64 - p).abs() < 0.01);
        }
        assert!(draw_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(draw_categorical(&[1.0, -0.5], &mut rng).is_err());
    }

    #[test]
    fn poisson_and_bernoulli() {
        let mut rng = RngHandle::new(16, 0);
        let xs: Vec<f64> = (0..DRAWS)
            .map(|_| draw_poisson(3.0, &mut rng).unwrap() as f64)
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 3.0).abs() < 0.05 && (v - 3.0).abs() < 0.05, "{m} {v}");
        for _ in 0..1000 {
            assert_eq!(draw_bernoulli(0.0, &mut rng).unwrap(), 0);
        }
        assert_eq!(draw_poisson(0.0, &mut rng).unwrap(), 0);
        assert!(draw_poisson(-1.0, &mut rng).is_err());
        assert!(draw_bernoulli(1.5, &mut rng).is_err());

        // Frequencies at λ = 1 against the pmf; tail pooled into the last bin.
        let bins = 6;
        let mut observed = vec![0.0; bins];
        let n = 20_000;
        for _ in 0..n {
            let x = draw_poisson(1.0, &mut rng).unwrap() as usize;
            observed[x.min(bins - 1)] += 1.0;
        }
        let mut expected: Vec<f64> = (0..bins - 1)
            .map(|x| n as f64 * poisson_log_pmf(x as u32, 1.0).unwrap().exp())
            .collect();
        expected.push(n as f64 - expected.iter().sum::<f64>());
        let p = chi_square_p_value(&observed, &expected);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn stick_breaking() {
        let mut rng = RngHandle::new(17, 0);
        let (w, r) = stick_break(1.0, 0, &mut rng).unwrap();
        assert!(w.is_empty() && r == 1.0);
        for count in [1, 5, 40] {
            let (w, r) = stick_break(2.5, count, &mut rng).unwrap();
            assert!((w.iter().sum::<f64>() + r - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&b| b > 0.0));
        }
        let firsts: Vec<f64> = (0..DRAWS)
            .map(|_| stick_break(1.0, 1, &mut rng).unwrap().0[0])
            .collect();
        assert!((mean_var(&firsts).0 - 0.5).abs() < 0.01);
        assert!(stick_break(0.0, 3, &mut rng).is_err());
    }

    #[test]
    fn dirichlet_tiny_concentrations_stay_positive() {
        let mut rng = RngHandle::new(18, 0);
        for _ in 0..200 {
            let w = draw_dirichlet(&[1e-6, 2.0, 1e-9, 0.0], &mut rng).unwrap();
            assert!(w[0] > 0.0 && w[1] > 0.0 && w[2] > 0.0 && w[3] == 0.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(draw_dirichlet(&[0.0, 0.0], &mut rng).is_err());
    }
}
