//! Joint-distribution checks of the full sweep. Forward draws of
//! (parameters, data) from the prior are compared with a chain that
//! alternates one sweep with redrawing the data from the likelihood. If the
//! sweep leaves the posterior invariant, both sample the prior, so every
//! test function must have the same mean under both.

use tvbic::model::{ClusterState, Hyperparams, ModelKind};
use tvbic::rng::{
    draw_bernoulli, draw_beta, draw_categorical, draw_dirichlet, draw_gamma, draw_poisson, stick_break, RngHandle,
};
use tvbic::sampler::{init_state, sweep, ChainState, SweepConfig, TruncationPolicy};
use tvbic::tensor::CountTensor;

/// Atoms kept from the stick when simulating forward.
const ATOMS: usize = 200;

/// Label-invariant summaries of one draw.
fn summaries(z: &ClusterState, lambda: impl Fn(usize, usize) -> f64, beta: &[f64], r: Option<&[u8]>) -> Vec<f64> {
    let steps = z.steps();
    let mut out = vec![
        lambda(z.get(0, 0), z.get(0, 1)),
        f64::from(u8::from(z.get(0, 0) == z.get(0, 1))),
        beta[z.get(0, 0)],
    ];
    if steps > 1 {
        out.push(f64::from(u8::from(z.get(0, 0) == z.get(1, 0))));
    }
    if let Some(r) = r {
        out.push(r.iter().map(|&v| f64::from(v)).sum::<f64>() / r.len() as f64);
    }
    out
}

struct Forward {
    z: ClusterState,
    lambda: Vec<f64>,
    beta: Vec<f64>,
    r: Vec<u8>,
}

/// One draw from the truncated prior.
fn forward(model: ModelKind, steps: usize, n: usize, hp: &Hyperparams, rng: &mut RngHandle) -> Forward {
    let (mut beta, residual) = stick_break(hp.gamma, ATOMS, rng).unwrap();
    let last = beta.len() - 1;
    beta[last] += residual;
    let mut labels = vec![0usize; steps * n];
    if model == ModelKind::Pirm {
        for l in labels.iter_mut() {
            *l = draw_categorical(&beta, rng).unwrap();
        }
    } else {
        let conc: Vec<f64> = beta.iter().map(|b| hp.alpha0 * b).collect();
        let initial = draw_dirichlet(&conc, rng).unwrap();
        for i in 0..n {
            labels[i] = draw_categorical(&initial, rng).unwrap();
        }
        for t in 1..steps {
            // Rows are drawn lazily: only those leaving an occupied cluster
            // matter, and each is independent of the others.
            let mut rows: std::collections::HashMap<usize, Vec<f64>> = Default::default();
            for i in 0..n {
                let prev = labels[(t - 1) * n + i];
                let row = rows.entry(prev).or_insert_with(|| {
                    let mut c = conc.clone();
                    c[prev] += hp.kappa;
                    draw_dirichlet(&c, rng).unwrap()
                });
                labels[t * n + i] = draw_categorical(row, rng).unwrap();
            }
        }
    }
    let z = ClusterState::new(steps, n, labels, ATOMS).unwrap();
    let lambda = (0..ATOMS * ATOMS)
        .map(|_| draw_gamma(hp.a, hp.b, rng).unwrap())
        .collect();
    let cells = steps * n * n;
    let r = if model.is_zero_inflated() {
        (0..cells)
            .map(|_| draw_bernoulli(draw_beta(hp.c, hp.d, rng).unwrap(), rng).unwrap())
            .collect()
    } else {
        vec![1; cells]
    };
    Forward { z, lambda, beta, r }
}

/// Redraw the counts given the chain's current parameters.
fn regenerate(x: &mut CountTensor, state: &ChainState, rng: &mut RngHandle) {
    let (steps, n, _) = x.dims();
    for t in 0..steps {
        for i in 0..n {
            for j in 0..n {
                let idx = x.index(t, i, j);
                let poisson = state.zip.as_ref().is_none_or(|zip| zip.r[idx] == 1);
                let c = if poisson {
                    draw_poisson(state.lambda.get(state.z.get(t, i), state.z.get(t, j)), rng).unwrap()
                } else {
                    0
                };
                x.set(t, i, j, c);
            }
        }
    }
}

/// Mean and batch-means standard error.
fn mean_mcse(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let bm: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

fn check(model: ModelKind, steps: usize, n: usize, seed: u64) {
    let hp = Hyperparams::default();
    let draws = 40_000;
    let mut rng = RngHandle::new(seed, 0);

    let mut fwd: Vec<Vec<f64>> = Vec::new();
    for _ in 0..draws {
        let f = forward(model, steps, n, &hp, &mut rng);
        let r = model.is_zero_inflated().then_some(f.r.as_slice());
        fwd.push(summaries(&f.z, |a, b| f.lambda[a * ATOMS + b], &f.beta, r));
    }

    let cfg = SweepConfig {
        model,
        truncation_cap: 200,
        truncation_policy: TruncationPolicy::Error,
        ..Default::default()
    };
    let f = forward(model, steps, n, &hp, &mut rng);
    let mut x = CountTensor::zeros(steps, n).unwrap();
    for t in 0..steps {
        for i in 0..n {
            for j in 0..n {
                let rate = f.lambda[f.z.get(t, i) * ATOMS + f.z.get(t, j)];
                let c = if f.r[x.index(t, i, j)] == 1 {
                    draw_poisson(rate, &mut rng).unwrap()
                } else {
                    0
                };
                x.set(t, i, j, c);
            }
        }
    }
    let mut state = init_state(&x, &cfg, &hp, &mut rng).unwrap();
    let burn = 2_000;
    let mut succ: Vec<Vec<f64>> = Vec::new();
    for it in 0..burn + draws {
        sweep(&x, &mut state, &hp, &cfg, &mut rng).unwrap();
        if it >= burn {
            let r = state.zip.as_ref().map(|zip| zip.r.as_slice());
            succ.push(summaries(
                &state.z,
                |a, b| state.lambda.get(a, b),
                &state.dynamics.beta,
                r,
            ));
        }
        regenerate(&mut x, &state, &mut rng);
    }

    let names = [
        "rate of cell (1,1,2)",
        "co-cluster (1,2)",
        "weight of cluster of (1,1)",
        "persistence",
        "mean r",
    ];
    let mut report = Vec::new();
    let mut worst: f64 = 0.0;
    for f in 0..fwd[0].len() {
        let name = if f >= 3 && steps == 1 { names[4] } else { names[f] };
        let a: Vec<f64> = fwd.iter().map(|v| v[f]).collect();
        let b: Vec<f64> = succ.iter().map(|v| v[f]).collect();
        let (ma, sa) = mean_mcse(&a, 100);
        let (mb, sb) = mean_mcse(&b, 100);
        let score = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
        worst = worst.max(score);
        report.push(format!(
            "{name}: forward {ma:.4} ± {sa:.4}, chain {mb:.4} ± {sb:.4}, z = {score:.2}"
        ));
    }
    eprintln!("{model}:\n{}", report.join("\n"));
    assert!(worst < 3.0, "{model}: worst z {worst:.2}");
}

#[test]
fn dynamic_model_samples_the_prior() {
    check(ModelKind::Dpirm, 2, 3, 11);
}

#[test]
fn zero_inflated_model_samples_the_prior() {
    check(ModelKind::Dzipirm, 2, 3, 12);
}

#[test]
fn static_model_samples_the_prior() {
    check(ModelKind::Pirm, 1, 4, 13);
}
