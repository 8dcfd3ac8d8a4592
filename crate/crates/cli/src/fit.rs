//! `fit`: run chains on one tensor or on every dataset of a suite.
//!
//! Layout of one fit directory:
//!
//! ```text
//! run.json  trace.jsonl  estimate.json  lambda.csv  timeline.csv
//! ```
//!
//! With several chains each chain gets `chain<c>/` and the top level holds
//! the estimate of the chain with the highest log-likelihood. The static
//! model writes one such set per time step under `step<t>/`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tvbic::io::{write_json, write_lambda_heatmap, write_timeline, write_trace, PointEstimateFile, RunLog};
use tvbic::model::ModelKind;
use tvbic::rng::{derive_seed, RngHandle};
use tvbic::sampler::{config_digest, pirm_fit_all, run_chain, ChainResult, SweepConfig};
use tvbic::synth::{cell_name, Manifest};
use tvbic::tensor::CountTensor;
use tvbic::{Error, Result};

use crate::config::RunConfig;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Validation(format!("cannot create {}: {e}", dir.display())))
}

/// Write every artifact of one chain into `dir`.
fn write_chain(dir: &Path, x: &CountTensor, fit: &ChainResult, run: &RunLog) -> Result<PointEstimateFile> {
    create_dir(dir)?;
    run.save(&dir.join("run.json"))?;
    write_trace(&dir.join("trace.jsonl"), fit, x)?;
    let est = PointEstimateFile::new(fit, x)?;
    write_outputs(dir, &est)?;
    Ok(est)
}

fn write_outputs(dir: &Path, est: &PointEstimateFile) -> Result<()> {
    est.save(&dir.join("estimate.json"))?;
    let lambda = tvbic::model::RateMatrix::from_rows(&est.lambda)?;
    write_lambda_heatmap(&dir.join("lambda.csv"), &lambda, est.seed, &est.config_digest)?;
    write_timeline(
        &dir.join("timeline.csv"),
        &est.assignments()?,
        est.seed,
        &est.config_digest,
    )
}

fn chain_dir(out: &Path, chain: usize, chains: usize) -> PathBuf {
    if chains == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("chain{}", chain + 1))
    }
}

/// Fit `model` to `x` and write the results under `out`. Returns the
/// per-step (static model) or single estimate that won across chains.
pub fn fit_tensor(
    x: &CountTensor,
    data: &Path,
    model: ModelKind,
    cfg: &RunConfig,
    seed: u64,
    out: &Path,
) -> Result<Vec<PointEstimateFile>> {
    let sweep = SweepConfig { model, ..cfg.sweep };
    let digest = config_digest(&sweep, &cfg.hyperparams, x.include_diagonal());
    let data = fs::canonicalize(data).unwrap_or_else(|_| data.to_path_buf());
    let run = |stream: u64, seed: u64, step: Option<usize>| RunLog {
        data: data.clone(),
        steps: x.steps(),
        objects: x.objects(),
        include_diagonal: x.include_diagonal(),
        model,
        seed,
        stream,
        config_digest: digest.clone(),
        sweep,
        hyperparams: cfg.hyperparams,
        step,
    };

    let chains: Vec<Vec<PointEstimateFile>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let dir = chain_dir(out, c, cfg.chains);
            let stream = c as u64;
            if model == ModelKind::Pirm {
                let fits = pirm_fit_all(x, &sweep, &cfg.hyperparams, seed, stream)?;
                fits.iter()
                    .enumerate()
                    .map(|(t, fit)| {
                        let step_seed = derive_seed(seed, t as u64);
                        write_chain(
                            &dir.join(format!("step{}", t + 1)),
                            &x.slice(t),
                            fit,
                            &run(stream, step_seed, Some(t + 1)),
                        )
                    })
                    .collect()
            } else {
                let fit = run_chain(x, &sweep, &cfg.hyperparams, &mut RngHandle::new(seed, stream))?;
                Ok(vec![write_chain(&dir, x, &fit, &run(stream, seed, None))?])
            }
        })
        .collect::<Result<_>>()?;

    let parts = chains[0].len();
    let best: Vec<PointEstimateFile> = (0..parts)
        .map(|p| {
            chains
                .iter()
                .map(|c| &c[p])
                .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
                .expect("at least one chain")
                .clone()
        })
        .collect();
    if cfg.chains > 1 {
        for (p, est) in best.iter().enumerate() {
            let dir = if model == ModelKind::Pirm {
                out.join(format!("step{}", p + 1))
            } else {
                out.to_path_buf()
            };
            create_dir(&dir)?;
            write_outputs(&dir, est)?;
        }
    }
    Ok(best)
}

pub fn load_tensor(path: &Path, include_diagonal: bool) -> Result<CountTensor> {
    Ok(CountTensor::load(path)?.with_diagonal(include_diagonal))
}

/// Fit directory of one suite dataset and model.
pub fn suite_fit_dir(fits: &Path, movement: f64, zero_ratio: f64, replicate: usize, model: ModelKind) -> PathBuf {
    fits.join(cell_name(movement, zero_ratio))
        .join(format!("rep{replicate:03}"))
        .join(model.as_str())
}

/// Fit every requested model to every dataset in `manifest`.
pub fn fit_suite(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<usize> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let jobs: Vec<_> = manifest
        .datasets
        .iter()
        .flat_map(|e| cfg.models.iter().map(move |&m| (e, m)))
        .collect();
    jobs.par_iter().try_for_each(|&(entry, model)| -> Result<()> {
        let data = root.join(&entry.data);
        let x = load_tensor(&data, cfg.include_diagonal)?;
        let seed = derive_seed(derive_seed(cfg.seed, entry.seed), model as u64);
        let dir = suite_fit_dir(out, entry.movement, entry.zero_ratio, entry.replicate, model);
        fit_tensor(&x, &data, model, cfg, seed, &dir)?;
        log::info!("fitted {} with {model}", entry.data.display());
        Ok(())
    })?;
    write_json(&out.join("fit-config.json"), cfg)?;
    Ok(jobs.len())
}
