//! `evaluate`: score saved fits of a suite against its ground truth.

use std::path::Path;

use tvbic::eval::{compare_models, time_averaged_ari, time_averaged_ri, DatasetResult, EvalReport, Expected};
use tvbic::experiment::score_static_parts;
use tvbic::io::PointEstimateFile;
use tvbic::model::{ClusterState, ModelKind};
use tvbic::synth::{Manifest, Truth};
use tvbic::{Error, Result};

use crate::config::RunConfig;
use crate::fit::{load_tensor, suite_fit_dir};

fn mismatch(dir: &Path, what: impl std::fmt::Display) -> Error {
    Error::Validation(format!("fit in {} does not match the manifest: {what}", dir.display()))
}

fn check_shape(dir: &Path, z: &ClusterState, steps: usize, objects: usize) -> Result<()> {
    if z.steps() != steps || z.objects() != objects {
        return Err(mismatch(
            dir,
            format!("labels are {}×{}, data is {steps}×{objects}", z.steps(), z.objects()),
        ));
    }
    Ok(())
}

/// Score one dataset's fit of `model`, or `None` when the fit is absent.
fn score_one(
    dir: &Path,
    model: ModelKind,
    x: &tvbic::tensor::CountTensor,
    truth: &ClusterState,
) -> Result<Option<(f64, f64, f64, usize)>> {
    if model == ModelKind::Pirm {
        let mut labels = Vec::new();
        let mut lls = Vec::new();
        for t in 0..x.steps() {
            let path = dir.join(format!("step{}", t + 1)).join("estimate.json");
            if !path.is_file() {
                return Ok(None);
            }
            let est = PointEstimateFile::load(&path)?;
            let z = est.assignments()?;
            check_shape(dir, &z, 1, x.objects())?;
            labels.push(z);
            lls.push(est.log_likelihood);
        }
        let s = score_static_parts(x, truth, &labels, &lls)?;
        Ok(Some((s.ri, s.ari, s.normalized_log_likelihood, s.clusters)))
    } else {
        let path = dir.join("estimate.json");
        if !path.is_file() {
            return Ok(None);
        }
        let est = PointEstimateFile::load(&path)?;
        if est.model != model {
            return Err(mismatch(dir, format!("estimate is for {}", est.model)));
        }
        let z = est.assignments()?;
        check_shape(dir, &z, x.steps(), x.objects())?;
        Ok(Some((
            time_averaged_ri(truth, &z)?,
            time_averaged_ari(truth, &z)?,
            est.normalized_log_likelihood,
            z.k(),
        )))
    }
}

pub fn evaluate(manifest_path: &Path, fits: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut expected = Vec::new();
    let mut rows = Vec::new();
    for entry in &manifest.datasets {
        let x = load_tensor(&root.join(&entry.data), cfg.include_diagonal)?;
        let truth = Truth::load(&root.join(&entry.truth))?.assignments()?;
        for &model in &cfg.models {
            expected.push(Expected {
                movement: entry.movement,
                zero_ratio: entry.zero_ratio,
                replicate: entry.replicate,
                model,
            });
            let dir = suite_fit_dir(fits, entry.movement, entry.zero_ratio, entry.replicate, model);
            if let Some((ri, ari, ll, clusters)) = score_one(&dir, model, &x, &truth)? {
                rows.push(DatasetResult {
                    movement: entry.movement,
                    zero_ratio: entry.zero_ratio,
                    replicate: entry.replicate,
                    model,
                    ri,
                    ari,
                    normalized_log_likelihood: ll,
                    clusters,
                });
            }
        }
    }
    Ok(compare_models(&expected, rows))
}
