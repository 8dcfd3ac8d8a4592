//! `diagnose`: re-check every sweep of a saved trace.

use std::path::{Path, PathBuf};

use tvbic::diagnostics::{diagnose_trace, DiagnosticsReport};
use tvbic::io::{read_trace, RunLog};
use tvbic::{Error, Result};

use crate::fit::load_tensor;

/// Locate the data a run was fitted to: an explicit override, the recorded
/// path, or the recorded path relative to the run log's directory.
fn resolve_data(run: &RunLog, run_path: &Path, data: Option<&Path>) -> Result<PathBuf> {
    if let Some(d) = data {
        return Ok(d.to_path_buf());
    }
    if run.data.is_file() {
        return Ok(run.data.clone());
    }
    let beside = run_path.parent().unwrap_or(Path::new(".")).join(&run.data);
    if beside.is_file() {
        return Ok(beside);
    }
    Err(Error::Validation(format!(
        "data file {} recorded in {} not found; pass --data",
        run.data.display(),
        run_path.display()
    )))
}

pub fn diagnose(trace: &Path, run_path: Option<&Path>, data: Option<&Path>) -> Result<DiagnosticsReport> {
    let run_path = run_path.map_or_else(
        || trace.parent().unwrap_or(Path::new(".")).join("run.json"),
        Path::to_path_buf,
    );
    if !run_path.is_file() {
        return Err(Error::Validation(format!("run log {} not found", run_path.display())));
    }
    let run = RunLog::load(&run_path)?;
    let mut x = load_tensor(&resolve_data(&run, &run_path, data)?, run.include_diagonal)?;
    if (x.steps(), x.objects()) != (run.steps, run.objects) {
        return Err(Error::Validation(format!(
            "data is {}×{}, run log expects {}×{}",
            x.steps(),
            x.objects(),
            run.steps,
            run.objects
        )));
    }
    if let Some(step) = run.step {
        if step == 0 || step > x.steps() {
            return Err(Error::Validation(format!("run log names step {step} of {}", x.steps())));
        }
        x = x.slice(step - 1);
    }
    let lines = read_trace(trace)?;
    for (idx, line) in lines.iter().enumerate() {
        if line.config_digest != run.config_digest || line.seed != run.seed {
            return Err(Error::Validation(format!(
                "trace line {} comes from a different run (seed {}, digest {})",
                idx + 1,
                line.seed,
                line.config_digest
            )));
        }
    }
    diagnose_trace(&x, &lines, &run.hyperparams)
}
