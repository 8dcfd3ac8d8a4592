//! `tvbic`: generate synthetic suites, fit models, evaluate fits and check
//! saved traces.
//!
//! Exit status: 0 on success, 1 for invalid input or configuration, 2 when a
//! run fails or a check does not pass.

mod config;
mod diagnose;
mod evaluate;
mod fit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvbic::io::write_json;
use tvbic::synth::generate_suite;
use tvbic::{Error, Result};

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tvbic",
    version,
    about = "Bi-clustering of time-varying relational count data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset suite and its manifest.
    Generate {
        /// JSON run configuration; its `suite` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Datasets per (movement, zero ratio) cell.
        #[arg(long)]
        replicates: Option<usize>,
        /// Suite seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit a model to one tensor (`--data`) or every dataset of a suite
    /// (`--manifest`).
    Fit {
        #[command(flatten)]
        flags: Overrides,
        /// Count tensor, long-form CSV or JSON.
        #[arg(long, conflicts_with = "manifest")]
        data: Option<PathBuf>,
        /// Suite manifest written by `generate`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score suite fits against the ground truth.
    Evaluate {
        #[command(flatten)]
        flags: Overrides,
        /// Suite manifest written by `generate`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory written by `fit --manifest`.
        #[arg(long)]
        fits: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every sweep of a trace.
    Diagnose {
        /// `trace.jsonl` written by `fit`.
        #[arg(long)]
        trace: PathBuf,
        /// Run log; defaults to `run.json` beside the trace.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Data file, when the recorded path has moved.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Success,
    CheckFailed,
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::Validation(format!("--{flag} is required (or set `{flag}` in the config file)")))
}

fn init_pool(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Generate {
            config,
            out,
            replicates,
            seed,
            jobs,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(r) = replicates {
                cfg.suite.replicates = r;
            }
            if let Some(s) = seed {
                cfg.suite.seed = s;
            }
            let out = required(out.or(cfg.out.clone()), "out")?;
            init_pool(jobs.or(cfg.jobs));
            let manifest = generate_suite(&cfg.suite, &out)?;
            println!("{}", out.join("manifest.json").display());
            log::info!("wrote {} datasets", manifest.datasets.len());
            Ok(Outcome::Success)
        }
        Command::Fit {
            flags,
            data,
            manifest,
            out,
        } => {
            let mut cfg = RunConfig::resolve(&flags)?;
            if data.is_some() || manifest.is_some() {
                cfg.data = data;
                cfg.manifest = manifest;
            }
            let out = required(out.or(cfg.out.clone()), "out")?;
            cfg.validate()?;
            init_pool(cfg.jobs);
            match (&cfg.data, &cfg.manifest) {
                (Some(data), None) => {
                    let x = fit::load_tensor(data, cfg.include_diagonal)?;
                    let best = fit::fit_tensor(&x, data, cfg.sweep.model, &cfg, cfg.seed, &out)?;
                    for (p, est) in best.iter().enumerate() {
                        let label = if best.len() > 1 {
                            format!("step {}: ", p + 1)
                        } else {
                            String::new()
                        };
                        println!(
                            "{label}K={} log-likelihood {:.3} (per cell {:.4}) at sweep {}",
                            est.k, est.log_likelihood, est.normalized_log_likelihood, est.sweep
                        );
                    }
                    println!("{}", out.display());
                }
                (None, Some(manifest)) => {
                    let jobs = fit::fit_suite(manifest, &cfg, &out)?;
                    println!("{jobs} fits written to {}", out.display());
                }
                _ => return Err(Error::Validation("give exactly one of --data or --manifest".into())),
            }
            Ok(Outcome::Success)
        }
        Command::Evaluate {
            flags,
            manifest,
            fits,
            out,
        } => {
            let mut cfg = RunConfig::resolve(&flags)?;
            if manifest.is_some() {
                cfg.manifest = manifest;
            }
            let manifest = required(cfg.manifest.clone(), "manifest")?;
            cfg.validate()?;
            let report = evaluate::evaluate(&manifest, &fits, &cfg)?;
            if let Some(out) = out.or(cfg.out.clone()) {
                report.write(&out)?;
            }
            print!("{}", report.render_table());
            for m in &report.missing {
                log::warn!("missing fit: {m}");
            }
            if !report.missing.is_empty() {
                eprintln!("{} expected fits missing", report.missing.len());
            }
            Ok(if report.rows.is_empty() {
                Outcome::CheckFailed
            } else {
                Outcome::Success
            })
        }
        Command::Diagnose { trace, run, data, out } => {
            let report = diagnose::diagnose(&trace, run.as_deref(), data.as_deref())?;
            for s in &report.sweeps {
                let status = if s.passed() { "pass" } else { "FAIL" };
                println!("sweep {:>5}  {status}  {}", s.sweep, s.problems.join("; "));
            }
            if let (Some(lo), Some(hi)) = (report.min_alpha, report.max_alpha) {
                println!("alpha range [{lo:.6}, {hi:.6}]");
            }
            println!("{} of {} sweeps failed", report.failures(), report.sweeps.len());
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            Ok(if report.passed() {
                Outcome::Success
            } else {
                Outcome::CheckFailed
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
