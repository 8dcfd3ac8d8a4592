//! On-disk formats for fits: the run log, the JSON-lines trace, the point
//! estimate, and the CSV exports (block-rate heatmap, membership timeline).
//!
//! All indices on disk are 1-based. Every file written here carries the
//! chain seed and the config digest; CSV exports carry them in a leading
//! `#` comment line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::normalized_log_likelihood;
use crate::error::{Error, Result};
use crate::model::{ClusterState, DynamicsState, Hyperparams, ModelKind, RateMatrix};
use crate::sampler::{ChainResult, SweepConfig, SweepRecord};
use crate::tensor::CountTensor;

/// Everything needed to replay a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub data: PathBuf,
    pub steps: usize,
    pub objects: usize,
    pub include_diagonal: bool,
    pub model: ModelKind,
    pub seed: u64,
    pub stream: u64,
    pub config_digest: String,
    pub sweep: SweepConfig,
    pub hyperparams: Hyperparams,
    /// Which time step this run fitted, for per-step static fits (1-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl RunLog {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// One trace line: a sweep snapshot with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub sweep: usize,
    pub seed: u64,
    pub stream: u64,
    pub config_digest: String,
    pub model: ModelKind,
    pub k: usize,
    pub log_likelihood: f64,
    /// `z[t][i]`, 1-based labels.
    pub z: Vec<Vec<usize>>,
    pub lambda: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Cells `(t, i, j)` assigned to the structural-zero component, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structural_zeros: Option<Vec<[usize; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_w: Option<f64>,
}

impl TraceLine {
    pub fn from_record(rec: &SweepRecord, result: &ChainResult, x: &CountTensor) -> Self {
        let n = x.objects();
        TraceLine {
            sweep: rec.sweep,
            seed: result.trace.seed,
            stream: result.trace.stream,
            config_digest: result.trace.config_digest.clone(),
            model: result.trace.model,
            k: rec.k,
            log_likelihood: rec.log_likelihood,
            z: rec.z.to_one_based(),
            lambda: rec.lambda.rows(),
            beta: rec.dynamics.beta.clone(),
            initial: rec.dynamics.initial.clone(),
            transitions: rec.dynamics.transitions.clone(),
            structural_zeros: rec.structural_zeros.as_ref().map(|cells| {
                cells
                    .iter()
                    .map(|&c| [c / (n * n) + 1, (c / n) % n + 1, c % n + 1])
                    .collect()
            }),
            mean_w: rec.mean_w,
        }
    }

    pub fn assignments(&self) -> Result<ClusterState> {
        ClusterState::from_one_based(&self.z)
    }

    pub fn rates(&self) -> Result<RateMatrix> {
        RateMatrix::from_rows(&self.lambda)
    }

    pub fn dynamics(&self) -> DynamicsState {
        DynamicsState {
            beta: self.beta.clone(),
            initial: self.initial.clone(),
            transitions: self.transitions.clone(),
        }
    }

    /// Per-cell Poisson indicators for a tensor of `steps × n × n`, or `None`
    /// when the line carries no zero-inflation state.
    pub fn indicators(&self, steps: usize, n: usize) -> Result<Option<Vec<u8>>> {
        let Some(zeros) = &self.structural_zeros else {
            return Ok(None);
        };
        let mut r = vec![1u8; steps * n * n];
        for &[t, i, j] in zeros {
            if t == 0 || i == 0 || j == 0 || t > steps || i > n || j > n {
                return Err(Error::StateInconsistency(format!(
                    "structural zero ({t}, {i}, {j}) outside the tensor"
                )));
            }
            r[((t - 1) * n + (i - 1)) * n + (j - 1)] = 0;
        }
        Ok(Some(r))
    }
}

/// Write the trace of `result` as JSON lines, one sweep per line.
pub fn write_trace(path: &Path, result: &ChainResult, x: &CountTensor) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in &result.trace.records {
        serde_json::to_writer(&mut out, &TraceLine::from_record(rec, result, x))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a JSON-lines trace. A line that does not parse is reported with its
/// 1-based line number.
pub fn read_trace(path: &Path) -> Result<Vec<TraceLine>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: format!("corrupt trace line: {e}"),
        })?;
        lines.push(parsed);
    }
    Ok(lines)
}

/// Summary of the zero-inflation state at the point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipSummary {
    pub mean_w: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub structural_zero_cells: usize,
    /// Share of zero-valued cells assigned to the structural-zero component.
    pub structural_share_of_zeros: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimateFile {
    pub seed: u64,
    pub stream: u64,
    pub config_digest: String,
    pub model: ModelKind,
    pub sweep: usize,
    pub log_likelihood: f64,
    pub normalized_log_likelihood: f64,
    pub k: usize,
    pub z: Vec<Vec<usize>>,
    pub lambda: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<ZipSummary>,
}

impl PointEstimateFile {
    pub fn new(result: &ChainResult, x: &CountTensor) -> Result<Self> {
        let est = &result.estimate;
        let st = &est.state;
        let zip = st.zip.as_ref().map(|zip| {
            let zeros = x.cells().filter(|c| c.3 == 0).count();
            let structural = zip.r.iter().filter(|&&r| r == 0).count();
            let n = zip.w.len() as f64;
            ZipSummary {
                mean_w: zip.w.iter().sum::<f64>() / n,
                min_w: zip.w.iter().copied().fold(f64::INFINITY, f64::min),
                max_w: zip.w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                structural_zero_cells: structural,
                structural_share_of_zeros: if zeros == 0 {
                    0.0
                } else {
                    structural as f64 / zeros as f64
                },
            }
        });
        Ok(PointEstimateFile {
            seed: result.trace.seed,
            stream: result.trace.stream,
            config_digest: result.trace.config_digest.clone(),
            model: st.model,
            sweep: est.sweep,
            log_likelihood: est.log_likelihood,
            normalized_log_likelihood: normalized_log_likelihood(x, &st.z, &st.emission(), st.model)?,
            k: st.z.k(),
            z: st.z.to_one_based(),
            lambda: st.lambda.rows(),
            zip,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn assignments(&self) -> Result<ClusterState> {
        ClusterState::from_one_based(&self.z)
    }
}

fn provenance_line(seed: u64, digest: &str) -> String {
    format!("# seed={seed} config_digest={digest}\n")
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn schema_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Block-rate matrix as CSV: `row,col_1,...,col_K`, one row per cluster.
pub fn write_lambda_heatmap(path: &Path, lambda: &RateMatrix, seed: u64, digest: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(provenance_line(seed, digest).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let k = lambda.k();
    let mut header = vec!["row".to_string()];
    header.extend((1..=k).map(|c| format!("col_{c}")));
    w.write_record(&header)?;
    for (r, row) in lambda.rows().iter().enumerate() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Check a heatmap export against its schema and return the rate matrix.
pub fn validate_lambda_heatmap(path: &Path) -> Result<RateMatrix> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers()?.clone();
    let k = header.len().saturating_sub(1);
    if k == 0 || &header[0] != "row" {
        return Err(schema_error(path, 1, "header must be `row,col_1,...,col_K`"));
    }
    for (c, name) in header.iter().skip(1).enumerate() {
        if name != format!("col_{}", c + 1) {
            return Err(schema_error(
                path,
                1,
                format!("column {} should be `col_{}`", c + 2, c + 1),
            ));
        }
    }
    let mut rows = Vec::with_capacity(k);
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(idx + 2, |p| p.line() as usize);
        if rec.get(0) != Some((idx + 1).to_string().as_str()) {
            return Err(schema_error(path, line, format!("expected row index {}", idx + 1)));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| schema_error(path, line, "rates must be positive numbers"))?;
        rows.push(row);
    }
    if rows.len() != k {
        return Err(schema_error(
            path,
            1,
            format!("expected {k} rows, found {}", rows.len()),
        ));
    }
    RateMatrix::from_rows(&rows)
}

/// Membership timeline as CSV: `object,t,label`, all 1-based, ordered by
/// object then time.
pub fn write_timeline(path: &Path, z: &ClusterState, seed: u64, digest: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(provenance_line(seed, digest).as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["object", "t", "label"])?;
    for i in 0..z.objects() {
        for t in 0..z.steps() {
            w.write_record(&[(i + 1).to_string(), (t + 1).to_string(), (z.get(t, i) + 1).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Check a timeline export against its schema: every `(object, t)` pair
/// appears exactly once and labels are positive. Returns the assignments.
pub fn validate_timeline(path: &Path) -> Result<ClusterState> {
    let mut rdr = csv_reader(path)?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["object", "t", "label"] {
        return Err(schema_error(path, 1, "header must be `object,t,label`"));
    }
    let mut entries = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(idx + 2, |p| p.line() as usize);
        let fields = rec
            .iter()
            .map(|v| v.parse::<usize>().ok().filter(|&v| v > 0))
            .collect::<Option<Vec<usize>>>()
            .filter(|f| f.len() == 3)
            .ok_or_else(|| schema_error(path, line, "expected three positive integers"))?;
        entries.push((fields[0], fields[1], fields[2], line));
    }
    let objects = entries.iter().map(|e| e.0).max().unwrap_or(0);
    let steps = entries.iter().map(|e| e.1).max().unwrap_or(0);
    if objects == 0 || entries.len() != objects * steps {
        return Err(schema_error(
            path,
            1,
            format!("expected one row per (object, t); found {} rows", entries.len()),
        ));
    }
    let mut rows = vec![vec![0usize; objects]; steps];
    for (i, t, label, line) in entries {
        if rows[t - 1][i - 1] != 0 {
            return Err(schema_error(
                path,
                line,
                format!("duplicate entry for object {i} at t={t}"),
            ));
        }
        rows[t - 1][i - 1] = label;
    }
    ClusterState::from_one_based(&rows)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use crate::sampler::run_chain;

    fn small_fit(model: ModelKind) -> (CountTensor, ChainResult) {
        let counts = (0..18).map(|v| (v * 5 % 7) as u32 * (v % 3 != 0) as u32).collect();
        let x = CountTensor::from_vec(2, 3, counts).unwrap();
        let cfg = SweepConfig {
            model,
            sweeps: 6,
            burn_in: 2,
            ..Default::default()
        };
        let fit = run_chain(&x, &cfg, &Hyperparams::default(), &mut RngHandle::new(9, 1)).unwrap();
        (x, fit)
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, fit) = small_fit(ModelKind::Dzipirm);
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &fit, &x).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 6);
        let lines = read_trace(&path).unwrap();
        for (line, rec) in lines.iter().zip(&fit.trace.records) {
            assert_eq!(line.seed, 9);
            assert_eq!(line.stream, 1);
            assert_eq!(line.config_digest, fit.trace.config_digest);
            assert_eq!(line.assignments().unwrap(), rec.z);
            assert_eq!(line.rates().unwrap(), rec.lambda);
            assert_eq!(line.dynamics(), rec.dynamics);
            let r = line.indicators(2, 3).unwrap().unwrap();
            let zeros: Vec<usize> = r.iter().enumerate().filter(|(_, &v)| v == 0).map(|(i, _)| i).collect();
            assert_eq!(Some(zeros), rec.structural_zeros);
        }
    }

    #[test]
    fn corrupt_trace_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let (x, fit) = small_fit(ModelKind::Dpirm);
        let path = dir.path().join("trace.jsonl");
        write_trace(&path, &fit, &x).unwrap();
        let mut text: Vec<String> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        text[3].truncate(20);
        std::fs::write(&path, text.join("\n")).unwrap();
        match read_trace(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn exports_validate() {
        let dir = tempfile::tempdir().unwrap();
        let (x, fit) = small_fit(ModelKind::Dpirm);
        let est = PointEstimateFile::new(&fit, &x).unwrap();
        let heat = dir.path().join("lambda.csv");
        let timeline = dir.path().join("timeline.csv");
        let st = &fit.estimate.state;
        write_lambda_heatmap(&heat, &st.lambda, est.seed, &est.config_digest).unwrap();
        write_timeline(&timeline, &st.z, est.seed, &est.config_digest).unwrap();
        assert_eq!(validate_lambda_heatmap(&heat).unwrap(), st.lambda);
        assert_eq!(validate_timeline(&timeline).unwrap().labels(), st.z.labels());
        let head = std::fs::read_to_string(&heat).unwrap();
        assert!(head.starts_with(&format!("# seed=9 config_digest={}", est.config_digest)));
    }

    #[test]
    fn schema_violations_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "row,col_1,col_3\n1,1.0,2.0\n2,1.0,2.0\n").unwrap();
        assert!(validate_lambda_heatmap(&p).is_err());
        std::fs::write(&p, "row,col_1\n1,-1.0\n").unwrap();
        assert!(validate_lambda_heatmap(&p).is_err());
        std::fs::write(&p, "object,t,label\n1,1,1\n1,1,2\n").unwrap();
        assert!(validate_timeline(&p).is_err());
        std::fs::write(&p, "object,t,label\n1,1,1\n2,1,0\n").unwrap();
        assert!(validate_timeline(&p).is_err());
        std::fs::write(&p, "object,t,label\n1,1,1\n2,2,1\n").unwrap();
        assert!(validate_timeline(&p).is_err());
    }

    #[test]
    fn point_estimate_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, fit) = small_fit(ModelKind::Dzipirm);
        let est = PointEstimateFile::new(&fit, &x).unwrap();
        let zip = est.zip.as_ref().unwrap();
        assert!(zip.min_w <= zip.mean_w && zip.mean_w <= zip.max_w);
        assert!((0.0..=1.0).contains(&zip.structural_share_of_zeros));
        let path = dir.path().join("estimate.json");
        est.save(&path).unwrap();
        assert_eq!(PointEstimateFile::load(&path).unwrap(), est);
        assert_eq!(est.assignments().unwrap(), fit.estimate.state.z);
    }
}
