//! Observed data: a stack of `T` square relational count matrices.
//!
//! On disk a tensor is either long-form CSV (`t,i,j,count`, 1-based, absent
//! cells are zero) or JSON `{"dims":[T,N,N],"entries":[[t,i,j,c],...]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTensor {
    steps: usize,
    objects: usize,
    counts: Vec<u32>,
    include_diagonal: bool,
}

impl CountTensor {
    pub fn zeros(steps: usize, objects: usize) -> Result<Self> {
        if steps == 0 || objects == 0 {
            return Err(Error::Validation(format!(
                "tensor dims must be positive, got T={steps}, N={objects}"
            )));
        }
        Ok(Self {
            steps,
            objects,
            counts: vec![0; steps * objects * objects],
            include_diagonal: true,
        })
    }

    /// Build from a row-major `(t, i, j)` buffer.
    pub fn from_vec(steps: usize, objects: usize, counts: Vec<u32>) -> Result<Self> {
        let mut x = Self::zeros(steps, objects)?;
        if counts.len() != x.counts.len() {
            return Err(Error::Validation(format!(
                "expected {} counts for dims ({steps},{objects},{objects}), got {}",
                x.counts.len(),
                counts.len()
            )));
        }
        x.counts = counts;
        Ok(x)
    }

    pub fn with_diagonal(mut self, include: bool) -> Self {
        self.include_diagonal = include;
        self
    }

    pub fn set_include_diagonal(&mut self, include: bool) {
        self.include_diagonal = include;
    }

    pub fn include_diagonal(&self) -> bool {
        self.include_diagonal
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    /// `(T, N, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.steps, self.objects, self.objects)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.objects + i) * self.objects + j
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> u32 {
        self.counts[self.index(t, i, j)]
    }

    pub fn set(&mut self, t: usize, i: usize, j: usize, value: u32) {
        let idx = self.index(t, i, j);
        self.counts[idx] = value;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn is_included(&self, i: usize, j: usize) -> bool {
        self.include_diagonal || i != j
    }

    /// Number of cells that enter the likelihood.
    pub fn included_cells(&self) -> usize {
        let n = self.objects;
        let per_step = if self.include_diagonal { n * n } else { n * (n - 1) };
        self.steps * per_step
    }

    /// Iterate `(t, i, j, count)` over cells that enter the likelihood.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize, u32)> + '_ {
        let n = self.objects;
        (0..self.steps).flat_map(move |t| {
            (0..n).flat_map(move |i| {
                (0..n)
                    .filter(move |&j| self.is_included(i, j))
                    .map(move |j| (t, i, j, self.get(t, i, j)))
            })
        })
    }

    /// One time step as a `T = 1` tensor.
    pub fn slice(&self, t: usize) -> CountTensor {
        let n2 = self.objects * self.objects;
        CountTensor {
            steps: 1,
            objects: self.objects,
            counts: self.counts[t * n2..(t + 1) * n2].to_vec(),
            include_diagonal: self.include_diagonal,
        }
    }

    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.counts.iter().filter(|&&c| c == 0).count();
        zeros as f64 / self.counts.len() as f64
    }

    pub fn to_json(&self) -> TensorJson {
        let entries = (0..self.steps)
            .flat_map(|t| (0..self.objects).flat_map(move |i| (0..self.objects).map(move |j| (t, i, j))))
            .filter_map(|(t, i, j)| {
                let c = self.get(t, i, j);
                (c > 0).then_some([t as u64 + 1, i as u64 + 1, j as u64 + 1, c as u64])
            })
            .collect();
        TensorJson {
            dims: [self.steps, self.objects, self.objects],
            entries,
        }
    }

    pub fn from_json(doc: &TensorJson) -> Result<Self> {
        let [steps, rows, cols] = doc.dims;
        if rows != cols {
            return Err(Error::Validation(format!(
                "only square relations are supported, got {rows}x{cols}"
            )));
        }
        let mut x = Self::zeros(steps, rows)?;
        for (k, e) in doc.entries.iter().enumerate() {
            let [t, i, j, c] = *e;
            x.set_checked(t, i, j, c)
                .map_err(|m| Error::Validation(format!("entry {k}: {m}")))?;
        }
        Ok(x)
    }

    fn set_checked(&mut self, t: u64, i: u64, j: u64, c: u64) -> std::result::Result<(), String> {
        let in_range = |v: u64, hi: usize| v >= 1 && v as usize <= hi;
        if !in_range(t, self.steps) || !in_range(i, self.objects) || !in_range(j, self.objects) {
            return Err(format!(
                "index ({t},{i},{j}) outside dims ({},{},{})",
                self.steps, self.objects, self.objects
            ));
        }
        let c = u32::try_from(c).map_err(|_| format!("count {c} does not fit in 32 bits"))?;
        self.set(t as usize - 1, i as usize - 1, j as usize - 1, c);
        Ok(())
    }

    /// Long-form CSV with a `t,i,j,count` header. Only nonzero cells are
    /// written, except that the last cell is always present so the dims can be
    /// recovered on read.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "t,i,j,count")?;
        let (tt, n, _) = self.dims();
        for t in 0..tt {
            for i in 0..n {
                for j in 0..n {
                    let c = self.get(t, i, j);
                    let last = t + 1 == tt && i + 1 == n && j + 1 == n;
                    if c > 0 || last {
                        writeln!(out, "{},{},{},{}", t + 1, i + 1, j + 1, c)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse long-form CSV. Dims are the maximum indices seen unless given.
    pub fn parse_csv(text: &str, origin: &str, dims: Option<(usize, usize)>) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((n, l)) => break (n + 1, l),
                None => return Err(parse_err(1, "empty file, expected header t,i,j,count".into())),
            }
        };
        let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
        if cols != ["t", "i", "j", "count"] {
            return Err(parse_err(
                header.0,
                format!("expected header `t,i,j,count`, found `{}`", header.1.trim()),
            ));
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
            }
            let mut vals = [0u64; 4];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f
                    .parse::<u64>()
                    .map_err(|_| parse_err(line_no, format!("`{f}` is not a nonnegative integer")))?;
            }
            if vals[..3].contains(&0) {
                return Err(parse_err(line_no, "indices are 1-based".into()));
            }
            rows.push((line_no, vals));
        }
        let (steps, objects) = match dims {
            Some(d) => d,
            None => {
                let t = rows.iter().map(|r| r.1[0]).max().unwrap_or(0) as usize;
                let n = rows.iter().map(|r| r.1[1].max(r.1[2])).max().unwrap_or(0) as usize;
                (t, n)
            }
        };
        let mut x = Self::zeros(steps, objects)?;
        for (line_no, [t, i, j, c]) in rows {
            x.set_checked(t, i, j, c).map_err(|m| parse_err(line_no, m))?;
        }
        Ok(x)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string(), None)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Load by extension: `.json` as the JSON form, anything else as CSV.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let doc: TensorJson = serde_json::from_str(&text)?;
            Self::from_json(&doc)
        } else {
            Self::read_csv(path)
        }
    }
}

/// JSON form of a [`CountTensor`]; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub dims: [usize; 3],
    pub entries: Vec<[u64; 4]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn included_cells_respects_diagonal_flag() {
        let x = CountTensor::zeros(3, 4).unwrap();
        assert_eq!(x.included_cells(), 48);
        assert_eq!(x.cells().count(), 48);
        let x = x.with_diagonal(false);
        assert_eq!(x.included_cells(), 36);
        assert_eq!(x.cells().count(), 36);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(CountTensor::zeros(0, 3).is_err());
        assert!(CountTensor::zeros(2, 0).is_err());
    }

    #[test]
    fn asymmetric_counts_are_kept() {
        let mut x = CountTensor::zeros(1, 2).unwrap();
        x.set(0, 0, 1, 5);
        x.set(0, 1, 0, 2);
        assert_eq!(x.get(0, 0, 1), 5);
        assert_eq!(x.get(0, 1, 0), 2);
    }

    #[test]
    fn csv_reports_line_numbers() {
        let err = CountTensor::parse_csv("t,i,j,count\n1,1,1,2\n1,2,x,3\n", "data.csv", None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = CountTensor::parse_csv("t,i,j,count\n1,1,1,-2\n", "d", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = CountTensor::parse_csv("a,b,c\n", "d", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_out_of_range_index_is_error() {
        let err = CountTensor::parse_csv("t,i,j,count\n1,3,1,1\n", "d", Some((1, 2))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = CountTensor::parse_csv("t,i,j,count\n0,1,1,1\n", "d", None).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn absent_cells_default_to_zero() {
        let x = CountTensor::parse_csv("t,i,j,count\n2,3,3,0\n1,2,1,4\n", "d", None).unwrap();
        assert_eq!(x.dims(), (2, 3, 3));
        assert_eq!(x.get(0, 1, 0), 4);
        assert_eq!(x.as_slice().iter().map(|&c| c as u64).sum::<u64>(), 4);
    }

    #[test]
    fn json_rejects_rectangular() {
        let doc = TensorJson {
            dims: [1, 2, 3],
            entries: vec![],
        };
        assert!(CountTensor::from_json(&doc).is_err());
    }

    fn arb_tensor() -> impl Strategy<Value = CountTensor> {
        (1usize..4, 1usize..6).prop_flat_map(|(t, n)| {
            proptest::collection::vec(prop_oneof![3 => Just(0u32), 2 => 0u32..50], t * n * n)
                .prop_map(move |v| CountTensor::from_vec(t, n, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(x in arb_tensor()) {
            let mut buf = Vec::new();
            x.write_csv(&mut buf).unwrap();
            let y = CountTensor::parse_csv(std::str::from_utf8(&buf).unwrap(), "mem", None).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn json_round_trip(x in arb_tensor()) {
            let text = serde_json::to_string(&x.to_json()).unwrap();
            let doc: TensorJson = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(CountTensor::from_json(&doc).unwrap(), x);
        }
    }
}
