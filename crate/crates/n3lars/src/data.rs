//! Dataset ingestion, standardization, and synthetic-data generation.
//!
//! A [`Dataset`] holds a dense d-by-n input matrix (one row per feature, one
//! column per sample) and either a real-valued output vector or categorical
//! labels. Two on-disk formats are supported:
//!
//! - dense CSV: one sample per line, features as columns, last column is the
//!   output; UTF-8, comma-separated, `.` decimal; optional header row;
//! - LIBSVM sparse text: `label idx:val idx:val ...` with 1-based indices,
//!   densified on load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Learning task; decides how the last CSV column / LIBSVM label is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// On-disk dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    DenseCsv { header: bool },
    Libsvm,
}

/// Output side of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Real(Array1<f64>),
    /// Labels re-indexed to `0..C-1`; `classes[c]` is the original label
    /// value of class `c` (ascending).
    Labels { idx: Vec<usize>, classes: Vec<f64> },
}

impl Output {
    pub fn len(&self) -> usize {
        match self {
            Output::Real(y) => y.len(),
            Output::Labels { idx, .. } => idx.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Output::Real(_) => None,
            Output::Labels { classes, .. } => Some(classes.len()),
        }
    }
}

/// Dense dataset: `x` is d-by-n (feature rows, sample columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Output,
    feature_names: Option<Vec<String>>,
    /// Set by [`Dataset::standardize`] for rows with zero sample variance.
    constant: Vec<bool>,
}

impl Dataset {
    /// Build a dataset, validating shapes, finiteness and label coverage.
    pub fn new(x: Array2<f64>, y: Output, feature_names: Option<Vec<String>>) -> Result<Self> {
        let (d, n) = x.dim();
        if d < 1 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if n < 2 {
            return Err(Error::invalid("dataset needs at least two samples"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "output length {} does not match sample count {}",
                y.len(),
                n
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{} feature names for {} features",
                    names.len(),
                    d
                )));
            }
        }
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "input entry at feature {}, sample {}",
                    i / n,
                    i % n
                )));
            }
        }
        match &y {
            Output::Real(v) => {
                if let Some(i) = v.iter().position(|t| !t.is_finite()) {
                    return Err(Error::NonFinite(format!("output entry at sample {i}")));
                }
            }
            Output::Labels { idx, classes } => {
                let c = classes.len();
                if c == 0 {
                    return Err(Error::EmptyClass { class: 0 });
                }
                let mut counts = vec![0usize; c];
                for (i, &l) in idx.iter().enumerate() {
                    if l >= c {
                        return Err(Error::invalid(format!(
                            "label {l} at sample {i} exceeds class count {c}"
                        )));
                    }
                    counts[l] += 1;
                }
                if let Some(cl) = counts.iter().position(|&k| k == 0) {
                    return Err(Error::EmptyClass { class: cl });
                }
            }
        }
        Ok(Self {
            x,
            y,
            feature_names,
            constant: vec![false; d],
        })
    }

    pub fn n_features(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature(&self, k: usize) -> ArrayView1<'_, f64> {
        self.x.row(k)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn output(&self) -> &Output {
        &self.y
    }

    pub fn task(&self) -> Task {
        match self.y {
            Output::Real(_) => Task::Regression,
            Output::Labels { .. } => Task::Classification,
        }
    }

    pub fn feature_name(&self, k: usize) -> Option<&str> {
        self.feature_names.as_ref().map(|v| v[k].as_str())
    }

    /// Whether feature `k` was flagged constant during standardization.
    pub fn is_constant(&self, k: usize) -> bool {
        self.constant[k]
    }

    /// Scale every feature row (and, for regression, the output) to unit
    /// sample standard deviation (1/(n-1) convention). Rows with zero
    /// variance are left unscaled and flagged constant; downstream kernel
    /// centering maps them to the zero matrix, so they can never be selected.
    /// Idempotent.
    pub fn standardize(mut self) -> Self {
        let n = self.n_samples();
        for (k, mut row) in self.x.rows_mut().into_iter().enumerate() {
            match sample_std(row.view()) {
                Some(sd) => row.mapv_inplace(|v| v / sd),
                None => self.constant[k] = true,
            }
        }
        if let Output::Real(y) = &mut self.y {
            if let Some(sd) = sample_std(y.view()) {
                y.mapv_inplace(|v| v / sd);
            }
        }
        debug_assert_eq!(n, self.n_samples());
        self
    }

    /// Write as dense CSV (samples as lines, output last). With `header`,
    /// the first line carries feature names (or `f<k>`) and `y`.
    pub fn write_dense_csv(&self, path: &Path, header: bool) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let (d, n) = self.x.dim();
        if header {
            for k in 0..d {
                match self.feature_name(k) {
                    Some(name) => write!(w, "{name},")?,
                    None => write!(w, "f{k},")?,
                }
            }
            writeln!(w, "y")?;
        }
        for i in 0..n {
            for k in 0..d {
                write!(w, "{},", self.x[[k, i]])?;
            }
            match &self.y {
                Output::Real(y) => writeln!(w, "{}", y[i])?,
                Output::Labels { idx, classes } => writeln!(w, "{}", classes[idx[i]])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample standard deviation with the 1/(n-1) convention; `None` when zero.
fn sample_std(v: ArrayView1<'_, f64>) -> Option<f64> {
    let n = v.len();
    let mean = v.sum() / n as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n - 1) as f64;
    if var <= 0.0 {
        None
    } else {
        Some(var.sqrt())
    }
}

/// Load a dataset from disk under the declared format and task.
///
/// Classification labels are re-indexed to `0..C-1` in ascending order of
/// the original values; the mapping is retained in [`Output::Labels`].
pub fn load_dataset(path: &Path, format: Format, task: Task) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        Format::DenseCsv { header } => parse_dense_csv(BufReader::new(file), header, task),
        Format::Libsvm => parse_libsvm(BufReader::new(file), task),
    }
}

/// Parse dense CSV from any reader. Rows and columns in errors are 1-based.
pub fn parse_dense_csv<R: Read>(reader: R, header: bool, task: Task) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut width = 0usize;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let mut line = line?;
        if lineno == 0 {
            // strip a UTF-8 BOM if present
            if let Some(rest) = line.strip_prefix('\u{feff}') {
                line = rest.to_string();
            }
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if lineno == 0 && header {
            let mut h: Vec<String> = cells.iter().map(|s| s.trim().to_string()).collect();
            h.pop(); // last column is the output
            names = Some(h);
            width = cells.len();
            continue;
        }
        if width == 0 {
            width = cells.len();
        } else if cells.len() != width {
            return Err(Error::parse(
                lineno + 1,
                cells.len().min(width) + 1,
                format!("ragged row: expected {} columns, found {}", width, cells.len()),
            ));
        }
        let mut row = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(lineno + 1, c + 1, format!("non-numeric cell {cell:?}"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() || width < 2 {
        return Err(Error::invalid(
            "dense CSV needs at least one data row and two columns",
        ));
    }
    let n = rows.len();
    let d = width - 1;
    let mut x = Array2::zeros((d, n));
    let mut raw_y = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..d {
            x[[k, i]] = row[k];
        }
        raw_y.push(row[d]);
    }
    Dataset::new(x, build_output(raw_y, task)?, names)
}

/// Parse LIBSVM sparse text: `label idx:val ...`, 1-based indices.
pub fn parse_libsvm<R: Read>(reader: R, task: Task) -> Result<Dataset> {
    let mut raw_y = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label = fields.next().unwrap();
        let y: f64 = label
            .parse()
            .map_err(|_| Error::parse(lineno + 1, 1, format!("non-numeric label {label:?}")))?;
        raw_y.push(y);
        let mut entries = Vec::new();
        for (fno, field) in fields.enumerate() {
            let (idx, val) = field.split_once(':').ok_or_else(|| {
                Error::parse(lineno + 1, fno + 2, format!("expected idx:val, found {field:?}"))
            })?;
            let idx: usize = idx.parse().map_err(|_| {
                Error::parse(lineno + 1, fno + 2, format!("bad feature index {idx:?}"))
            })?;
            if idx == 0 {
                return Err(Error::parse(lineno + 1, fno + 2, "indices are 1-based"));
            }
            let val: f64 = val.parse().map_err(|_| {
                Error::parse(lineno + 1, fno + 2, format!("non-numeric value {val:?}"))
            })?;
            d = d.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
    }
    if rows.is_empty() || d == 0 {
        return Err(Error::invalid("LIBSVM file has no usable rows"));
    }
    let n = rows.len();
    let mut x = Array2::zeros((d, n));
    for (i, entries) in rows.iter().enumerate() {
        for &(k, v) in entries {
            x[[k, i]] = v;
        }
    }
    Dataset::new(x, build_output(raw_y, task)?, None)
}

fn build_output(raw: Vec<f64>, task: Task) -> Result<Output> {
    match task {
        Task::Regression => Ok(Output::Real(Array1::from_vec(raw))),
        Task::Classification => {
            // map distinct label values, ascending, to 0..C-1
            let canon = |v: f64| if v == 0.0 { 0.0 } else { v };
            let mut classes: BTreeMap<u64, f64> = BTreeMap::new();
            for &v in &raw {
                if !v.is_finite() {
                    return Err(Error::NonFinite("classification label".into()));
                }
                classes.insert(ordered_bits(canon(v)), canon(v));
            }
            let ordered: Vec<f64> = classes.values().copied().collect();
            // every label is present in `ordered`, so partition_point lands on it
            let idx = raw
                .iter()
                .map(|&v| ordered.partition_point(|&c| c < canon(v)))
                .collect::<Vec<_>>();
            Ok(Output::Labels {
                idx,
                classes: ordered,
            })
        }
    }
}

/// Total-order key for finite floats (sign-magnitude to lexicographic).
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 0 {
        b | (1 << 63)
    } else {
        !b
    }
}

/// Generate the synthetic regression benchmark: `d_base` i.i.d. standard
/// normal features, `d_redundant` noisy copies `X_{base+k} = X_k + 0.01 E`,
/// and output `Y = X_1 exp(X_2) + X_3 + noise * E`. Deterministic in `seed`.
pub fn generate_synthetic(
    n: usize,
    d_base: usize,
    d_redundant: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if d_base < 3 {
        return Err(Error::invalid(
            "synthetic target needs at least 3 base features",
        ));
    }
    if d_redundant > d_base {
        return Err(Error::invalid(
            "cannot have more redundant copies than base features",
        ));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let d = d_base + d_redundant;
    let mut x = Array2::zeros((d, n));
    for k in 0..d_base {
        for i in 0..n {
            x[[k, i]] = normal();
        }
    }
    for k in 0..d_redundant {
        for i in 0..n {
            x[[d_base + k, i]] = x[[k, i]] + 0.01 * normal();
        }
    }
    let mut y = Array1::zeros(n);
    for i in 0..n {
        y[i] = x[[0, i]] * x[[1, i]].exp() + x[[2, i]] + noise * normal();
    }
    let names = (1..=d).map(|k| format!("X{k}")).collect();
    Dataset::new(x, Output::Real(y), Some(names))
}
