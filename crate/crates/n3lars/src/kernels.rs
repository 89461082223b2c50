//! Gram-matrix construction, centering/normalization, and Nystrom factors.
//!
//! Exact mode works with full n-by-n Grams: `K` is built from a Gaussian
//! kernel on a feature (or a delta kernel on labels), double-centered with
//! `G = I - (1/n) 1 1^T`, and scaled to unit Frobenius norm. Nystrom mode
//! replaces `K~` with a factor `Z` (induced Gram `Z Z^T`) built from kernel
//! evaluations against a small fixed basis grid, so downstream trace products
//! only ever touch b-by-b matrices.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};

use crate::data::{Dataset, Output};
use crate::error::{Error, Result};
use crate::linalg;

/// Threshold below which a centered Gram (or factor Gram) counts as zero.
pub(crate) const DEGENERATE_NORM: f64 = 1e-12;

pub(crate) fn frob_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Raw symmetric kernel Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    m: Array2<f64>,
}

impl GramMatrix {
    pub fn new(m: Array2<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }
}

/// Centered, Frobenius-normalized Gram (`K~` in scoring formulas).
/// A degenerate input (constant feature) yields the zero matrix, flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGram {
    m: Array2<f64>,
    degenerate: bool,
}

impl NormalizedGram {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Strictly increasing basis points for the Nystrom grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisGrid {
    points: Vec<f64>,
}

impl BasisGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("basis grid needs at least 2 points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("basis point".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("basis points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `count` equally spaced points covering `[min, max]` inclusive.
    pub fn linspace(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 || min >= max {
            return Err(Error::invalid("basis grid needs count >= 2 and min < max"));
        }
        let step = (max - min) / (count - 1) as f64;
        Self::new((0..count).map(|i| min + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The fixed 20-point grid on [-5, 5] used when nothing else is configured.
/// Standardized inputs have unit standard deviation, so this covers the bulk
/// of the sample distribution.
pub fn default_basis() -> BasisGrid {
    BasisGrid::linspace(-5.0, 5.0, 20).expect("static grid")
}

/// Which variable a Nystrom factor represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Input,
    OutputRegression,
    OutputClassification,
}

impl FactorKind {
    fn tag(self) -> u8 {
        match self {
            FactorKind::Input => 0,
            FactorKind::OutputRegression => 1,
            FactorKind::OutputClassification => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(FactorKind::Input),
            1 => Ok(FactorKind::OutputRegression),
            2 => Ok(FactorKind::OutputClassification),
            other => Err(Error::invalid(format!("unknown factor kind tag {other}"))),
        }
    }
}

/// Centered, normalized low-rank factor. Stored as n-by-r with the induced
/// Gram `Z Z^T`, so `|Z^T W|_F^2` between two factors equals the trace of the
/// product of their induced Grams. For classification outputs the stored
/// matrix is the transpose of the class-indicator construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromFactor {
    z: Array2<f64>,
    kind: FactorKind,
    degenerate: bool,
}

impl NystromFactor {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn n_samples(&self) -> usize {
        self.z.nrows()
    }

    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    /// Induced n-by-n Gram `Z Z^T`.
    pub fn induced_gram(&self) -> Array2<f64> {
        self.z.dot(&self.z.t())
    }

    /// Flat binary layout: kind tag (u8), n (u64 LE), b (u64 LE), then
    /// n*b row-major f64 LE values.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&[self.kind.tag()])?;
        w.write_all(&(self.z.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.z.ncols() as u64).to_le_bytes())?;
        for v in self.z.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let kind = FactorKind::from_tag(tag[0])?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let b = u64::from_le_bytes(u64buf) as usize;
        let mut data = Vec::with_capacity(n * b);
        let mut f64buf = [0u8; 8];
        for _ in 0..n * b {
            r.read_exact(&mut f64buf)?;
            data.push(f64::from_le_bytes(f64buf));
        }
        let z = Array2::from_shape_vec((n, b), data)
            .map_err(|e| Error::invalid(format!("bad factor shape: {e}")))?;
        let degenerate = z.iter().all(|v| *v == 0.0);
        Ok(Self { z, kind, degenerate })
    }
}

/// Gaussian Gram `M[i,j] = exp(-(u_i - u_j)^2 / (2 sigma2))`.
pub fn gaussian_gram(u: ArrayView1<'_, f64>, sigma2: f64) -> Result<GramMatrix> {
    if sigma2 <= 0.0 {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input entry {i}")));
    }
    let n = u.len();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = 1.0;
        for j in 0..i {
            let dlt = u[i] - u[j];
            let v = (-dlt * dlt / (2.0 * sigma2)).exp();
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    Ok(GramMatrix::new(m))
}

/// Delta-kernel Gram for labels in `0..n_classes`:
/// `M[i,j] = 1/n_{y_i}` when `y_i = y_j`, else 0.
pub fn delta_gram(labels: &[usize], n_classes: usize) -> Result<GramMatrix> {
    if labels.is_empty() || n_classes == 0 {
        return Err(Error::invalid("delta kernel needs at least one sample"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass { class: c });
    }
    let n = labels.len();
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                m[[i, j]] = 1.0 / counts[labels[i]] as f64;
            }
        }
    }
    Ok(GramMatrix::new(m))
}

/// Double centering `G M G` with `G = I - (1/n) 1 1^T`, computed via
/// row/column/grand means.
pub fn center_gram(g: &GramMatrix) -> Array2<f64> {
    let m = g.matrix();
    let n = m.nrows();
    let row_means: Array1<f64> = m.sum_axis(ndarray::Axis(1)) / n as f64;
    let col_means: Array1<f64> = m.sum_axis(ndarray::Axis(0)) / n as f64;
    let grand = m.sum() / (n * n) as f64;
    Array2::from_shape_fn((n, n), |(i, j)| m[[i, j]] - row_means[i] - col_means[j] + grand)
}

/// `G M G / |G M G|_F`; the zero matrix (flagged degenerate) when the
/// centered norm falls below [`DEGENERATE_NORM`].
pub fn center_normalize(g: &GramMatrix) -> NormalizedGram {
    let mut c = center_gram(g);
    let norm = frob_norm(&c);
    if norm < DEGENERATE_NORM {
        c.fill(0.0);
        return NormalizedGram { m: c, degenerate: true };
    }
    c.mapv_inplace(|v| v / norm);
    NormalizedGram { m: c, degenerate: false }
}

/// Centered, normalized Nystrom factor of a single feature:
/// kernel evaluations against the basis, whitened by the inverse square root
/// of the basis Gram (eigenvalues floored at `eps_rel` times the largest),
/// column-centered, and scaled so the induced Gram has unit Frobenius norm.
pub fn nystrom_factor(
    u: ArrayView1<'_, f64>,
    basis: &BasisGrid,
    sigma2: f64,
    eps_rel: f64,
) -> Result<NystromFactor> {
    build_factor(u, basis, sigma2, eps_rel, FactorKind::Input)
}

fn build_factor(
    u: ArrayView1<'_, f64>,
    basis: &BasisGrid,
    sigma2: f64,
    eps_rel: f64,
    kind: FactorKind,
) -> Result<NystromFactor> {
    if sigma2 <= 0.0 || eps_rel <= 0.0 {
        return Err(Error::invalid("sigma2 and eps_rel must be positive"));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input entry {i}")));
    }
    let n = u.len();
    let b = basis.len();
    let pts = basis.points();
    let mut knb = Array2::zeros((n, b));
    for i in 0..n {
        for j in 0..b {
            let dlt = u[i] - pts[j];
            knb[[i, j]] = (-dlt * dlt / (2.0 * sigma2)).exp();
        }
    }
    let mut kbb = Array2::zeros((b, b));
    for i in 0..b {
        kbb[[i, i]] = 1.0;
        for j in 0..i {
            let dlt = pts[i] - pts[j];
            let v = (-dlt * dlt / (2.0 * sigma2)).exp();
            kbb[[i, j]] = v;
            kbb[[j, i]] = v;
        }
    }
    let (w, v) = linalg::eigh(kbb.view());
    let w_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = if w_max > 0.0 { eps_rel * w_max } else { eps_rel };
    let scaled = Array2::from_shape_fn(v.dim(), |(i, j)| v[[i, j]] / w[j].max(floor).sqrt());
    let inv_sqrt = scaled.dot(&v.t());

    let mut m = knb.dot(&inv_sqrt);
    // left-multiply by the centering matrix: subtract column means
    for j in 0..b {
        let mean = m.column(j).sum() / n as f64;
        m.column_mut(j).mapv_inplace(|x| x - mean);
    }
    finish_factor(m, kind)
}

fn finish_factor(mut m: Array2<f64>, kind: FactorKind) -> Result<NystromFactor> {
    let mtm = m.t().dot(&m);
    let gram_norm = frob_norm(&mtm); // equals |M M^T|_F
    if gram_norm < DEGENERATE_NORM {
        m.fill(0.0);
        return Ok(NystromFactor { z: m, kind, degenerate: true });
    }
    let scale = gram_norm.sqrt();
    m.mapv_inplace(|x| x / scale);
    Ok(NystromFactor { z: m, kind, degenerate: false })
}

/// Output-side factor. Regression reuses the input construction on the
/// (standardized) output. Classification builds the class-indicator matrix
/// `G[k,j] = 1/sqrt(n_k)` for `y_j = k`, centers it across samples, and
/// scales so the induced Gram --- which then equals the centered, normalized
/// delta-kernel Gram --- has unit Frobenius norm.
pub fn output_factor(
    ds: &Dataset,
    basis: &BasisGrid,
    sigma2: f64,
    eps_rel: f64,
) -> Result<NystromFactor> {
    match ds.output() {
        Output::Real(y) => build_factor(y.view(), basis, sigma2, eps_rel, FactorKind::OutputRegression),
        Output::Labels { idx, classes } => {
            let c = classes.len();
            let n = idx.len();
            let mut counts = vec![0usize; c];
            for &l in idx {
                counts[l] += 1;
            }
            if let Some(cl) = counts.iter().position(|&k| k == 0) {
                return Err(Error::EmptyClass { class: cl });
            }
            // transposed indicator: rows are samples, columns classes
            let mut m = Array2::zeros((n, c));
            for (j, &l) in idx.iter().enumerate() {
                m[[j, l]] = 1.0 / (counts[l] as f64).sqrt();
            }
            for col in 0..c {
                let mean = m.column(col).sum() / n as f64;
                m.column_mut(col).mapv_inplace(|x| x - mean);
            }
            finish_factor(m, FactorKind::OutputClassification)
        }
    }
}

/// Exact-mode output Gram: Gaussian on a real output, delta kernel on labels.
pub fn output_gram(ds: &Dataset, sigma2: f64) -> Result<GramMatrix> {
    match ds.output() {
        Output::Real(y) => gaussian_gram(y.view(), sigma2),
        Output::Labels { idx, classes } => delta_gram(idx, classes.len()),
    }
}
