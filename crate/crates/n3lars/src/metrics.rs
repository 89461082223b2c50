//! Redundancy rate of a selected feature set: the mean absolute pairwise
//! Pearson correlation with the `1/(m(m-1))` normalizer over unordered pairs.
//! Because unordered pairs are counted once, the value ranges over [0, 1/2];
//! two identical features score exactly 0.5.

use ndarray::ArrayView1;

use crate::data::Dataset;
use crate::error::{Error, Result};

fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        None
    } else {
        Some(num / (va.sqrt() * vb.sqrt()))
    }
}

/// `RED = 1/(m(m-1)) * sum_{k>l} |corr(u_k, u_l)|` over the selected features.
pub fn redundancy_rate(ds: &Dataset, selected: &[usize]) -> Result<f64> {
    let m = selected.len();
    if m < 2 {
        return Err(Error::invalid("redundancy rate needs at least 2 features"));
    }
    for &k in selected {
        if k >= ds.n_features() {
            return Err(Error::invalid(format!("feature {k} out of range")));
        }
    }
    let mut sum = 0.0;
    for (i, &k) in selected.iter().enumerate() {
        for &l in &selected[..i] {
            let rho = pearson(ds.feature(k), ds.feature(l)).ok_or_else(|| {
                let bad = if variance_zero(ds.feature(k)) { k } else { l };
                Error::ConstantFeature { index: bad }
            })?;
            sum += rho.abs();
        }
    }
    Ok(sum / (m * (m - 1)) as f64)
}

fn variance_zero(v: ArrayView1<'_, f64>) -> bool {
    let mean = v.sum() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() <= 0.0
}
