//! HSIC and NHSIC dependence scores, exact and Nystrom-approximated, plus the
//! score cache shared by the solver and screening.
//!
//! NHSIC of two variables is the Frobenius inner product of their centered,
//! unit-norm Gram matrices; it lies in [0, 1], equals 1 for a variable with
//! itself, and is zero iff the variables are independent (universal kernel,
//! population limit). In Nystrom mode the same trace is computed from
//! low-rank factors without ever forming an n-by-n matrix.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;

use crate::config::{Config, Measure, Mode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{
    self, center_gram, center_normalize, frob_inner, frob_norm, BasisGrid, NormalizedGram,
    NystromFactor, DEGENERATE_NORM,
};
use crate::parallel::ScoringEngine;

/// `tr(Kbar Lbar)` for two centered Grams of matching size.
pub fn hsic_exact(kbar: &Array2<f64>, lbar: &Array2<f64>) -> Result<f64> {
    if kbar.dim() != lbar.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            kbar.dim(),
            lbar.dim()
        )));
    }
    Ok(frob_inner(kbar, lbar))
}

/// `tr(Ktil Ltil)` for centered, unit-Frobenius Grams; zero when either side
/// is degenerate.
pub fn nhsic_exact(ktil: &NormalizedGram, ltil: &NormalizedGram) -> Result<f64> {
    if ktil.is_degenerate() || ltil.is_degenerate() {
        return Ok(0.0);
    }
    hsic_exact(ktil.matrix(), ltil.matrix())
}

/// NHSIC from Nystrom factors: the squared Frobenius norm of the cross-factor
/// product, which equals the trace of the product of the induced Grams. Only
/// the small r1-by-r2 product is formed.
pub fn nhsic_approx(f: &NystromFactor, g: &NystromFactor) -> Result<f64> {
    if f.n_samples() != g.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "factor sample counts {} vs {}",
            f.n_samples(),
            g.n_samples()
        )));
    }
    if f.is_degenerate() || g.is_degenerate() {
        return Ok(0.0);
    }
    let cross = f.matrix().t().dot(g.matrix());
    Ok(cross.iter().map(|v| v * v).sum())
}

/// Per-feature kernel representation, one of the two scoring modes.
#[derive(Debug, Clone)]
pub enum FeatureRep {
    /// Exact mode: centered Gram, normalized for NHSIC or raw-centered for
    /// HSIC.
    Gram { m: Array2<f64>, degenerate: bool },
    Factor(NystromFactor),
}

impl FeatureRep {
    pub fn is_degenerate(&self) -> bool {
        match self {
            FeatureRep::Gram { degenerate, .. } => *degenerate,
            FeatureRep::Factor(f) => f.is_degenerate(),
        }
    }

    /// Dependence score between two representations of the same mode.
    pub fn score(&self, other: &FeatureRep) -> Result<f64> {
        match (self, other) {
            (FeatureRep::Gram { m: a, degenerate: da }, FeatureRep::Gram { m: b, degenerate: db }) => {
                if *da || *db {
                    return Ok(0.0);
                }
                hsic_exact(a, b)
            }
            (FeatureRep::Factor(a), FeatureRep::Factor(b)) => nhsic_approx(a, b),
            _ => Err(Error::DimensionMismatch(
                "cannot score an exact Gram against a Nystrom factor".into(),
            )),
        }
    }

    /// Approximate in-memory size, used for cache budgeting.
    pub fn bytes(&self) -> usize {
        match self {
            FeatureRep::Gram { m, .. } => m.len() * 8,
            FeatureRep::Factor(f) => f.matrix().len() * 8,
        }
    }
}

/// Build the representation of input feature `k` under the configured mode.
pub fn feature_rep(ds: &Dataset, k: usize, cfg: &Config, basis: &BasisGrid) -> Result<FeatureRep> {
    let u = ds.feature(k);
    match cfg.mode {
        Mode::Nystrom => Ok(FeatureRep::Factor(kernels::nystrom_factor(
            u,
            basis,
            cfg.kernel.sigma2_x,
            cfg.kernel.eps_rel,
        )?)),
        Mode::Exact => {
            let gram = kernels::gaussian_gram(u, cfg.kernel.sigma2_x)?;
            Ok(exact_rep(&gram, cfg.measure))
        }
    }
}

/// Build the output-side representation under the configured mode.
pub fn output_rep(ds: &Dataset, cfg: &Config, basis: &BasisGrid) -> Result<FeatureRep> {
    match cfg.mode {
        Mode::Nystrom => Ok(FeatureRep::Factor(kernels::output_factor(
            ds,
            basis,
            cfg.kernel.sigma2_y,
            cfg.kernel.eps_rel,
        )?)),
        Mode::Exact => {
            let gram = kernels::output_gram(ds, cfg.kernel.sigma2_y)?;
            Ok(exact_rep(&gram, cfg.measure))
        }
    }
}

fn exact_rep(gram: &kernels::GramMatrix, measure: Measure) -> FeatureRep {
    match measure {
        Measure::Nhsic => {
            let ng = center_normalize(gram);
            let degenerate = ng.is_degenerate();
            FeatureRep::Gram { m: ng.matrix().clone(), degenerate }
        }
        Measure::Hsic => {
            let c = center_gram(gram);
            let degenerate = frob_norm(&c) < DEGENERATE_NORM;
            FeatureRep::Gram { m: c, degenerate }
        }
    }
}

/// Cached relevance and pairwise dependence scores.
///
/// Relevance (feature vs output) is filled once for every feature; pairwise
/// entries are filled lazily as solver pivots are chosen and kept for the
/// lifetime of the cache. Scores are clamped to be non-negative on entry so
/// that `-1e-15`-level roundoff cannot flip the solver's positivity checks.
#[derive(Debug, Clone)]
pub struct NhsicScores {
    relevance: Vec<f64>,
    degenerate: Vec<bool>,
    pairwise: BTreeMap<(usize, usize), f64>,
}

fn clamp_score(v: f64) -> f64 {
    if v < 0.0 {
        log::trace!("clamping negative score {v:e} to 0");
        0.0
    } else {
        v
    }
}

impl NhsicScores {
    pub fn new(d: usize) -> Self {
        Self {
            relevance: vec![0.0; d],
            degenerate: vec![false; d],
            pairwise: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn relevance(&self) -> &[f64] {
        &self.relevance
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        self.degenerate[k]
    }

    /// Number of features eligible for ranking and selection.
    pub fn usable_count(&self) -> usize {
        self.degenerate.iter().filter(|d| !**d).count()
    }

    pub fn set_relevance(&mut self, k: usize, v: f64) {
        self.relevance[k] = clamp_score(v);
    }

    pub fn set_degenerate(&mut self, k: usize, flag: bool) {
        self.degenerate[k] = flag;
    }

    pub fn insert_pairwise(&mut self, k: usize, j: usize, v: f64) {
        self.pairwise.insert(pair_key(k, j), clamp_score(v));
    }

    pub fn pairwise(&self, k: usize, j: usize) -> Option<f64> {
        self.pairwise.get(&pair_key(k, j)).copied()
    }

    pub fn pairwise_len(&self) -> usize {
        self.pairwise.len()
    }

    /// Audit export: `feature_index,relevance` rows.
    pub fn write_relevance_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "feature_index,relevance")?;
        for (k, v) in self.relevance.iter().enumerate() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

fn pair_key(k: usize, j: usize) -> (usize, usize) {
    if k <= j {
        (k, j)
    } else {
        (j, k)
    }
}

/// Compute relevance scores for every feature of a (standardized) dataset.
/// The pairwise store starts empty. Deterministic for a fixed config
/// regardless of worker count.
pub fn build_scores(ds: &Dataset, cfg: &Config) -> Result<NhsicScores> {
    let mut engine = ScoringEngine::new(ds, cfg)?;
    engine.score_all()?;
    Ok(engine.into_scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Output};
    use ndarray::{array, Array1};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_vec(n: usize, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
    }

    #[test]
    fn hsic_self_is_squared_norm() {
        let g = kernels::gaussian_gram(array![1.0, 2.0, 3.0].view(), 1.0).unwrap();
        let c = center_gram(&g);
        let h = hsic_exact(&c, &c).unwrap();
        let want = frob_norm(&c).powi(2);
        assert!((h - want).abs() < 1e-12);
    }

    #[test]
    fn hsic_zero_matrix() {
        let g = kernels::gaussian_gram(array![1.0, 2.0, 3.0].view(), 1.0).unwrap();
        let c = center_gram(&g);
        let z = Array2::zeros((3, 3));
        assert_eq!(hsic_exact(&c, &z).unwrap(), 0.0);
    }

    #[test]
    fn hsic_dimension_mismatch() {
        let a = Array2::zeros((3, 3));
        let b = Array2::zeros((4, 4));
        assert!(hsic_exact(&a, &b).is_err());
    }

    #[test]
    fn hsic_independent_vectors_near_zero() {
        let n = 1000;
        let u = random_vec(n, 101);
        let v = random_vec(n, 202);
        let ku = center_gram(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        let kv = center_gram(&kernels::gaussian_gram(v.view(), 1.0).unwrap());
        let h = hsic_exact(&ku, &kv).unwrap();
        let bound = 0.01 * frob_norm(&ku) * frob_norm(&kv);
        assert!(h.abs() < bound, "hsic {h} vs bound {bound}");
    }

    #[test]
    fn nhsic_self_is_one() {
        let u = array![1.0, 2.0, 3.0, 5.0];
        let k = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        let v = nhsic_exact(&k, &k).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nhsic_degenerate_is_zero() {
        let u = array![1.0, 2.0, 3.0, 5.0];
        let k = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        let z = center_normalize(&kernels::gaussian_gram(array![2.0, 2.0, 2.0, 2.0].view(), 1.0).unwrap());
        assert!(z.is_degenerate());
        assert_eq!(nhsic_exact(&k, &z).unwrap(), 0.0);
    }

    #[test]
    fn nhsic_permutation_breaks_alignment() {
        // unit-std sequence 1..20, the scale the sigma2 = 1 default assumes
        let raw = Array1::from_iter((1..=20).map(|i| i as f64));
        let mean = raw.sum() / 20.0;
        let sd = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 19.0).sqrt();
        let u = raw.mapv(|v| v / sd);
        let k = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        assert!((nhsic_exact(&k, &k).unwrap() - 1.0).abs() < 1e-10);
        let mut perm: Vec<f64> = u.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        perm.shuffle(&mut rng);
        let kp = center_normalize(&kernels::gaussian_gram(Array1::from_vec(perm).view(), 1.0).unwrap());
        let v = nhsic_exact(&k, &kp).unwrap();
        // permuted-copy alignment observed around 0.08 across shuffles
        assert!(v < 0.5, "permuted alignment {v}");
        assert!(v > 0.0);
    }

    #[test]
    fn approx_self_is_one() {
        let u = random_vec(60, 7);
        let f = kernels::nystrom_factor(u.view(), &kernels::default_basis(), 1.0, 1e-10).unwrap();
        let v = nhsic_approx(&f, &f).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn approx_degenerate_is_zero() {
        let u = random_vec(10, 7);
        let f = kernels::nystrom_factor(u.view(), &kernels::default_basis(), 1.0, 1e-10).unwrap();
        let g = kernels::nystrom_factor(Array1::from_elem(10, 1.0).view(), &kernels::default_basis(), 1.0, 1e-10)
            .unwrap();
        assert_eq!(nhsic_approx(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn approx_sample_count_mismatch() {
        let f = kernels::nystrom_factor(random_vec(10, 1).view(), &kernels::default_basis(), 1.0, 1e-10).unwrap();
        let g = kernels::nystrom_factor(random_vec(11, 2).view(), &kernels::default_basis(), 1.0, 1e-10).unwrap();
        assert!(nhsic_approx(&f, &g).is_err());
    }

    #[test]
    fn approx_matches_exact_with_sample_basis() {
        let n = 24;
        for seed in [3u64, 4, 5] {
            let u = random_vec(n, seed);
            let v = random_vec(n, seed + 100);
            let mut us = u.to_vec();
            us.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let bu = kernels::BasisGrid::new(us).unwrap();
            let mut vs = v.to_vec();
            vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let bv = kernels::BasisGrid::new(vs).unwrap();
            let fu = kernels::nystrom_factor(u.view(), &bu, 1.0, 1e-12).unwrap();
            let fv = kernels::nystrom_factor(v.view(), &bv, 1.0, 1e-12).unwrap();
            let approx = nhsic_approx(&fu, &fv).unwrap();
            let eu = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
            let ev = center_normalize(&kernels::gaussian_gram(v.view(), 1.0).unwrap());
            let exact = nhsic_exact(&eu, &ev).unwrap();
            assert!(
                (approx - exact).abs() < 1e-6,
                "seed {seed}: approx {approx} vs exact {exact}"
            );
        }
    }

    #[test]
    fn mode_gap_shrinks_with_basis_size() {
        // |exact - nystrom| decreases as the grid grows
        let n = 60;
        let u = {
            let raw = random_vec(n, 41);
            let sd = (raw.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
            raw.mapv(|v| v / sd)
        };
        let v = {
            let raw = random_vec(n, 42);
            let sd = (raw.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
            raw.mapv(|v| v / sd)
        };
        let eu = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        let ev = center_normalize(&kernels::gaussian_gram(v.view(), 1.0).unwrap());
        let exact = nhsic_exact(&eu, &ev).unwrap();
        let mut errors = Vec::new();
        for b in [5usize, 10, 20] {
            let grid = kernels::BasisGrid::linspace(-5.0, 5.0, b).unwrap();
            let fu = kernels::nystrom_factor(u.view(), &grid, 1.0, 1e-10).unwrap();
            let fv = kernels::nystrom_factor(v.view(), &grid, 1.0, 1e-10).unwrap();
            errors.push((nhsic_approx(&fu, &fv).unwrap() - exact).abs());
        }
        // basis = samples reproduces the exact value
        let mut su = u.to_vec();
        su.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sv = v.to_vec();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let fu = kernels::nystrom_factor(u.view(), &kernels::BasisGrid::new(su).unwrap(), 1.0, 1e-12).unwrap();
        let fv = kernels::nystrom_factor(v.view(), &kernels::BasisGrid::new(sv).unwrap(), 1.0, 1e-12).unwrap();
        errors.push((nhsic_approx(&fu, &fv).unwrap() - exact).abs());
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "errors not shrinking: {errors:?}");
        }
    }

    #[test]
    fn scores_clamp_negative() {
        let mut s = NhsicScores::new(2);
        s.set_relevance(0, -1e-15);
        assert_eq!(s.relevance()[0], 0.0);
        s.insert_pairwise(0, 1, -1e-16);
        assert_eq!(s.pairwise(0, 1), Some(0.0));
        assert_eq!(s.pairwise(1, 0), Some(0.0));
    }

    #[test]
    fn build_scores_identical_feature_maxes_out() {
        // one feature equal to the regression output scores 1 in exact mode
        let y = random_vec(30, 77);
        let mut x = Array2::zeros((2, 30));
        x.row_mut(0).assign(&y);
        x.row_mut(1).assign(&random_vec(30, 78));
        let ds = Dataset::new(x, Output::Real(y), None).unwrap().standardize();
        let cfg = Config::exact();
        let scores = build_scores(&ds, &cfg).unwrap();
        assert!((scores.relevance()[0] - 1.0).abs() < 1e-6);
        assert!(scores.relevance()[1] < scores.relevance()[0]);
        for v in scores.relevance() {
            assert!(*v >= 0.0 && *v <= 1.0 + 1e-8);
        }
        assert_eq!(scores.pairwise_len(), 0);
    }

    #[test]
    fn build_scores_synthetic_relevance_ordering() {
        let ds = generate_synthetic(500, 50, 0, 0.1, 13).unwrap().standardize();
        let scores = build_scores(&ds, &Config::nystrom()).unwrap();
        let rel = scores.relevance();
        for k in 4..50 {
            assert!(
                rel[0] > rel[k],
                "relevance of X1 ({}) should beat irrelevant X{} ({})",
                rel[0],
                k + 1,
                rel[k]
            );
        }
    }

    #[test]
    fn symmetry_across_modes() {
        let u = random_vec(40, 9);
        let v = random_vec(40, 10);
        let eu = center_normalize(&kernels::gaussian_gram(u.view(), 1.0).unwrap());
        let ev = center_normalize(&kernels::gaussian_gram(v.view(), 1.0).unwrap());
        let a = nhsic_exact(&eu, &ev).unwrap();
        let b = nhsic_exact(&ev, &eu).unwrap();
        assert!((a - b).abs() < 1e-10);
        let basis = kernels::default_basis();
        let fu = kernels::nystrom_factor(u.view(), &basis, 1.0, 1e-10).unwrap();
        let fv = kernels::nystrom_factor(v.view(), &basis, 1.0, 1e-10).unwrap();
        let c = nhsic_approx(&fu, &fv).unwrap();
        let d = nhsic_approx(&fv, &fu).unwrap();
        assert!((c - d).abs() < 1e-10);
        assert!((0.0..=1.0 + 1e-8).contains(&a));
        assert!((0.0..=1.0 + 1e-8).contains(&c));
    }
}
