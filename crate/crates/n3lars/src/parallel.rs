//! Sharded scoring engine: per-feature kernel representations and dependence
//! scores computed over a local fork-join worker pool.
//!
//! The dataflow mirrors a map-reduce layout. Preparation builds the output
//! representation once. Step 1 scores every feature against the output and
//! caches representations subject to a byte budget. Step 2 broadcasts a pivot
//! feature's representation and scores every requested feature against it.
//! Steps 3 and 4 support the solver's coefficient update by evaluating
//! negative gradients shard-parallel. Workers only ever read shared state;
//! every write happens at the single merge point after the join, in ascending
//! feature order, so results are independent of the worker count.
//!
//! With the `parallel` feature (default) shards run on a rayon pool sized by
//! `ParallelConfig::workers`; without it, or with `workers = 1`, the same
//! shards run sequentially and produce bit-identical results.

use std::ops::Range;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::{Config, Mode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::BasisGrid;
use crate::nhsic::{self, FeatureRep, NhsicScores};

/// Contiguous assignment of `count` items to shards; shard sizes differ by at
/// most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    ranges: Vec<Range<usize>>,
}

impl ShardPlan {
    pub fn new(count: usize, shards: usize) -> Self {
        let shards = shards.max(1).min(count.max(1));
        let base = count / shards;
        let extra = count % shards;
        let mut ranges = Vec::with_capacity(shards);
        let mut start = 0;
        for s in 0..shards {
            let len = base + usize::from(s < extra);
            ranges.push(start..start + len);
            start += len;
        }
        debug_assert_eq!(start, count);
        Self { ranges }
    }

    pub fn shard_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    /// Shard owning item `i`.
    pub fn shard_of(&self, i: usize) -> Option<usize> {
        self.ranges.iter().position(|r| r.contains(&i))
    }
}

/// Per-feature representation store with a byte budget.
///
/// When the projected total (`d` times the per-feature size) fits the budget,
/// everything computed is kept; otherwise nothing is kept except pinned
/// features (solver pivots), and representations are recomputed on demand.
/// Recomputation is deterministic, so a cache hit is bit-identical to a fresh
/// computation.
#[derive(Debug)]
pub struct FactorCache {
    entries: Vec<Option<Arc<FeatureRep>>>,
    pinned: Vec<bool>,
    keep_all: bool,
}

impl FactorCache {
    pub fn new(d: usize, per_feature_bytes: u64, budget_bytes: u64) -> Self {
        Self {
            entries: vec![None; d],
            pinned: vec![false; d],
            keep_all: (d as u64).saturating_mul(per_feature_bytes) <= budget_bytes,
        }
    }

    pub fn keep_all(&self) -> bool {
        self.keep_all
    }

    pub fn get(&self, k: usize) -> Option<&Arc<FeatureRep>> {
        self.entries[k].as_ref()
    }

    /// Pivots are pinned: stored regardless of budget and never dropped.
    pub fn pin(&mut self, k: usize) {
        self.pinned[k] = true;
    }

    pub fn is_pinned(&self, k: usize) -> bool {
        self.pinned[k]
    }

    fn wants(&self, k: usize) -> bool {
        (self.keep_all || self.pinned[k]) && self.entries[k].is_none()
    }

    fn insert(&mut self, k: usize, rep: Arc<FeatureRep>) {
        if self.keep_all || self.pinned[k] {
            self.entries[k] = Some(rep);
        }
    }

    pub fn cached_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Gradient information for one candidate feature at the current solver
/// state: the negative gradient and the correlation of the step direction
/// with the candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEntry {
    pub feature: usize,
    pub gradient: f64,
    pub dir_corr: f64,
}

/// The scoring engine. Owns the output representation, the factor cache and
/// the score cache; borrows the dataset read-only.
pub struct ScoringEngine<'d> {
    ds: &'d Dataset,
    cfg: Config,
    basis: BasisGrid,
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    output: Arc<FeatureRep>,
    cache: FactorCache,
    scores: NhsicScores,
}

impl<'d> ScoringEngine<'d> {
    /// Preparation step: resolve the worker pool, build the basis grid and
    /// the output representation, size the cache.
    pub fn new(ds: &'d Dataset, cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let basis = BasisGrid::linspace(
            cfg.kernel.basis_min,
            cfg.kernel.basis_max,
            cfg.kernel.basis_size,
        )?;
        let output = Arc::new(nhsic::output_rep(ds, cfg, &basis)?);
        let n = ds.n_samples() as u64;
        let per_feature = match cfg.mode {
            Mode::Nystrom => n * basis.len() as u64 * 8,
            Mode::Exact => n * n * 8,
        };
        let cache = FactorCache::new(
            ds.n_features(),
            per_feature,
            cfg.parallel.cache_budget_bytes,
        );
        let workers = resolve_workers(cfg.parallel.workers);
        #[cfg(feature = "parallel")]
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::invalid(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            ds,
            cfg: cfg.clone(),
            basis,
            workers,
            #[cfg(feature = "parallel")]
            pool,
            output,
            cache,
            scores: NhsicScores::new(ds.n_features()),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn scores(&self) -> &NhsicScores {
        &self.scores
    }

    pub fn into_scores(self) -> NhsicScores {
        self.scores
    }

    pub fn cache(&self) -> &FactorCache {
        &self.cache
    }

    fn rep_of(&self, k: usize) -> Result<Arc<FeatureRep>> {
        if let Some(rep) = self.cache.get(k) {
            return Ok(rep.clone());
        }
        nhsic::feature_rep(self.ds, k, &self.cfg, &self.basis)
            .map(Arc::new)
            .map_err(|e| Error::invalid(format!("scoring feature {k}: {e}")))
    }

    /// Run `work` over shard ranges of `0..count` and concatenate the
    /// per-shard outputs in shard order.
    fn run_shards<T, F>(&self, count: usize, work: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(Range<usize>) -> Result<Vec<T>> + Sync,
    {
        let plan = ShardPlan::new(count, self.workers);
        let per_shard: Vec<Result<Vec<T>>> = {
            #[cfg(feature = "parallel")]
            {
                match &self.pool {
                    Some(pool) => pool.install(|| {
                        plan.ranges().par_iter().cloned().map(&work).collect()
                    }),
                    None => plan.ranges().iter().cloned().map(&work).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                plan.ranges().iter().cloned().map(&work).collect()
            }
        };
        let mut merged = Vec::with_capacity(count);
        for shard in per_shard {
            merged.extend(shard?);
        }
        Ok(merged)
    }

    /// Step 1: relevance of every feature against the output. Fills the
    /// degenerate flags and, budget permitting, the representation cache.
    pub fn score_all(&mut self) -> Result<()> {
        let d = self.ds.n_features();
        let output = self.output.clone();
        let computed = self.run_shards(d, |range| {
            let mut out = Vec::with_capacity(range.len());
            for k in range {
                let rep = self.rep_of(k)?;
                let score = rep
                    .score(&output)
                    .map_err(|e| Error::invalid(format!("scoring feature {k}: {e}")))?;
                let keep = self.cache.wants(k).then(|| rep.clone());
                out.push((k, score, rep.is_degenerate(), keep));
            }
            Ok(out)
        })?;
        // single merge point, ascending feature order
        for (k, score, degenerate, keep) in computed {
            self.scores.set_degenerate(k, degenerate);
            self.scores
                .set_relevance(k, if degenerate { 0.0 } else { score });
            if let Some(rep) = keep {
                self.cache.insert(k, rep);
            }
        }
        Ok(())
    }

    /// Step 2: broadcast the pivot's representation and score every target
    /// feature against it. Targets must be ascending. Results are merged into
    /// the pairwise cache in ascending feature order and returned.
    pub fn broadcast_pivot(&mut self, pivot: usize, targets: &[usize]) -> Result<Vec<(usize, f64)>> {
        debug_assert!(targets.windows(2).all(|w| w[0] < w[1]));
        self.cache.pin(pivot);
        let pivot_rep = self.rep_of(pivot)?;
        if self.cache.get(pivot).is_none() {
            self.cache.insert(pivot, pivot_rep.clone());
        }
        let computed = self.run_shards(targets.len(), |range| {
            let mut out = Vec::with_capacity(range.len());
            for idx in range {
                let k = targets[idx];
                let rep = self.rep_of(k)?;
                let score = rep
                    .score(&pivot_rep)
                    .map_err(|e| Error::invalid(format!("scoring feature {k}: {e}")))?;
                let keep = self.cache.wants(k).then(|| rep.clone());
                out.push((k, score, keep));
            }
            Ok(out)
        })?;
        let mut pairs = Vec::with_capacity(computed.len());
        for (k, score, keep) in computed {
            self.scores.insert_pairwise(k, pivot, score);
            if let Some(rep) = keep {
                self.cache.insert(k, rep);
            }
            pairs.push((k, self.scores.pairwise(k, pivot).expect("just inserted")));
        }
        Ok(pairs)
    }

    /// Steps 3/4 support: for each candidate, the negative gradient at the
    /// given coefficients plus the correlation with the step direction,
    /// computed shard-parallel from cached pairwise scores and merged by
    /// ascending feature index.
    pub fn gradient_fanout(
        &self,
        active: &[usize],
        alpha: &[f64],
        dir: &[f64],
        candidates: &[usize],
    ) -> Result<Vec<GradientEntry>> {
        debug_assert_eq!(active.len(), alpha.len());
        debug_assert_eq!(active.len(), dir.len());
        let scores = &self.scores;
        self.run_shards(candidates.len(), |range| {
            let mut out = Vec::with_capacity(range.len());
            for idx in range {
                let k = candidates[idx];
                let mut gradient = scores.relevance()[k];
                let mut dir_corr = 0.0;
                for ((&i, &a), &d) in active.iter().zip(alpha).zip(dir) {
                    let q = scores
                        .pairwise(k, i)
                        .ok_or(Error::MissingScore(k, i))?;
                    gradient -= a * q;
                    dir_corr += d * q;
                }
                out.push(GradientEntry {
                    feature: k,
                    gradient,
                    dir_corr,
                });
            }
            Ok(out)
        })
    }
}

fn resolve_workers(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        requested
    }
}
