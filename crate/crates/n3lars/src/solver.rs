//! Non-negative least-angle regression over dependence scores.
//!
//! The solver walks the regularization path of
//! `min |Ltil - sum_k alpha_k Ktil_k|_F^2 + lambda |alpha|_1, alpha >= 0`
//! expressed purely through scores: relevance `r_k` (feature vs output) and
//! pairwise `Q_kj` (feature vs feature). The negative gradient of half the
//! loss is `c_k = r_k - sum_i alpha_i Q_ki`; active features share a common
//! level `c` (equicorrelation) which maps to the penalty via `lambda = 2 c`.
//!
//! Each iteration moves the active coefficients along `d = Q_A^{-1} 1`, so
//! active gradients fall at unit rate, until the first of three events: an
//! inactive feature catches up (add), an active coefficient hits zero (drop),
//! or the common level reaches zero (terminate at the unregularized optimum).

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::parallel::{GradientEntry, ScoringEngine};

/// Source of relevance and pairwise dependence scores for the solver.
///
/// The engine-backed implementation computes pairwise scores lazily, one
/// broadcast per pivot, and fans gradient evaluation out across workers.
/// Test implementations can serve scores from a fixed matrix.
pub trait ScoreSource {
    fn feature_count(&self) -> usize;
    fn relevance(&self, k: usize) -> f64;
    fn is_degenerate(&self, k: usize) -> bool;

    /// Make `pairwise(k, pivot)` available for every `k` in `candidates`.
    fn broadcast_pivot(&mut self, pivot: usize, candidates: &[usize]) -> Result<()>;

    fn pairwise(&self, k: usize, j: usize) -> Result<f64>;

    /// Negative gradient and direction correlation for every candidate:
    /// `gradient = r_k - sum_i alpha_i Q_ki`, `dir_corr = sum_i dir_i Q_ki`.
    fn fanout(
        &self,
        active: &[usize],
        alpha: &[f64],
        dir: &[f64],
        candidates: &[usize],
    ) -> Result<Vec<GradientEntry>> {
        candidates
            .iter()
            .map(|&k| {
                let mut gradient = self.relevance(k);
                let mut dir_corr = 0.0;
                for ((&i, &a), &d) in active.iter().zip(alpha).zip(dir) {
                    let q = self.pairwise(k, i)?;
                    gradient -= a * q;
                    dir_corr += d * q;
                }
                Ok(GradientEntry { feature: k, gradient, dir_corr })
            })
            .collect()
    }
}

impl ScoreSource for ScoringEngine<'_> {
    fn feature_count(&self) -> usize {
        self.scores().len()
    }

    fn relevance(&self, k: usize) -> f64 {
        self.scores().relevance()[k]
    }

    fn is_degenerate(&self, k: usize) -> bool {
        self.scores().is_degenerate(k)
    }

    fn broadcast_pivot(&mut self, pivot: usize, candidates: &[usize]) -> Result<()> {
        ScoringEngine::broadcast_pivot(self, pivot, candidates).map(|_| ())
    }

    fn pairwise(&self, k: usize, j: usize) -> Result<f64> {
        self.scores().pairwise(k, j).ok_or(Error::MissingScore(k, j))
    }

    fn fanout(
        &self,
        active: &[usize],
        alpha: &[f64],
        dir: &[f64],
        candidates: &[usize],
    ) -> Result<Vec<GradientEntry>> {
        self.gradient_fanout(active, alpha, dir, candidates)
    }
}

/// Score source with identity cross-feature scores: every feature is
/// independent of every other. Under it the selection order provably equals
/// the plain relevance ranking.
#[derive(Debug, Clone)]
pub struct IdentityScores {
    relevance: Vec<f64>,
}

impl IdentityScores {
    pub fn new(relevance: Vec<f64>) -> Self {
        Self { relevance }
    }
}

impl ScoreSource for IdentityScores {
    fn feature_count(&self) -> usize {
        self.relevance.len()
    }

    fn relevance(&self, k: usize) -> f64 {
        self.relevance[k]
    }

    fn is_degenerate(&self, _k: usize) -> bool {
        false
    }

    fn broadcast_pivot(&mut self, _pivot: usize, _candidates: &[usize]) -> Result<()> {
        Ok(())
    }

    fn pairwise(&self, k: usize, j: usize) -> Result<f64> {
        Ok(if k == j { 1.0 } else { 0.0 })
    }
}

/// Active set, coefficients, and the score matrix over the active features.
#[derive(Debug, Clone)]
pub struct SolverState {
    active: Vec<usize>,
    alpha: Vec<f64>,
    q: Array2<f64>,
}

impl SolverState {
    fn new() -> Self {
        Self {
            active: Vec::new(),
            alpha: Vec::new(),
            q: Array2::zeros((0, 0)),
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn q_active(&self) -> &Array2<f64> {
        &self.q
    }

    fn len(&self) -> usize {
        self.active.len()
    }

    /// Append a feature; `q_row` holds its scores against the existing active
    /// features in order, followed by its self-score.
    fn push(&mut self, feature: usize, q_row: &[f64]) {
        let k = self.len();
        debug_assert_eq!(q_row.len(), k + 1);
        let mut q = Array2::zeros((k + 1, k + 1));
        q.slice_mut(ndarray::s![..k, ..k]).assign(&self.q);
        for (i, &v) in q_row[..k].iter().enumerate() {
            q[[k, i]] = v;
            q[[i, k]] = v;
        }
        q[[k, k]] = q_row[k];
        self.q = q;
        self.active.push(feature);
        self.alpha.push(0.0);
    }

    fn remove(&mut self, pos: usize) {
        let k = self.len();
        let keep: Vec<usize> = (0..k).filter(|&i| i != pos).collect();
        let mut q = Array2::zeros((k - 1, k - 1));
        for (ri, &i) in keep.iter().enumerate() {
            for (rj, &j) in keep.iter().enumerate() {
                q[[ri, rj]] = self.q[[i, j]];
            }
        }
        self.q = q;
        self.active.remove(pos);
        self.alpha.remove(pos);
    }

    /// Equiangular direction `Q_A^{-1} 1`; `None` when the active score
    /// matrix is not positive definite.
    fn direction(&self) -> Option<Vec<f64>> {
        linalg::cholesky_solve(self.q.view(), &vec![1.0; self.len()])
    }
}

/// Path event kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Add,
    Drop,
    Terminate,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EventKind::Add => "add",
            EventKind::Drop => "drop",
            EventKind::Terminate => "terminate",
        };
        f.write_str(s)
    }
}

/// One breakpoint of the regularization path, with the full coefficient
/// snapshot over the active set at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub step: usize,
    pub kind: EventKind,
    /// Added or dropped feature; `None` for terminate events.
    pub feature: Option<usize>,
    pub lambda: f64,
    pub active: Vec<usize>,
    pub alpha: Vec<f64>,
}

/// Ordered add/drop events with penalty breakpoints and the final selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPath {
    pub events: Vec<PathEvent>,
    pub selected: Vec<usize>,
}

impl SelectionPath {
    pub fn add_event_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Add).count()
    }

    /// Largest and smallest breakpoints, when any event exists.
    pub fn lambda_range(&self) -> Option<(f64, f64)> {
        let first = self.events.first()?.lambda;
        let last = self.events.last()?.lambda;
        Some((first, last))
    }

    /// Long-format CSV: one row per (event, active feature).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,kind,lambda,feature,alpha")?;
        for ev in &self.events {
            if ev.active.is_empty() {
                writeln!(w, "{},{},{},,", ev.step, ev.kind, ev.lambda)?;
            }
            for (&f, &a) in ev.active.iter().zip(&ev.alpha) {
                writeln!(w, "{},{},{},{},{}", ev.step, ev.kind, ev.lambda, f, a)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serialization")
    }
}

/// Select up to `m` features from a standardized dataset, tracing the path.
pub fn select(ds: &Dataset, m: usize, cfg: &Config) -> Result<SelectionPath> {
    let mut engine = ScoringEngine::new(ds, cfg)?;
    engine.score_all()?;
    select_from_source(&mut engine, m, cfg.solver.tol, None)
}

/// As [`select`], restricted to a candidate subset (screening support).
pub fn select_restricted(
    ds: &Dataset,
    m: usize,
    cfg: &Config,
    candidates: &[usize],
) -> Result<SelectionPath> {
    let mut engine = ScoringEngine::new(ds, cfg)?;
    engine.score_all()?;
    select_from_source(&mut engine, m, cfg.solver.tol, Some(candidates))
}

/// The LARS loop over an arbitrary score source. `candidates` restricts the
/// eligible features; `None` means all of them. Degenerate features are
/// excluded either way.
pub fn select_from_source<S: ScoreSource>(
    source: &mut S,
    m: usize,
    tol: f64,
    candidates: Option<&[usize]>,
) -> Result<SelectionPath> {
    let d = source.feature_count();
    let mut eligible: Vec<usize> = match candidates {
        Some(c) => {
            let mut v: Vec<usize> = c.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&k| k >= d) {
                return Err(Error::invalid(format!("candidate {bad} out of range")));
            }
            v
        }
        None => (0..d).collect(),
    };
    eligible.retain(|&k| !source.is_degenerate(k));
    if m < 1 || m > eligible.len() {
        return Err(Error::invalid(format!(
            "m = {m} must be between 1 and the usable feature count {}",
            eligible.len()
        )));
    }

    let started = Instant::now();
    let mut events: Vec<PathEvent> = Vec::new();
    let mut state = SolverState::new();
    let mut excluded: BTreeSet<usize> = BTreeSet::new();

    let record = |events: &mut Vec<PathEvent>,
                      state: &SolverState,
                      kind: EventKind,
                      feature: Option<usize>,
                      lambda: f64| {
        let step = events.len();
        log::info!(
            "step={} pivot={} lambda={} elapsed_ms={}",
            step,
            feature.map_or(-1i64, |f| f as i64),
            lambda,
            started.elapsed().as_millis()
        );
        events.push(PathEvent {
            step,
            kind,
            feature,
            lambda,
            active: state.active().to_vec(),
            alpha: state.alpha().to_vec(),
        });
    };

    // first pivot: highest relevance, ties to the lowest index
    loop {
        let first = eligible
            .iter()
            .filter(|k| !excluded.contains(k))
            .copied()
            .fold(None::<(usize, f64)>, |best, k| {
                let r = source.relevance(k);
                match best {
                    Some((_, br)) if br >= r => best,
                    _ if r > tol => Some((k, r)),
                    _ => best,
                }
            });
        let Some((j, r)) = first else {
            // nothing is positively correlated with the output
            record(&mut events, &state, EventKind::Terminate, None, 0.0);
            return Ok(SelectionPath { events, selected: vec![] });
        };
        if try_enter(source, &mut state, &mut excluded, &eligible, j, tol)? {
            record(&mut events, &state, EventKind::Add, Some(j), 2.0 * r);
            break;
        }
    }

    while state.len() < m {
        // common correlation level, recomputed from the coefficients
        let zeros = vec![0.0; state.len()];
        let active_entries =
            source.fanout(state.active(), state.alpha(), &zeros, state.active())?;
        let c_common = active_entries.iter().map(|e| e.gradient).sum::<f64>()
            / state.len() as f64;
        if c_common <= tol {
            record(&mut events, &state, EventKind::Terminate, None, 2.0 * c_common);
            break;
        }

        let Some(dir) = state.direction() else {
            // the active score matrix lost positive definiteness; stop honestly
            log::warn!("active-set system became singular; terminating path early");
            record(&mut events, &state, EventKind::Terminate, None, 2.0 * c_common);
            break;
        };

        let inactive: Vec<usize> = eligible
            .iter()
            .filter(|k| !excluded.contains(k) && !state.active().contains(k))
            .copied()
            .collect();
        let entries = source.fanout(state.active(), state.alpha(), &dir, &inactive)?;

        // candidate steps: (mu, priority, feature) with drop < join < zero on ties
        let mut best: Option<(f64, u8, usize, Step)> = None;
        let consider = |cand: (f64, u8, usize, Step), best: &mut Option<(f64, u8, usize, Step)>| {
            let better = match best {
                None => true,
                Some((mu, pr, ft, _)) => {
                    (cand.0, cand.1, cand.2) < (*mu, *pr, *ft)
                }
            };
            if better {
                *best = Some(cand);
            }
        };
        consider((c_common, 2, usize::MAX, Step::Zero), &mut best);
        for (pos, (&a, &dv)) in state.alpha().iter().zip(&dir).enumerate() {
            if dv < 0.0 {
                consider((-a / dv, 0, state.active()[pos], Step::Drop(pos)), &mut best);
            }
        }
        for e in &entries {
            let denom = 1.0 - e.dir_corr;
            if denom > tol {
                let mu = (c_common - e.gradient) / denom;
                if mu > tol {
                    consider((mu, 1, e.feature, Step::Join(e.feature)), &mut best);
                }
            }
        }
        let (mu, _, _, step) = best.expect("zero-correlation candidate always present");

        state
            .alpha
            .iter_mut()
            .zip(&dir)
            .for_each(|(a, &dv)| *a = (*a + mu * dv).max(0.0));
        let c_next = if matches!(step, Step::Zero) { 0.0 } else { c_common - mu };

        match step {
            Step::Zero => {
                record(&mut events, &state, EventKind::Terminate, None, 0.0);
                break;
            }
            Step::Drop(pos) => {
                let dropped = state.active()[pos];
                state.alpha[pos] = 0.0;
                state.remove(pos);
                record(&mut events, &state, EventKind::Drop, Some(dropped), 2.0 * c_next);
            }
            Step::Join(feature) => {
                if try_enter(source, &mut state, &mut excluded, &eligible, feature, tol)? {
                    record(&mut events, &state, EventKind::Add, Some(feature), 2.0 * c_next);
                }
                // a rejected join leaves no event; the path continues at the
                // next breakpoint with the feature excluded
            }
        }
    }

    let selected = state.active().to_vec();
    Ok(SelectionPath { events, selected })
}

enum Step {
    Zero,
    Drop(usize),
    Join(usize),
}

/// Broadcast the pivot, extend the active set, and validate the new
/// direction. A pivot whose entry makes the system singular or whose own
/// direction component is non-positive is rejected as redundant with the
/// active set and permanently excluded from this run.
fn try_enter<S: ScoreSource>(
    source: &mut S,
    state: &mut SolverState,
    excluded: &mut BTreeSet<usize>,
    eligible: &[usize],
    j: usize,
    tol: f64,
) -> Result<bool> {
    source.broadcast_pivot(j, eligible)?;
    let mut q_row = Vec::with_capacity(state.len() + 1);
    for &i in state.active() {
        q_row.push(source.pairwise(j, i)?);
    }
    q_row.push(source.pairwise(j, j)?);
    state.push(j, &q_row);
    let ok = state
        .direction()
        .is_some_and(|dir| dir[state.len() - 1] > tol);
    if !ok {
        state.remove(state.len() - 1);
        excluded.insert(j);
        log::warn!("feature {j} rejected: redundant with the active set");
    }
    Ok(ok)
}

/// Stationarity report at one path breakpoint: active gradients must sit on
/// the common level `lambda / 2`, inactive ones must not exceed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub lambda: f64,
    pub max_active_deviation: f64,
    pub max_inactive_excess: f64,
    pub pass: bool,
}

/// Tolerance for a PASS verdict.
pub const KKT_TOL: f64 = 1e-5;

/// Check stationarity for an explicit (active, alpha, lambda) triple over the
/// candidate features.
pub fn kkt_check_state<S: ScoreSource>(
    source: &mut S,
    active: &[usize],
    alpha: &[f64],
    lambda: f64,
    candidates: &[usize],
) -> Result<KktReport> {
    for &i in active {
        source.broadcast_pivot(i, candidates)?;
    }
    let zeros = vec![0.0; active.len()];
    let entries = source.fanout(active, alpha, &zeros, candidates)?;
    let mut max_active_deviation: f64 = 0.0;
    let mut max_inactive_excess: f64 = f64::NEG_INFINITY;
    for e in &entries {
        let stat = 2.0 * e.gradient - lambda;
        if active.contains(&e.feature) {
            max_active_deviation = max_active_deviation.max(stat.abs());
        } else {
            max_inactive_excess = max_inactive_excess.max(stat);
        }
    }
    if max_inactive_excess == f64::NEG_INFINITY {
        max_inactive_excess = 0.0;
    }
    let pass = max_active_deviation <= KKT_TOL && max_inactive_excess <= KKT_TOL;
    Ok(KktReport {
        lambda,
        max_active_deviation,
        max_inactive_excess,
        pass,
    })
}

/// Check stationarity at a recorded path event, rebuilding scores from the
/// dataset and config.
pub fn kkt_check(
    ds: &Dataset,
    path: &SelectionPath,
    event_index: usize,
    cfg: &Config,
) -> Result<KktReport> {
    let ev = path
        .events
        .get(event_index)
        .ok_or_else(|| Error::invalid(format!("no event {event_index}")))?;
    let mut engine = ScoringEngine::new(ds, cfg)?;
    engine.score_all()?;
    let candidates: Vec<usize> = (0..engine.scores().len())
        .filter(|&k| !engine.scores().is_degenerate(k))
        .collect();
    kkt_check_state(&mut engine, &ev.active, &ev.alpha, ev.lambda, &candidates)
}
