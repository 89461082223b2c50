//! Maximum-relevance ranking (the MR-NHSIC baseline) and the iterative
//! screen-then-select pipeline: rank by relevance, keep the top `m`, then run
//! the full solver on the survivors for `m_final` features.

use std::io::Write;

use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nhsic::NhsicScores;
use crate::parallel::ScoringEngine;
use crate::solver::{self, SelectionPath};

/// Top-`m` feature indices by descending relevance; ties go to the lowest
/// index. Degenerate features are excluded from the ranking entirely.
pub fn mr_rank(scores: &NhsicScores, m: usize) -> Result<Vec<usize>> {
    let usable = scores.usable_count();
    if m == 0 || m > usable {
        return Err(Error::invalid(format!(
            "m = {m} must be between 1 and the usable feature count {usable}"
        )));
    }
    let rel = scores.relevance();
    let mut idx: Vec<usize> = (0..scores.len())
        .filter(|&k| !scores.is_degenerate(k))
        .collect();
    // stable sort: equal relevances keep ascending index order
    idx.sort_by(|&a, &b| rel[b].partial_cmp(&rel[a]).unwrap());
    idx.truncate(m);
    Ok(idx)
}

/// Export `rank,feature_index,relevance` rows for a ranking.
pub fn write_ranking_csv<W: Write>(
    scores: &NhsicScores,
    ranking: &[usize],
    w: &mut W,
) -> Result<()> {
    writeln!(w, "rank,feature_index,relevance")?;
    for (rank, &k) in ranking.iter().enumerate() {
        writeln!(w, "{},{},{}", rank + 1, k, scores.relevance()[k])?;
    }
    Ok(())
}

/// Screen to the MR top-`m`, then select `m_final` features among them with
/// the full solver. With `m` equal to the usable feature count the screening
/// is a no-op and the path matches a plain selection.
pub fn iterative_screen(
    ds: &Dataset,
    m: usize,
    m_final: usize,
    cfg: &Config,
) -> Result<SelectionPath> {
    if m_final > m {
        return Err(Error::invalid(format!(
            "m_final = {m_final} cannot exceed the screen count m = {m}"
        )));
    }
    let mut engine = ScoringEngine::new(ds, cfg)?;
    engine.score_all()?;
    let candidates = mr_rank(engine.scores(), m)?;
    solver::select_from_source(&mut engine, m_final, cfg.solver.tol, Some(&candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::solver::{select, select_from_source, IdentityScores, ScoreSource};

    fn scores_from(rel: &[f64], degenerate: &[usize]) -> NhsicScores {
        let mut s = NhsicScores::new(rel.len());
        for (k, &v) in rel.iter().enumerate() {
            s.set_relevance(k, v);
        }
        for &k in degenerate {
            s.set_degenerate(k, true);
        }
        s
    }

    #[test]
    fn ranks_by_descending_relevance() {
        let s = scores_from(&[0.1, 0.9, 0.5], &[]);
        assert_eq!(mr_rank(&s, 2).unwrap(), vec![1, 2]);
        assert_eq!(mr_rank(&s, 3).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let s = scores_from(&[0.5, 0.5, 0.5], &[]);
        assert_eq!(mr_rank(&s, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn degenerate_features_excluded() {
        let s = scores_from(&[0.9, 0.0, 0.5], &[1]);
        assert_eq!(mr_rank(&s, 2).unwrap(), vec![0, 2]);
        // usable count is 2, so m = 3 is out of range
        assert!(mr_rank(&s, 3).is_err());
    }

    #[test]
    fn ranking_is_valid_prefix() {
        let s = scores_from(&[0.3, 0.1, 0.7, 0.2, 0.6], &[]);
        let r = mr_rank(&s, 5).unwrap();
        let mut sorted = r.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        assert!(r.iter().all(|&k| k < 5));
    }

    #[test]
    fn identity_scores_make_selection_equal_ranking() {
        // cross-feature independence: selection order is the MR order
        let rel = vec![0.42, 0.87, 0.11, 0.65, 0.3];
        let s = scores_from(&rel, &[]);
        let ranking = mr_rank(&s, 4).unwrap();
        let mut src = IdentityScores::new(rel);
        let path = select_from_source(&mut src, 4, 1e-10, None).unwrap();
        assert_eq!(path.selected, ranking);
    }

    #[test]
    fn screen_with_full_width_matches_plain_select() {
        let ds = generate_synthetic(100, 8, 4, 0.1, 17).unwrap().standardize();
        let cfg = Config::nystrom();
        let screened = iterative_screen(&ds, 12, 3, &cfg).unwrap();
        let plain = select(&ds, 3, &cfg).unwrap();
        assert_eq!(screened, plain);
    }

    #[test]
    fn screened_selection_is_subset_of_ranking() {
        let ds = generate_synthetic(150, 10, 5, 0.1, 23).unwrap().standardize();
        let cfg = Config::nystrom();
        let mut engine = ScoringEngine::new(&ds, &cfg).unwrap();
        engine.score_all().unwrap();
        let top = mr_rank(engine.scores(), 6).unwrap();
        let path = iterative_screen(&ds, 6, 6, &cfg).unwrap();
        assert!(path.selected.iter().all(|f| top.contains(f)));
        assert!(!path.selected.is_empty());
        let _ = engine.relevance(0);
    }

    #[test]
    fn mr_keeps_redundant_twins_solver_does_not() {
        // the MR top-6 contains both members of redundant pairs, the solver
        // path of length 3 picks one per pair
        let ds = generate_synthetic(500, 50, 50, 0.1, 3).unwrap().standardize();
        let cfg = Config::nystrom();
        let mut engine = ScoringEngine::new(&ds, &cfg).unwrap();
        engine.score_all().unwrap();
        let top6 = mr_rank(engine.scores(), 6).unwrap();
        let mut pair_count = [0usize; 50];
        for &f in &top6 {
            pair_count[f % 50] += 1;
        }
        assert!(
            (0..3).any(|b| pair_count[b] == 2),
            "expected a redundant pair in the MR top-6, got {top6:?}"
        );
        let path = select_from_source(&mut engine, 3, cfg.solver.tol, None).unwrap();
        let mut solver_pairs = [0usize; 50];
        for &f in &path.selected {
            solver_pairs[f % 50] += 1;
        }
        assert!(solver_pairs.iter().all(|&c| c <= 1), "{:?}", path.selected);
    }
}
