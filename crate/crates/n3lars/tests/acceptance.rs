//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `--nocapture` to see them).
//!
//! The oracles here are deliberately independent of the solver: coefficient
//! checks use a projected-gradient solver over an exact score matrix built
//! directly from kernel formulas, and approximation bounds compare factor
//! products against full centered Grams.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use n3lars::data::{generate_synthetic, Dataset, Output};
use n3lars::kernels::{
    center_normalize, default_basis, gaussian_gram, nystrom_factor, output_gram, BasisGrid,
};
use n3lars::metrics::redundancy_rate;
use n3lars::nhsic::{build_scores, nhsic_approx, nhsic_exact, NhsicScores};
use n3lars::parallel::ScoringEngine;
use n3lars::screening::mr_rank;
use n3lars::solver::{
    kkt_check, select_from_source, IdentityScores, SelectionPath,
};
use n3lars::{select, Config, EventKind};

// ---------------------------------------------------------------------------
// shared oracles and helpers
// ---------------------------------------------------------------------------

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Path sanity required of every run in this suite: strictly decreasing
/// breakpoints, non-negative coefficient snapshots, consistent shapes, and an
/// add-event budget of `m` (plus one re-entry allowance per drop).
fn validate_path(path: &SelectionPath, m: usize, label: &str) {
    for w in path.events.windows(2) {
        assert!(
            w[1].lambda < w[0].lambda,
            "{label}: lambda not strictly decreasing ({} -> {})",
            w[0].lambda,
            w[1].lambda
        );
    }
    let mut drops = 0;
    let mut adds = 0;
    for ev in &path.events {
        assert_eq!(ev.active.len(), ev.alpha.len(), "{label}: ragged snapshot");
        assert!(
            ev.alpha.iter().all(|a| *a >= 0.0),
            "{label}: negative coefficient at step {}",
            ev.step
        );
        match ev.kind {
            EventKind::Add => adds += 1,
            EventKind::Drop => drops += 1,
            EventKind::Terminate => {}
        }
    }
    assert!(
        adds <= m + drops,
        "{label}: {adds} add events exceed budget m = {m} with {drops} drops"
    );
    assert!(path.selected.len() <= m, "{label}: too many selected");
}

/// Exact NHSIC score problem (relevance vector and full pairwise matrix)
/// computed directly from kernel formulas, bypassing the engine and cache.
fn exact_score_problem(ds: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = ds.n_features();
    let grams: Vec<_> = (0..d)
        .map(|k| center_normalize(&gaussian_gram(ds.feature(k), 1.0).unwrap()))
        .collect();
    let ltil = center_normalize(&output_gram(ds, 1.0).unwrap());
    let rel: Vec<f64> = grams
        .iter()
        .map(|g| nhsic_exact(g, &ltil).unwrap())
        .collect();
    let mut q = vec![vec![0.0; d]; d];
    for k in 0..d {
        for j in 0..=k {
            let v = nhsic_exact(&grams[k], &grams[j]).unwrap();
            q[k][j] = v;
            q[j][k] = v;
        }
    }
    (rel, q)
}

/// Independent projected-gradient solver for
/// `min -2 r'a + a'Qa + lambda 1'a, a >= 0`.
fn nn_lasso_oracle(rel: &[f64], q: &[Vec<f64>], lambda: f64) -> Vec<f64> {
    let d = rel.len();
    let lips: f64 = 2.0
        * q.iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let eta = 1.0 / lips.max(1e-12);
    let mut alpha = vec![0.0; d];
    for _ in 0..500_000 {
        let mut max_move: f64 = 0.0;
        let mut next = vec![0.0; d];
        for k in 0..d {
            let qa: f64 = (0..d).map(|j| q[k][j] * alpha[j]).sum();
            let grad = -2.0 * rel[k] + 2.0 * qa + lambda;
            next[k] = (alpha[k] - eta * grad).max(0.0);
            max_move = max_move.max((next[k] - alpha[k]).abs());
        }
        alpha = next;
        if max_move < 1e-13 {
            break;
        }
    }
    alpha
}

fn standardized_normal(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let v = normal_vec(rng, n);
    let mean = v.sum() / n as f64;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    v.mapv(|x| x / sd)
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

/// Criterion 1: on the synthetic benchmark (n = 500, 50 base + 50 redundant
/// features), a 3-feature selection returns exactly one member of each
/// redundant pair in at least 9 of 10 seeds, within 60 seconds.
#[test]
fn criterion_1_synthetic_non_redundancy() {
    let started = Instant::now();
    let cfg = Config::nystrom();
    let mut successes = 0;
    for seed in 0..10u64 {
        let ds = generate_synthetic(500, 50, 50, 0.1, seed)
            .unwrap()
            .standardize();
        let path = select(&ds, 3, &cfg).unwrap();
        validate_path(&path, 3, &format!("criterion 1 seed {seed}"));
        let mut hits = [0usize; 50];
        let mut ok = path.selected.len() == 3;
        for &f in &path.selected {
            ok &= f % 50 < 3;
            hits[f % 50] += 1;
        }
        ok &= hits[0] == 1 && hits[1] == 1 && hits[2] == 1;
        successes += usize::from(ok);
    }
    let elapsed = started.elapsed();
    assert!(successes >= 9, "criterion 1: FAIL ({successes}/10 seeds)");
    assert!(
        elapsed.as_secs() < 60,
        "criterion 1: FAIL (runtime {elapsed:?} exceeds 60 s)"
    );
    println!("criterion 1: PASS ({successes}/10 seeds, {} ms)", elapsed.as_millis());
}

/// Criterion 2: with identity cross-feature scores the solver's selection
/// order equals the relevance ranking, exactly, for 50 random problems.
#[test]
fn criterion_2_identity_equals_mr_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let d = 30;
        let m = 10;
        let rel: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut scores = NhsicScores::new(d);
        for (k, &v) in rel.iter().enumerate() {
            scores.set_relevance(k, v);
        }
        let ranking = mr_rank(&scores, m).unwrap();
        let mut src = IdentityScores::new(rel);
        let path = select_from_source(&mut src, m, 1e-10, None).unwrap();
        validate_path(&path, m, &format!("criterion 2 trial {trial}"));
        assert_eq!(
            path.selected, ranking,
            "criterion 2: FAIL (trial {trial}: selection differs from ranking)"
        );
    }
    println!("criterion 2: PASS (50/50 identical orderings)");
}

/// Criterion 3: on 20 random exact-mode problems every breakpoint passes the
/// stationarity check at 1e-5 and the coefficients match an independent
/// projected-gradient solver within 1e-4.
#[test]
fn criterion_3_kkt_and_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cfg = Config::exact();
    let mut checked_events = 0;
    let mut worst_gap: f64 = 0.0;
    for trial in 0..20 {
        let d = rng.random_range(8..=20);
        let n = rng.random_range(30..=50);
        let mut x = Array2::zeros((d, n));
        for k in 0..d {
            x.row_mut(k).assign(&normal_vec(&mut rng, n));
        }
        // output depends nonlinearly on the first three features
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            y[i] = x[[0, i]] + 0.5 * x[[1, i]] * x[[1, i]] + 0.3 * x[[2, i]] + 0.2 * e;
        }
        let ds = Dataset::new(x, Output::Real(y), None)
            .unwrap()
            .standardize();
        let m = 5.min(d);
        let path = select(&ds, m, &cfg).unwrap();
        validate_path(&path, m, &format!("criterion 3 trial {trial}"));
        let (rel, q) = exact_score_problem(&ds);
        for (i, ev) in path.events.iter().enumerate() {
            let report = kkt_check(&ds, &path, i, &cfg).unwrap();
            assert!(
                report.pass,
                "criterion 3: FAIL (trial {trial} event {i}: active dev {:.2e}, inactive excess {:.2e})",
                report.max_active_deviation, report.max_inactive_excess
            );
            let oracle = nn_lasso_oracle(&rel, &q, ev.lambda);
            let mut full = vec![0.0; ds.n_features()];
            for (&f, &a) in ev.active.iter().zip(&ev.alpha) {
                full[f] = a;
            }
            for k in 0..ds.n_features() {
                let gap = (full[k] - oracle[k]).abs();
                worst_gap = worst_gap.max(gap);
                assert!(
                    gap <= 1e-4,
                    "criterion 3: FAIL (trial {trial} event {i} feature {k}: |path - oracle| = {gap:.2e})"
                );
            }
            checked_events += 1;
        }
    }
    println!(
        "criterion 3: PASS ({checked_events} breakpoints checked, worst coefficient gap {worst_gap:.2e})"
    );
}

/// Criterion 4: Nystrom fidelity. With the samples as basis the approximate
/// and exact scores agree to 1e-6; with the default 20-point grid on
/// standardized normal features (n = 200) the achieved error is measured and
/// held to the frozen regression bound of 1e-6 (observed ~2e-9).
#[test]
fn criterion_4_nystrom_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    // (a) exact recovery with the sample basis
    let n = 25;
    let mut worst_exact: f64 = 0.0;
    for _ in 0..100 {
        let u = normal_vec(&mut rng, n);
        let v = normal_vec(&mut rng, n);
        let factor_of = |w: &Array1<f64>| {
            let mut sorted = w.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let basis = BasisGrid::new(sorted).unwrap();
            nystrom_factor(w.view(), &basis, 1.0, 1e-12).unwrap()
        };
        let approx = nhsic_approx(&factor_of(&u), &factor_of(&v)).unwrap();
        let exact = nhsic_exact(
            &center_normalize(&gaussian_gram(u.view(), 1.0).unwrap()),
            &center_normalize(&gaussian_gram(v.view(), 1.0).unwrap()),
        )
        .unwrap();
        worst_exact = worst_exact.max((approx - exact).abs());
    }
    assert!(
        worst_exact <= 1e-6,
        "criterion 4: FAIL (sample-basis recovery error {worst_exact:.2e})"
    );

    // (b) default grid on standardized normal features, frozen bound
    let n = 200;
    let basis = default_basis();
    let mut worst_default: f64 = 0.0;
    for _ in 0..100 {
        let u = standardized_normal(&mut rng, n);
        let v = standardized_normal(&mut rng, n);
        let fu = nystrom_factor(u.view(), &basis, 1.0, 1e-10).unwrap();
        let fv = nystrom_factor(v.view(), &basis, 1.0, 1e-10).unwrap();
        let approx = nhsic_approx(&fu, &fv).unwrap();
        let exact = nhsic_exact(
            &center_normalize(&gaussian_gram(u.view(), 1.0).unwrap()),
            &center_normalize(&gaussian_gram(v.view(), 1.0).unwrap()),
        )
        .unwrap();
        worst_default = worst_default.max((approx - exact).abs());
    }
    assert!(
        worst_default <= 1e-6,
        "criterion 4: FAIL (default-grid error {worst_default:.2e} exceeds frozen bound 1e-6)"
    );
    println!(
        "criterion 4: PASS (sample-basis err {worst_exact:.2e}, default-grid err {worst_default:.2e})"
    );
}

/// Criterion 5: centering and normalization invariants over 1000 random
/// features, plus unit self-dependence in both modes.
#[test]
fn criterion_5_normalization_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let n = 50;
    let basis = default_basis();
    let mut worst_center: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    for trial in 0..1000 {
        // vary the distribution family and scale
        let u: Array1<f64> = match trial % 4 {
            0 => normal_vec(&mut rng, n),
            1 => Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..3.0))),
            2 => normal_vec(&mut rng, n).mapv(|v| v.exp()),
            _ => normal_vec(&mut rng, n).mapv(|v| 5.0 * v + 3.0),
        };
        let ktil = center_normalize(&gaussian_gram(u.view(), 1.0).unwrap());
        assert!(!ktil.is_degenerate(), "trial {trial} degenerate");
        let ones_quad: f64 = ktil.matrix().sum();
        worst_center = worst_center.max(ones_quad.abs());
        assert!(
            ones_quad.abs() <= 1e-8 * n as f64,
            "criterion 5: FAIL (centering residual {ones_quad:.2e})"
        );
        let norm = ktil.matrix().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_norm = worst_norm.max((norm - 1.0).abs());
        assert!(
            (norm - 1.0).abs() <= 1e-10,
            "criterion 5: FAIL (Frobenius norm {norm})"
        );
        let self_exact = nhsic_exact(&ktil, &ktil).unwrap();
        worst_self = worst_self.max((self_exact - 1.0).abs());
        assert!(
            (self_exact - 1.0).abs() <= 1e-8,
            "criterion 5: FAIL (exact self-score {self_exact})"
        );
        let f = nystrom_factor(u.view(), &basis, 1.0, 1e-10).unwrap();
        let self_approx = nhsic_approx(&f, &f).unwrap();
        worst_self = worst_self.max((self_approx - 1.0).abs());
        assert!(
            (self_approx - 1.0).abs() <= 1e-8,
            "criterion 5: FAIL (factor self-score {self_approx})"
        );
    }
    println!(
        "criterion 5: PASS (1000 features; worst centering {worst_center:.2e}, norm dev {worst_norm:.2e}, self-score dev {worst_self:.2e})"
    );
}

/// Criterion 6: the selection path is bit-identical for 1, 2 and 8 workers on
/// the full-size synthetic dataset, and the per-iteration wall time with 8
/// workers is lower than with 1.
#[test]
fn criterion_6_shard_invariance_and_scaling() {
    let ds = generate_synthetic(500, 1000, 1000, 0.1, 42)
        .unwrap()
        .standardize();
    let m = 5;
    let run = |workers: usize| -> (SelectionPath, f64) {
        let mut cfg = Config::nystrom();
        cfg.parallel.workers = workers;
        let mut engine = ScoringEngine::new(&ds, &cfg).unwrap();
        engine.score_all().unwrap();
        let t0 = Instant::now();
        let path = select_from_source(&mut engine, m, cfg.solver.tol, None).unwrap();
        let per_iter = t0.elapsed().as_secs_f64() / path.events.len().max(1) as f64;
        (path, per_iter)
    };
    let (path1, t1a) = run(1);
    let (path2, _) = run(2);
    let (path8, t8a) = run(8);
    validate_path(&path1, m, "criterion 6");
    assert_eq!(path1, path2, "criterion 6: FAIL (P=2 path differs from P=1)");
    assert_eq!(path1, path8, "criterion 6: FAIL (P=8 path differs from P=1)");
    // serialized forms agree bit for bit
    assert_eq!(path1.to_json(), path8.to_json());
    // direction-only timing claim, best of two runs to damp scheduler noise
    let (_, t1b) = run(1);
    let (_, t8b) = run(8);
    let t1 = t1a.min(t1b);
    let t8 = t8a.min(t8b);
    assert!(
        t8 < t1,
        "criterion 6: FAIL (per-iteration {:.1} ms at P=8 not below {:.1} ms at P=1)",
        t8 * 1e3,
        t1 * 1e3
    );
    println!(
        "criterion 6: PASS (paths identical; per-iteration {:.1} ms at P=1 vs {:.1} ms at P=8)",
        t1 * 1e3,
        t8 * 1e3
    );
}

/// Criterion 7: the solver's top-5 is less redundant than the maximum
/// relevance top-5 in at least 9 of 10 seeds, and an identical pair scores
/// exactly 0.5 under the pair-sum normalizer.
#[test]
fn criterion_7_red_ordering() {
    let cfg = Config::nystrom();
    let mut wins = 0;
    for seed in 0..10u64 {
        let ds = generate_synthetic(500, 50, 50, 0.1, seed)
            .unwrap()
            .standardize();
        let path = select(&ds, 5, &cfg).unwrap();
        validate_path(&path, 5, &format!("criterion 7 seed {seed}"));
        let scores = build_scores(&ds, &cfg).unwrap();
        let top = mr_rank(&scores, 5).unwrap();
        let red_solver = redundancy_rate(&ds, &path.selected).unwrap();
        let red_mr = redundancy_rate(&ds, &top).unwrap();
        wins += usize::from(red_solver < red_mr);
    }
    assert!(wins >= 9, "criterion 7: FAIL ({wins}/10 seeds)");

    // identical features score exactly 1/2: one pair, normalizer 1/(2*1)
    let mut x = Array2::zeros((2, 6));
    let row = Array1::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0]);
    x.row_mut(0).assign(&row);
    x.row_mut(1).assign(&row);
    let ds = Dataset::new(x, Output::Real(Array1::linspace(0.0, 1.0, 6)), None).unwrap();
    let red = redundancy_rate(&ds, &[0, 1]).unwrap();
    assert!(
        (red - 0.5).abs() < 1e-15,
        "criterion 7: FAIL (identical pair scored {red})"
    );
    println!("criterion 7: PASS ({wins}/10 seeds, identical pair = {red})");
}

/// Criterion 8: breakpoints strictly decrease and coefficients stay
/// non-negative across a mixed batch of runs (both modes, screening, and the
/// identity mock). The same validation also runs inside criteria 1-7.
#[test]
fn criterion_8_path_monotonicity() {
    let mut validated = 0;

    let ds = generate_synthetic(300, 20, 20, 0.1, 8).unwrap().standardize();
    for cfg in [Config::nystrom(), Config::exact()] {
        let path = select(&ds, 6, &cfg).unwrap();
        validate_path(&path, 6, "criterion 8 select");
        validated += 1;
    }
    let path = n3lars::screening::iterative_screen(&ds, 15, 4, &Config::nystrom()).unwrap();
    validate_path(&path, 4, "criterion 8 screened");
    validated += 1;

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..20 {
        let rel: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut src = IdentityScores::new(rel);
        let path = select_from_source(&mut src, 8, 1e-10, None).unwrap();
        validate_path(&path, 8, "criterion 8 identity");
        validated += 1;
    }

    // hsic measure variant (exact mode only)
    let mut cfg = Config::exact();
    cfg.measure = n3lars::Measure::Hsic;
    let path = select(&ds, 4, &cfg).unwrap();
    validate_path(&path, 4, "criterion 8 hsic");
    validated += 1;

    println!("criterion 8: PASS ({validated} paths validated)");
}
