//! Scratch probe for freezing test bounds; not part of the deliverable tests.

use n3lars::data::generate_synthetic;
use n3lars::kernels::{center_normalize, default_basis, gaussian_gram, nystrom_factor};
use n3lars::nhsic::{nhsic_approx, nhsic_exact};
use n3lars::{select, Config};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

fn unit_std(v: Array1<f64>) -> Array1<f64> {
    let n = v.len();
    let mean = v.sum() / n as f64;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    v.mapv(|x| x / sd)
}

fn main() {
    // criterion 1: success across seeds
    let t0 = Instant::now();
    let mut successes = 0;
    for seed in 0..10u64 {
        let ds = generate_synthetic(500, 50, 50, 0.1, seed).unwrap().standardize();
        let path = select(&ds, 3, &Config::nystrom()).unwrap();
        let mut hits = [0usize; 50];
        let mut ok = path.selected.len() == 3;
        for &f in &path.selected {
            hits[f % 50] += 1;
            ok &= f % 50 < 3;
        }
        ok &= hits[0] == 1 && hits[1] == 1 && hits[2] == 1;
        println!("seed {seed}: selected {:?} ok={ok}", path.selected);
        successes += usize::from(ok);
    }
    println!("criterion1: {successes}/10 in {:?}", t0.elapsed());

    // criterion 4b: default-grid NHSIC error on standardized normals, n=200
    let n = 200;
    let basis = default_basis();
    let mut max_score_err: f64 = 0.0;
    let mut max_gram_err: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..50 {
        let u = unit_std(Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal))));
        let v = unit_std(Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal))));
        let fu = nystrom_factor(u.view(), &basis, 1.0, 1e-10).unwrap();
        let fv = nystrom_factor(v.view(), &basis, 1.0, 1e-10).unwrap();
        let eu = center_normalize(&gaussian_gram(u.view(), 1.0).unwrap());
        let ev = center_normalize(&gaussian_gram(v.view(), 1.0).unwrap());
        let score_err = (nhsic_approx(&fu, &fv).unwrap() - nhsic_exact(&eu, &ev).unwrap()).abs();
        max_score_err = max_score_err.max(score_err);
        let diff = &fu.induced_gram() - eu.matrix();
        let gram_err = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        max_gram_err = max_gram_err.max(gram_err);
    }
    println!("criterion4b: max pairwise score err {max_score_err:.3e}, max gram err {max_gram_err:.3e}");

    // criterion 7 probe: RED ordering across seeds
    let mut wins = 0;
    for seed in 0..10u64 {
        let ds = generate_synthetic(500, 50, 50, 0.1, seed).unwrap().standardize();
        let cfg = Config::nystrom();
        let path = select(&ds, 5, &cfg).unwrap();
        let scores = n3lars::nhsic::build_scores(&ds, &cfg).unwrap();
        let top = n3lars::screening::mr_rank(&scores, 5).unwrap();
        let red_lars = n3lars::metrics::redundancy_rate(&ds, &path.selected).unwrap();
        let red_mr = n3lars::metrics::redundancy_rate(&ds, &top).unwrap();
        println!("seed {seed}: red_lars={red_lars:.4} red_mr={red_mr:.4} lars={:?} mr={top:?}", path.selected);
        wins += usize::from(red_lars < red_mr);
    }
    println!("criterion7: {wins}/10");
}
