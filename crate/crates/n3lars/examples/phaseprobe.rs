//! Scratch probe: score_all timing vs worker count and cache budget.
use n3lars::data::generate_synthetic;
use n3lars::parallel::ScoringEngine;
use n3lars::Config;
use std::time::Instant;

fn main() {
    let ds = generate_synthetic(300, 500, 500, 0.1, 7).unwrap().standardize();
    for budget in [u64::MAX, 0] {
        for workers in [1usize, 2] {
            let mut cfg = Config::nystrom();
            cfg.parallel.workers = workers;
            cfg.parallel.cache_budget_bytes = budget;
            let mut engine = ScoringEngine::new(&ds, &cfg).unwrap();
            // warm
            engine.score_all().unwrap();
            let mut best = f64::INFINITY;
            for _ in 0..5 {
                let t = Instant::now();
                engine.score_all().unwrap();
                best = best.min(t.elapsed().as_secs_f64());
            }
            println!("budget={budget:>20} workers={workers}: best score_all = {:.1} ms", best * 1e3);
        }
    }
}
