//! One Q-learning run with the reference hyperparameters, checked against the
//! exhaustive oracle.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example train_default
//! cargo run --release -p ded-qopt --example train_default -- 42   # seed
//! ```

use std::sync::Arc;

use ded_qopt::environment::{DepthCache, Environment, RewardConfig, StateGrid};
use ded_qopt::oracle::{brute_force_rank, validate_run, PassPolicy};
use ded_qopt::qlearn::{train, Hyperparams, Readout};
use ded_qopt::thermal::{MaterialEnv, ThermalModel};

fn main() {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(0);

    let model = ThermalModel::new(MaterialEnv::default()).unwrap();
    let cache = Arc::new(DepthCache::new(StateGrid::default(), model).unwrap());
    cache.warm_up().unwrap();
    let env = Environment::new(cache, RewardConfig::default()).unwrap();

    let hp = Hyperparams { seed, ..Hyperparams::default() };
    let run = train(&env, &hp).unwrap();
    let report = brute_force_rank(env.cache(), 1.0, 0.1).unwrap();
    let verdict = validate_run(&report, &run, 3, 0.05, PassPolicy::RankOrDepth).unwrap();

    let b = run.best;
    println!("seed {seed}: best {} P = {:.1} W, v = {:.1} mm/min, depth = {:.4} mm", b.state, b.power_w, b.speed_mmpm, b.depth_mm);
    println!("  oracle rank {} (top-3: {}), |depth - 1| = {:.4} mm", verdict.oracle_rank, verdict.within_top_k, verdict.depth_error_mm);

    let rewards = run.episode_rewards();
    let q = rewards.len() / 4;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    println!("  mean episode reward: first quarter {:.1}, last quarter {:.1}", mean(&rewards[..q]), mean(&rewards[rewards.len() - q..]));
    let early = run.episodes.iter().filter(|e| e.terminated_early).count();
    println!("  {early} of {} episodes reached the termination tolerance", run.episodes.len());

    let (row_max, _) = run.q.best_state(&run.grid, Readout::RowMax);
    println!("  row-max readout would pick {row_max}");
}
