//! Compares the two reward shapes over the same seeds: how often the learned
//! best state is within 0.05 mm of target and in the oracle top 3.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example reward_variants
//! ```

use std::sync::Arc;

use ded_qopt::environment::{DepthCache, Environment, RewardConfig, RewardVariant, StateGrid};
use ded_qopt::oracle::{brute_force_rank, validate_run, PassPolicy};
use ded_qopt::qlearn::{train, Hyperparams, Readout};
use ded_qopt::thermal::{MaterialEnv, ThermalModel};

const SEEDS: u64 = 20;

fn main() {
    let model = ThermalModel::new(MaterialEnv::default()).unwrap();
    let cache = Arc::new(DepthCache::new(StateGrid::default(), model).unwrap());
    cache.warm_up().unwrap();
    let report = brute_force_rank(&cache, 1.0, 0.1).unwrap();

    println!("reward          readout    within 0.05 mm   oracle top-3");
    for variant in [RewardVariant::InverseError, RewardVariant::Paper] {
        let env = Environment::new(Arc::clone(&cache), RewardConfig { variant, ..RewardConfig::default() }).unwrap();
        for readout in [Readout::Successor, Readout::RowMax] {
            let (mut near, mut top) = (0, 0);
            for seed in 0..SEEDS {
                let run = train(&env, &Hyperparams { seed, readout, ..Hyperparams::default() }).unwrap();
                let v = validate_run(&report, &run, 3, 0.05, PassPolicy::RankOnly).unwrap();
                near += v.within_depth_tol as u32;
                top += v.within_top_k as u32;
            }
            println!("{:<15} {:<10} {near:>8}/{SEEDS}       {top:>6}/{SEEDS}", variant.name(), readout.name());
        }
    }
}
