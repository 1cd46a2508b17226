//! Replicated sweep of one hyperparameter, with a trend test on each mean
//! convergence curve. Writes the full output tree when a directory is given.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example hyperparameter_sweep -- epsilon
//! cargo run --release -p ded-qopt --example hyperparameter_sweep -- n out/sweep_n
//! ```

use std::path::PathBuf;

use ded_qopt::config::RunConfig;
use ded_qopt::experiments::{linear_trend, run_sweep, CachePool, SweepSpec, SweptParam};
use ded_qopt::export;

fn main() {
    let mut args = std::env::args().skip(1);
    let param: SweptParam = match args.next().unwrap_or_else(|| "epsilon".into()).parse() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let out = args.next().map(PathBuf::from);

    let spec = SweepSpec::new(RunConfig::default(), param);
    let outcome = run_sweep(&spec, &CachePool::new()).unwrap();

    println!("{:<16} {:>14} {:>12} {:>10} {:>8}", "value", "final reward", "slope", "p(>0)", "pass");
    for p in &outcome.points {
        let trend = linear_trend(&p.curve.mean);
        let passed = p.summaries.iter().filter(|s| s.verdict.passed).count();
        println!(
            "{:<16} {:>14.2} {:>12.4} {:>10.4} {:>5}/{}",
            param.label(p.value),
            p.mean_final_reward(),
            trend.slope,
            trend.p_positive,
            passed,
            p.summaries.len()
        );
    }

    if let Some(dir) = out {
        export::write_sweep(&dir, &outcome).unwrap();
        println!("wrote {}", dir.display());
    }
}
