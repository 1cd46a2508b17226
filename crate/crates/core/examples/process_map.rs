//! Exhaustive P-v map: every grid state's depth and its rank by distance to
//! the 1 mm target. Writes `pv_map.csv` and `depth_map.csv` if an output
//! directory is given.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example process_map
//! cargo run --release -p ded-qopt --example process_map -- 20 out/map20
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use ded_qopt::environment::{DepthCache, StateGrid};
use ded_qopt::export;
use ded_qopt::oracle::brute_force_rank;
use ded_qopt::thermal::{MaterialEnv, ThermalModel};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse().expect("grid size")).unwrap_or(10);
    let out: Option<PathBuf> = args.next().map(PathBuf::from);

    let grid = StateGrid::with_n(n);
    let cache = Arc::new(DepthCache::new(grid, ThermalModel::new(MaterialEnv::default()).unwrap()).unwrap());
    cache.warm_up().unwrap();
    let report = brute_force_rank(&cache, 1.0, 0.1).unwrap();

    // depth table, power down the rows, speed across
    print!("{:>8}", "P \\ v");
    for j in 0..n {
        print!("{:>8.1}", grid.speed_mmpm(j));
    }
    println!();
    for i in (0..n).rev() {
        print!("{:>8.1}", grid.power_w(i));
        for j in 0..n {
            let row = &report.rows[i * n + j];
            let mark = if row.rank <= 3 { '*' } else { ' ' };
            print!("{:>7.3}{mark}", row.depth_mm);
        }
        println!();
    }
    println!("\n* = top 3. {} of {} states within 0.1 mm of target.", report.band().len(), grid.num_states());
    for r in report.ranked().into_iter().take(5) {
        println!(
            "  rank {}  {}  P = {:.1} W  v = {:.1} mm/min  depth = {:.4} mm",
            r.rank, r.state, r.power_w, r.speed_mmpm, r.depth_mm
        );
    }

    if let Some(dir) = out {
        export::ensure_dir(&dir).unwrap();
        export::write_pv_map(&dir.join("pv_map.csv"), &report).unwrap();
        export::write_depth_map(&dir.join("depth_map.csv"), &cache).unwrap();
        println!("wrote {}", dir.display());
    }
}
