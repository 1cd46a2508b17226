//! Steady-state melt-pool depth at a few (P, v) points, with the time the
//! steady-state search settled at.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example depth_anchor
//! cargo run --release -p ded-qopt --example depth_anchor -- 750 500
//! ```

use std::time::Instant;

use ded_qopt::thermal::{MaterialEnv, ThermalModel};
use ded_qopt::units::mmpm_to_m_s;

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numbers: power W, speed mm/min"))
        .collect();
    let points = match args.as_slice() {
        [p, v] => vec![(*p, *v)],
        _ => vec![(1000.0, 400.0), (500.0, 700.0), (8000.0 / 9.0, 1700.0 / 3.0)],
    };

    let model = ThermalModel::new(MaterialEnv::default()).unwrap();
    for (p, v) in points {
        let t = Instant::now();
        let r = model.melt_pool_depth(p, mmpm_to_m_s(v)).unwrap();
        println!(
            "P = {p:7.2} W  v = {v:6.2} mm/min  depth = {:.4} mm  converged = {}  t = {} s  ({:.1} ms)",
            r.depth_mm,
            r.converged,
            r.t_used,
            t.elapsed().as_secs_f64() * 1e3
        );
    }

    // The literal tabulated constants never melt the substrate.
    let tab = ThermalModel::new(MaterialEnv::tabulated()).unwrap();
    let r = tab.melt_pool_depth(1000.0, mmpm_to_m_s(400.0)).unwrap();
    println!("tabulated constants at 1000 W / 400 mm/min: depth = {:.4} mm", r.depth_mm);
}
