//! Fits the laser absorptivity of the thermal model to reference melt-pool
//! depths by least squares, holding every other constant fixed.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example calibrate
//! cargo run --release -p ded-qopt --example calibrate -- 0.5   # σ_L in mm
//! ```

use ded_qopt::thermal::{MaterialEnv, ThermalModel};
use ded_qopt::units::{mm_to_m, mmpm_to_m_s};

/// (power W, speed mm/min, depth mm)
const REFERENCE: [(f64, f64, f64); 3] = [
    (1000.0, 400.0, 1.262),
    (500.0, 700.0, 0.506),
    (8000.0 / 9.0, 1700.0 / 3.0, 1.0045),
];

fn sse(env: MaterialEnv) -> f64 {
    let model = ThermalModel::new(env).expect("valid material");
    REFERENCE
        .iter()
        .map(|&(p, v, target)| {
            let d = model.melt_pool_depth(p, mmpm_to_m_s(v)).unwrap().depth_mm;
            (d - target).powi(2)
        })
        .sum()
}

fn main() {
    let sigma_mm: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("sigma in mm"))
        .unwrap_or(0.459);
    let base = MaterialEnv {
        sigma_l: mm_to_m(sigma_mm),
        ..MaterialEnv::ss316l()
    };
    let with = |absorptivity: f64| MaterialEnv { absorptivity, ..base };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.4, 1.0);
    while b - a > 1e-5 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if sse(with(c)) <= sse(with(d)) {
            b = d;
        } else {
            a = c;
        }
    }
    let fitted = 0.5 * (a + b);
    let rounded = (fitted * 1000.0).round() / 1000.0;
    println!("sigma_l = {sigma_mm} mm, fitted absorptivity = {fitted:.5} (rounded {rounded})");

    let model = ThermalModel::new(with(rounded)).unwrap();
    for (p, v, target) in REFERENCE {
        let r = model.melt_pool_depth(p, mmpm_to_m_s(v)).unwrap();
        println!(
            "  P = {p:7.2} W  v = {v:6.2} mm/min  depth = {:.4} mm  (reference {target:.4}, t = {} s)",
            r.depth_mm, r.t_used
        );
    }
    println!("  rms residual = {:.4} mm", (sse(with(rounded)) / 3.0).sqrt());
}
