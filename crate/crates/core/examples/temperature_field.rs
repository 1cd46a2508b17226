//! Prints a y = 0 slice of the temperature field around the beam as CSV
//! (x and z in mm, T in K). Pipe it into any plotting tool.
//!
//! ```bash
//! cargo run --release -p ded-qopt --example temperature_field > field.csv
//! ```

use std::io::Write;

use ded_qopt::thermal::{LaserQuery, MaterialEnv, ThermalModel};
use ded_qopt::units::{mm_to_m, mmpm_to_m_s};

fn main() {
    let model = ThermalModel::new(MaterialEnv::default()).unwrap();
    let power_w = 8000.0 / 9.0;
    let speed = mmpm_to_m_s(1700.0 / 3.0);
    let t = 6.0;
    let beam_x = speed * t;

    let mut out = String::from("x_mm,z_mm,temperature_k\n");
    for ix in 0..=60 {
        let x_rel_mm = -4.0 + 6.0 * ix as f64 / 60.0;
        for iz in 0..=30 {
            let z_mm = 1.5 * iz as f64 / 30.0;
            let q = LaserQuery {
                power_w,
                speed_m_s: speed,
                x: beam_x + mm_to_m(x_rel_mm),
                y: 0.0,
                z: mm_to_m(z_mm),
                t,
            };
            let temp = model.temperature(&q).unwrap();
            out.push_str(&format!("{x_rel_mm:.3},{z_mm:.3},{temp:.2}\n"));
        }
    }
    // a closed pipe (`| head`) is not an error here
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
}
