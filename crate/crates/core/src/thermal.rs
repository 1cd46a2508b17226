//! Eagar–Tsai temperature field of a Gaussian laser moving along +x over a
//! semi-infinite substrate, and steady-state melt-pool depth extraction.
//!
//! The time integral
//!
//! ```text
//! T - T0 = αL P / (π ρ cp √(4π a)) ∫₀ᵗ (t-t')^(-1/2) / (2a(t-t') + σ²)
//!          · exp(-((x - v t')² + y²) / (4a(t-t') + 2σ²) - z² / (4a(t-t'))) dt'
//! ```
//!
//! is evaluated after substituting `u = √(t - t')`, which turns
//! `(t-t')^(-1/2) dt'` into `2 du` and leaves a bounded, smooth integrand on
//! `[0, √t]`.
//!
//! All quantities are SI internally. Depths are reported in millimetres.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::quadrature::{AdaptiveQuadrature, QuadratureOptions};
use crate::units;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThermalError {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },
    #[error("quadrature divergence at P={power_w} W, v={speed_m_s} m/s, (x,y,z)=({x},{y},{z}) m, t={t} s")]
    QuadratureDivergence {
        power_w: f64,
        speed_m_s: f64,
        x: f64,
        y: f64,
        z: f64,
        t: f64,
    },
    #[error("query {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<ThermalError>,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ThermalError {
    ThermalError::InvalidInput {
        field,
        reason: reason.into(),
    }
}

/// Physical constants of substrate and beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialEnv {
    /// Ambient / initial substrate temperature (K).
    pub t0: f64,
    /// Liquidus temperature (K); the melt-pool boundary.
    pub t_liq: f64,
    /// Specific heat (J/(kg·K)).
    pub cp: f64,
    /// Density (kg/m³).
    pub rho: f64,
    /// Thermal diffusivity (m²/s).
    pub diffusivity: f64,
    /// Gaussian distribution parameter of the beam (m).
    pub sigma_l: f64,
    /// Absorbed fraction of laser power.
    pub absorptivity: f64,
}

impl MaterialEnv {
    /// SS316L constants as tabulated, with σ_L = 0.918 mm and αL = 0.3.
    ///
    /// With this formulation these values never reach the liquidus at the
    /// powers of interest; see [`MaterialEnv::ss316l`] for the calibrated set.
    pub fn tabulated() -> Self {
        Self {
            t0: 300.0,
            t_liq: 1700.0,
            cp: 680.0,
            rho: 7400.0,
            diffusivity: 7.1542e-6,
            sigma_l: units::mm_to_m(0.918),
            absorptivity: 0.3,
        }
    }

    /// SS316L calibrated against measured depths: σ_L = 0.459 mm (the tabulated
    /// 0.918 mm taken as the 2σ beam diameter) and the absorptivity fitted to
    /// 1.262 mm at 1000 W / 400 mm/min, 0.506 mm at 500 W / 700 mm/min and
    /// 1.0045 mm at 888.9 W / 566.7 mm/min.
    pub fn ss316l() -> Self {
        Self {
            sigma_l: units::mm_to_m(0.459),
            absorptivity: SS316L_CALIBRATED_ABSORPTIVITY,
            ..Self::tabulated()
        }
    }

    pub fn validate(&self) -> Result<(), ThermalError> {
        let positive = [
            ("t0", self.t0),
            ("t_liq", self.t_liq),
            ("cp", self.cp),
            ("rho", self.rho),
            ("diffusivity", self.diffusivity),
            ("sigma_l", self.sigma_l),
            ("absorptivity", self.absorptivity),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {value}")));
            }
        }
        if self.t_liq <= self.t0 {
            return Err(invalid(
                "t_liq",
                format!("must exceed t0 ({}), got {}", self.t0, self.t_liq),
            ));
        }
        if self.absorptivity > 1.0 {
            return Err(invalid(
                "absorptivity",
                format!("must be <= 1, got {}", self.absorptivity),
            ));
        }
        Ok(())
    }

    /// αL / (π ρ cp √(4π a)), the per-watt prefactor of the integral.
    fn prefactor_per_watt(&self) -> f64 {
        self.absorptivity / (PI * self.rho * self.cp * (4.0 * PI * self.diffusivity).sqrt())
    }
}

/// Fitted by `examples/calibrate.rs`.
pub const SS316L_CALIBRATED_ABSORPTIVITY: f64 = 0.729;

impl Default for MaterialEnv {
    fn default() -> Self {
        Self::ss316l()
    }
}

/// A point query of the temperature field. SI units; `z >= 0` is depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserQuery {
    pub power_w: f64,
    pub speed_m_s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

impl LaserQuery {
    pub fn validate(&self) -> Result<(), ThermalError> {
        for (field, value) in [
            ("power", self.power_w),
            ("speed", self.speed_m_s),
            ("t", self.t),
            ("z", self.z),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {value}")));
            }
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(invalid("x/y", "coordinates must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    /// Melt-pool depth (mm).
    pub depth_mm: f64,
    /// Whether the steady-state test passed.
    pub converged: bool,
    /// Simulated time at which the reported depth was evaluated (s).
    pub t_used: f64,
    /// Position of the deepest point relative to the beam centre (mm, negative
    /// trails the beam). Zero when nothing melts.
    pub x_offset_mm: f64,
}

/// Search and steady-state settings for [`ThermalModel::melt_pool_depth`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthOptions {
    pub t_start: f64,
    pub t_growth: f64,
    pub max_extensions: u32,
    pub steady_tol_mm: f64,
    pub x_samples: usize,
    /// Window behind the beam centre, in units of σ_L.
    pub behind_sigmas: f64,
    /// Window ahead of the beam centre, in units of σ_L.
    pub ahead_sigmas: f64,
    pub z_max_mm: f64,
    pub z_tol_mm: f64,
    /// Golden-section refinement of x around the best sample.
    pub refine_x: bool,
}

impl Default for DepthOptions {
    fn default() -> Self {
        Self {
            t_start: 2.0,
            t_growth: 1.5,
            max_extensions: 4,
            steady_tol_mm: 1e-3,
            x_samples: 64,
            behind_sigmas: 5.0,
            ahead_sigmas: 2.0,
            z_max_mm: 5.0,
            z_tol_mm: 1e-4,
            refine_x: true,
        }
    }
}

/// Material constants bundled with numerical settings.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    env: MaterialEnv,
    quad: AdaptiveQuadrature,
    depth_opts: DepthOptions,
}

impl ThermalModel {
    pub fn new(env: MaterialEnv) -> Result<Self, ThermalError> {
        Self::with_options(env, QuadratureOptions::default(), DepthOptions::default())
    }

    pub fn with_options(
        env: MaterialEnv,
        quad: QuadratureOptions,
        depth_opts: DepthOptions,
    ) -> Result<Self, ThermalError> {
        env.validate()?;
        if quad.order == 0 {
            return Err(invalid("quadrature.order", "must be >= 1"));
        }
        if depth_opts.x_samples < 2 {
            return Err(invalid("depth.x_samples", "must be >= 2"));
        }
        Ok(Self {
            env,
            quad: AdaptiveQuadrature::new(quad),
            depth_opts,
        })
    }

    pub fn env(&self) -> &MaterialEnv {
        &self.env
    }

    pub fn depth_options(&self) -> &DepthOptions {
        &self.depth_opts
    }

    /// Temperature (K) at the queried point and time.
    pub fn temperature(&self, q: &LaserQuery) -> Result<f64, ThermalError> {
        q.validate()?;
        self.temperature_unchecked(q)
    }

    fn temperature_unchecked(&self, q: &LaserQuery) -> Result<f64, ThermalError> {
        if q.t == 0.0 || q.power_w == 0.0 {
            return Ok(self.env.t0);
        }
        let a = self.env.diffusivity;
        let sig2 = self.env.sigma_l * self.env.sigma_l;
        let (x, y, z, t, v) = (q.x, q.y, q.z, q.t, q.speed_m_s);
        let y2 = y * y;
        let z2 = z * z;
        let integrand = |u: f64| {
            let u2 = u * u;
            if u2 == 0.0 && z2 > 0.0 {
                return 0.0;
            }
            // x - v t' with t' = t - u²
            let dx = x - v * (t - u2);
            let lateral = (dx * dx + y2) / (4.0 * a * u2 + 2.0 * sig2);
            let vertical = if z2 > 0.0 { z2 / (4.0 * a * u2) } else { 0.0 };
            2.0 / (2.0 * a * u2 + sig2) * (-(lateral + vertical)).exp()
        };
        let integral = self.quad.integrate(integrand, 0.0, t.sqrt());
        let rise = self.env.prefactor_per_watt() * q.power_w * integral.value;
        if !rise.is_finite() {
            return Err(ThermalError::QuadratureDivergence {
                power_w: q.power_w,
                speed_m_s: v,
                x,
                y,
                z,
                t,
            });
        }
        Ok(self.env.t0 + rise)
    }

    /// Steady-state melt-pool depth for power `power_w` (W) and scan speed
    /// `speed_m_s` (m/s).
    ///
    /// Unconverged steady state is reported through `converged = false`, not
    /// as an error.
    pub fn melt_pool_depth(&self, power_w: f64, speed_m_s: f64) -> Result<DepthResult, ThermalError> {
        if !(power_w.is_finite() && power_w >= 0.0) {
            return Err(invalid("power", format!("must be finite and >= 0, got {power_w}")));
        }
        if !(speed_m_s.is_finite() && speed_m_s > 0.0) {
            return Err(invalid("speed", format!("must be finite and > 0, got {speed_m_s}")));
        }
        let o = &self.depth_opts;
        if power_w == 0.0 {
            return Ok(DepthResult {
                depth_mm: 0.0,
                converged: true,
                t_used: o.t_start,
                x_offset_mm: 0.0,
            });
        }
        let mut t = o.t_start;
        let mut prev = self.depth_at_time(power_w, speed_m_s, t)?;
        for _ in 0..o.max_extensions {
            let t_next = t * o.t_growth;
            let next = self.depth_at_time(power_w, speed_m_s, t_next)?;
            let converged = (next.0 - prev.0).abs() < o.steady_tol_mm;
            t = t_next;
            prev = next;
            if converged {
                return Ok(DepthResult {
                    depth_mm: prev.0,
                    converged: true,
                    t_used: t,
                    x_offset_mm: prev.1,
                });
            }
        }
        Ok(DepthResult {
            depth_mm: prev.0,
            converged: false,
            t_used: t,
            x_offset_mm: prev.1,
        })
    }

    /// Deepest liquidus crossing along y = 0 at time `t`, as (depth mm, x offset mm).
    fn depth_at_time(&self, power_w: f64, speed_m_s: f64, t: f64) -> Result<(f64, f64), ThermalError> {
        let o = &self.depth_opts;
        let sigma = self.env.sigma_l;
        let beam_x = speed_m_s * t;
        let lo = -o.behind_sigmas * sigma;
        let hi = o.ahead_sigmas * sigma;
        let step = (hi - lo) / (o.x_samples - 1) as f64;
        let offsets: Vec<f64> = (0..o.x_samples).map(|k| lo + step * k as f64).collect();

        let mut depths = Vec::with_capacity(offsets.len());
        for &dx in &offsets {
            depths.push(self.root_depth(power_w, speed_m_s, beam_x + dx, t)?);
        }
        let (best_k, best) = depths
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (k, d)| if d > acc.1 { (k, d) } else { acc });
        if best <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let mut best_depth = best;
        let mut best_offset = offsets[best_k];

        if o.refine_x && best_k > 0 && best_k + 1 < offsets.len() {
            // Golden-section search on the bracket around the best sample.
            let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (offsets[best_k - 1], offsets[best_k + 1]);
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let mut fc = self.root_depth(power_w, speed_m_s, beam_x + c, t)?;
            let mut fd = self.root_depth(power_w, speed_m_s, beam_x + d, t)?;
            let x_tol = 1e-3 * step;
            while (b - a) > x_tol {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = self.root_depth(power_w, speed_m_s, beam_x + c, t)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = self.root_depth(power_w, speed_m_s, beam_x + d, t)?;
                }
            }
            for (x, f) in [(c, fc), (d, fd)] {
                if f > best_depth {
                    best_depth = f;
                    best_offset = x;
                }
            }
        }
        Ok((best_depth, units::m_to_mm(best_offset)))
    }

    /// Bisection for T(x, 0, z, t) = T_liq on z ∈ [0, z_max]; depth in mm.
    /// T is strictly decreasing in z, so the bracket is always valid once the
    /// surface is above the liquidus.
    fn root_depth(&self, power_w: f64, speed_m_s: f64, x: f64, t: f64) -> Result<f64, ThermalError> {
        let o = &self.depth_opts;
        let at = |z: f64| {
            self.temperature_unchecked(&LaserQuery {
                power_w,
                speed_m_s,
                x,
                y: 0.0,
                z,
                t,
            })
        };
        let t_liq = self.env.t_liq;
        if at(0.0)? < t_liq {
            return Ok(0.0);
        }
        let z_max = units::mm_to_m(o.z_max_mm);
        if at(z_max)? >= t_liq {
            return Ok(o.z_max_mm);
        }
        let tol = units::mm_to_m(o.z_tol_mm);
        let (mut lo, mut hi) = (0.0, z_max);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if at(mid)? >= t_liq {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(units::m_to_mm(0.5 * (lo + hi)))
    }

    /// Depths for a list of (power W, speed m/s) pairs, evaluated in parallel.
    /// The output order matches the input order.
    pub fn batch_depths(&self, queries: &[(f64, f64)]) -> Result<Vec<DepthResult>, ThermalError> {
        queries
            .par_iter()
            .enumerate()
            .map(|(index, &(p, v))| {
                self.melt_pool_depth(p, v).map_err(|e| ThermalError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Temperature (K) with default numerical settings.
pub fn temperature(env: &MaterialEnv, q: &LaserQuery) -> Result<f64, ThermalError> {
    ThermalModel::new(*env)?.temperature(q)
}

/// Steady-state depth with default numerical settings; `speed_m_s` in m/s.
pub fn melt_pool_depth(env: &MaterialEnv, power_w: f64, speed_m_s: f64) -> Result<DepthResult, ThermalError> {
    ThermalModel::new(*env)?.melt_pool_depth(power_w, speed_m_s)
}

pub fn batch_depths(env: &MaterialEnv, queries: &[(f64, f64)]) -> Result<Vec<DepthResult>, ThermalError> {
    ThermalModel::new(*env)?.batch_depths(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ThermalModel {
        ThermalModel::new(MaterialEnv::default()).unwrap()
    }

    fn q(power_w: f64, speed_mmpm: f64, x: f64, z: f64, t: f64) -> LaserQuery {
        LaserQuery {
            power_w,
            speed_m_s: units::mmpm_to_m_s(speed_mmpm),
            x,
            y: 0.0,
            z,
            t,
        }
    }

    #[test]
    fn zero_time_is_ambient() {
        let m = model();
        assert_eq!(m.temperature(&q(1000.0, 400.0, 0.0, 0.0, 0.0)).unwrap(), 300.0);
        assert_eq!(m.temperature(&q(1000.0, 400.0, 1e-3, 2e-4, 0.0)).unwrap(), 300.0);
    }

    #[test]
    fn zero_power_is_ambient() {
        let m = model();
        assert_eq!(m.temperature(&q(0.0, 400.0, 0.0, 0.0, 1.0)).unwrap(), 300.0);
    }

    #[test]
    fn negative_depth_coordinate_rejected() {
        let err = model().temperature(&q(100.0, 400.0, 0.0, -1e-4, 1.0)).unwrap_err();
        assert!(matches!(err, ThermalError::InvalidInput { field: "z", .. }));
    }

    #[test]
    fn corrupted_constants_report_divergence() {
        // Bypass validation to simulate corrupted state.
        let m = ThermalModel {
            env: MaterialEnv {
                rho: f64::MIN_POSITIVE,
                cp: f64::MIN_POSITIVE,
                ..MaterialEnv::default()
            },
            quad: AdaptiveQuadrature::default(),
            depth_opts: DepthOptions::default(),
        };
        let err = m.temperature(&q(1000.0, 400.0, 0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, ThermalError::QuadratureDivergence { .. }));
        assert!(err.to_string().starts_with("quadrature divergence"));
    }

    #[test]
    fn zero_power_depth() {
        let r = model().melt_pool_depth(0.0, units::mmpm_to_m_s(500.0)).unwrap();
        assert_eq!(r.depth_mm, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn zero_speed_rejected() {
        assert!(model().melt_pool_depth(500.0, 0.0).is_err());
        assert!(model().melt_pool_depth(-5.0, 0.01).is_err());
    }

    #[test]
    fn tabulated_constants_never_reach_liquidus() {
        // Documented property of the literal constants; see MaterialEnv::tabulated.
        let r = melt_pool_depth(&MaterialEnv::tabulated(), 1000.0, units::mmpm_to_m_s(400.0)).unwrap();
        assert_eq!(r.depth_mm, 0.0);
    }

    #[test]
    fn validation_names_field() {
        let env = MaterialEnv {
            absorptivity: 1.5,
            ..MaterialEnv::default()
        };
        match env.validate() {
            Err(ThermalError::InvalidInput { field, .. }) => assert_eq!(field, "absorptivity"),
            other => panic!("{other:?}"),
        }
        let env = MaterialEnv {
            t_liq: 250.0,
            ..MaterialEnv::default()
        };
        assert!(env.validate().is_err());
    }

    #[test]
    fn empty_and_singleton_batches() {
        let m = model();
        assert!(m.batch_depths(&[]).unwrap().is_empty());
        let v = units::mmpm_to_m_s(700.0);
        let single = m.melt_pool_depth(500.0, v).unwrap();
        assert_eq!(m.batch_depths(&[(500.0, v)]).unwrap(), vec![single]);
    }

    #[test]
    fn batch_error_carries_index() {
        let m = model();
        let v = units::mmpm_to_m_s(700.0);
        let err = m.batch_depths(&[(500.0, v), (500.0, 0.0)]).unwrap_err();
        assert!(matches!(err, ThermalError::Batch { index: 1, .. }), "{err}");
    }
}
