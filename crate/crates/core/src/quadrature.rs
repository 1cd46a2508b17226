//! Gauss–Legendre rules and an adaptive bisection integrator built on them.
//!
//! The integrator compares a panel's single-rule estimate against the sum of
//! the same rule applied to both halves and splits until the difference is
//! below tolerance. Tolerance is relative to a coarse global estimate so that
//! panels carrying negligible mass are not refined forever.

use std::f64::consts::PI;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial roots.
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess for the i-th root, counted from +1.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 4.0 * f64::EPSILON {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = x;
            weights[i] = w;
            nodes[n - 1 - i] = -x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule to `f` on `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Settings for [`AdaptiveQuadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Nodes per panel.
    pub order: usize,
    /// Target relative error of the whole integral.
    pub rel_tol: f64,
    /// Number of equal panels used for the initial coarse estimate.
    pub initial_panels: usize,
    /// Maximum bisection depth below an initial panel.
    pub max_depth: u32,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            order: 16,
            rel_tol: 1e-10,
            initial_panels: 8,
            max_depth: 30,
        }
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of |coarse - refined| over accepted panels.
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct AdaptiveQuadrature {
    rule: GaussLegendre,
    opts: QuadratureOptions,
}

impl AdaptiveQuadrature {
    pub fn new(opts: QuadratureOptions) -> Self {
        Self {
            rule: GaussLegendre::new(opts.order),
            opts,
        }
    }

    pub fn options(&self) -> &QuadratureOptions {
        &self.opts
    }

    /// Integrates `f` over `[a, b]`. Non-finite panel values are passed
    /// through in `value` so callers can detect them.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Integral {
        if a == b {
            return Integral {
                value: 0.0,
                error_estimate: 0.0,
                evaluations: 0,
            };
        }
        let n = self.rule.len();
        let panels = self.opts.initial_panels.max(1);
        let width = (b - a) / panels as f64;
        let mut evaluations = 0usize;

        let mut coarse = Vec::with_capacity(panels);
        for k in 0..panels {
            let lo = a + width * k as f64;
            let hi = if k + 1 == panels { b } else { lo + width };
            coarse.push((lo, hi, self.rule.integrate(&f, lo, hi)));
            evaluations += n;
        }
        let scale: f64 = coarse.iter().map(|c| c.2.abs()).sum();
        if !scale.is_finite() {
            return Integral {
                value: scale,
                error_estimate: f64::INFINITY,
                evaluations,
            };
        }
        let total_len = (b - a).abs();

        let mut value = 0.0;
        let mut error_estimate = 0.0;
        // Explicit stack of (lo, hi, estimate, depth); processed depth-first in
        // a fixed order so the summation order is deterministic.
        let mut stack: Vec<(f64, f64, f64, u32)> =
            coarse.into_iter().rev().map(|(l, h, e)| (l, h, e, 0)).collect();
        while let Some((lo, hi, whole, depth)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = self.rule.integrate(&f, lo, mid);
            let right = self.rule.integrate(&f, mid, hi);
            evaluations += 2 * n;
            let refined = left + right;
            let diff = (refined - whole).abs();
            if !refined.is_finite() {
                return Integral {
                    value: refined,
                    error_estimate: f64::INFINITY,
                    evaluations,
                };
            }
            let share = (hi - lo).abs() / total_len;
            let budget = self.opts.rel_tol * (scale * share).max(refined.abs());
            if diff <= budget || depth >= self.opts.max_depth {
                value += refined;
                error_estimate += diff;
            } else {
                stack.push((mid, hi, right, depth + 1));
                stack.push((lo, mid, left, depth + 1));
            }
        }
        Integral {
            value,
            error_estimate,
            evaluations,
        }
    }
}

impl Default for AdaptiveQuadrature {
    fn default() -> Self {
        Self::new(QuadratureOptions::default())
    }
}
