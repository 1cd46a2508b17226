//! The thermal model seen as a discrete RL environment: a power × speed grid,
//! the eight neighbour moves, and a depth-error reward.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::thermal::{DepthResult, ThermalError, ThermalModel};
use crate::units;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("state ({i}, {j}) is outside a {n}x{n} grid")]
    OutOfGrid { i: usize, j: usize, n: usize },
    #[error("action {action} leaves the grid from state {state}")]
    InvalidAction { state: StateId, action: Action },
    #[error("environment evaluation failed at state {state}: {reason}")]
    EvaluationFailed { state: StateId, reason: String },
    #[error("depth map has {got} entries, grid needs {expected}")]
    DepthMapSize { got: usize, expected: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> EnvError {
    EnvError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// Endpoint-inclusive `n × n` discretization of power (W) and speed (mm/min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateGrid {
    pub n: usize,
    pub p_min_w: f64,
    pub p_max_w: f64,
    pub v_min_mmpm: f64,
    pub v_max_mmpm: f64,
}

impl Default for StateGrid {
    fn default() -> Self {
        Self {
            n: 10,
            p_min_w: 500.0,
            p_max_w: 1000.0,
            v_min_mmpm: 400.0,
            v_max_mmpm: 700.0,
        }
    }
}

impl StateGrid {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n < 2 {
            return Err(invalid("n", format!("must be >= 2, got {}", self.n)));
        }
        for (field, v) in [
            ("p_min_w", self.p_min_w),
            ("p_max_w", self.p_max_w),
            ("v_min_mmpm", self.v_min_mmpm),
            ("v_max_mmpm", self.v_max_mmpm),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if self.p_min_w < 0.0 {
            return Err(invalid("p_min_w", "must be >= 0"));
        }
        if self.v_min_mmpm <= 0.0 {
            return Err(invalid("v_min_mmpm", "must be > 0"));
        }
        if self.p_min_w >= self.p_max_w {
            return Err(invalid("p_max_w", "must exceed p_min_w"));
        }
        if self.v_min_mmpm >= self.v_max_mmpm {
            return Err(invalid("v_max_mmpm", "must exceed v_min_mmpm"));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.n * self.n
    }

    pub fn power_w(&self, i: usize) -> f64 {
        linspace(self.p_min_w, self.p_max_w, self.n, i)
    }

    pub fn speed_mmpm(&self, j: usize) -> f64 {
        linspace(self.v_min_mmpm, self.v_max_mmpm, self.n, j)
    }

    pub fn contains(&self, s: StateId) -> bool {
        s.i < self.n && s.j < self.n
    }

    pub fn check(&self, s: StateId) -> Result<StateId, EnvError> {
        if self.contains(s) {
            Ok(s)
        } else {
            Err(EnvError::OutOfGrid {
                i: s.i,
                j: s.j,
                n: self.n,
            })
        }
    }

    /// (power W, speed mm/min) of a state.
    pub fn state_params(&self, s: StateId) -> Result<(f64, f64), EnvError> {
        self.check(s)?;
        Ok((self.power_w(s.i), self.speed_mmpm(s.j)))
    }

    pub fn state(&self, flat: usize) -> Result<StateId, EnvError> {
        self.check(StateId::new(flat / self.n, flat % self.n))
    }

    /// All states in flat-id order.
    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).map(move |j| StateId::new(i, j)))
    }

    pub fn flat(&self, s: StateId) -> usize {
        s.i * self.n + s.j
    }

    /// The successor of `s` under `a`, if it stays in the grid.
    pub fn apply(&self, s: StateId, a: Action) -> Option<StateId> {
        let i = s.i.checked_add_signed(a.di as isize)?;
        let j = s.j.checked_add_signed(a.dj as isize)?;
        let next = StateId::new(i, j);
        self.contains(next).then_some(next)
    }

    /// Actions that keep `s` inside the grid, in canonical order.
    pub fn valid_actions(&self, s: StateId) -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|&a| self.apply(s, a).is_some())
            .collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        hi
    } else {
        lo + k as f64 * (hi - lo) / (n - 1) as f64
    }
}

/// Grid coordinates: `i` indexes power, `j` indexes speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId {
    pub i: usize,
    pub j: usize,
}

impl StateId {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// A simultaneous step of the power and speed indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub di: i8,
    pub dj: i8,
}

impl Action {
    /// Row-major over (di, dj) ∈ {-1, 0, 1}², skipping (0, 0). The position
    /// in this array is the Q-table column.
    pub const ALL: [Action; 8] = [
        Action { di: -1, dj: -1 },
        Action { di: -1, dj: 0 },
        Action { di: -1, dj: 1 },
        Action { di: 0, dj: -1 },
        Action { di: 0, dj: 1 },
        Action { di: 1, dj: -1 },
        Action { di: 1, dj: 0 },
        Action { di: 1, dj: 1 },
    ];

    pub fn index(self) -> usize {
        let raw = ((self.di + 1) * 3 + (self.dj + 1)) as usize;
        if raw > 4 {
            raw - 1
        } else {
            raw
        }
    }

    pub fn from_index(k: usize) -> Option<Action> {
        Self::ALL.get(k).copied()
    }

    /// Column label used in Q-table exports, e.g. `di-1_dj+1`.
    pub fn label(self) -> String {
        fn sign(d: i8) -> String {
            match d {
                0 => "0".into(),
                d if d > 0 => format!("+{d}"),
                d => d.to_string(),
            }
        }
        format!("di{}_dj{}", sign(self.di), sign(self.dj))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:+}, {:+})", self.di, self.dj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// `1 / |δ_opt − Δδ|` inside the band, `−|δ_opt − Δδ|` outside.
    Paper,
    /// `1 / Δδ` inside the band, `−Δδ` outside.
    #[default]
    InverseError,
}

impl RewardVariant {
    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::Paper => "paper",
            RewardVariant::InverseError => "inverse_error",
        }
    }
}

/// Target depth and thresholds, all in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub delta_opt_mm: f64,
    /// Δδ below this earns a positive reward.
    pub tol_r_mm: f64,
    /// Δδ at or below this ends the episode.
    pub tol_delta_mm: f64,
    /// Lower clamp on reward denominators.
    pub denom_floor_mm: f64,
    pub variant: RewardVariant,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            delta_opt_mm: 1.0,
            tol_r_mm: 0.1,
            tol_delta_mm: 0.005,
            denom_floor_mm: 1e-6,
            variant: RewardVariant::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        for (field, v) in [
            ("delta_opt_mm", self.delta_opt_mm),
            ("tol_r_mm", self.tol_r_mm),
            ("tol_delta_mm", self.tol_delta_mm),
            ("denom_floor_mm", self.denom_floor_mm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.tol_delta_mm > self.tol_r_mm {
            return Err(invalid("tol_delta_mm", "must not exceed tol_r_mm"));
        }
        Ok(())
    }

    /// |δ − δ_opt| in mm.
    pub fn error(&self, depth_mm: f64) -> f64 {
        (depth_mm - self.delta_opt_mm).abs()
    }

    pub fn reward(&self, error_mm: f64) -> f64 {
        let floor = self.denom_floor_mm;
        match self.variant {
            RewardVariant::Paper => {
                let gap = (self.delta_opt_mm - error_mm).abs();
                if error_mm < self.tol_r_mm {
                    1.0 / gap.max(floor)
                } else {
                    -gap
                }
            }
            RewardVariant::InverseError => {
                if error_mm < self.tol_r_mm {
                    1.0 / error_mm.max(floor)
                } else {
                    -error_mm
                }
            }
        }
    }

    pub fn is_terminal(&self, error_mm: f64) -> bool {
        error_mm <= self.tol_delta_mm
    }
}

/// Memoized per-state depth lookup. Each state is evaluated at most once;
/// later reads return the stored value.
pub struct DepthCache {
    grid: StateGrid,
    model: Option<ThermalModel>,
    cells: Vec<OnceLock<Result<DepthResult, ThermalError>>>,
    evaluations: AtomicUsize,
}

impl fmt::Debug for DepthCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DepthCache")
            .field("grid", &self.grid)
            .field("filled", &self.len())
            .finish()
    }
}

impl DepthCache {
    pub fn new(grid: StateGrid, model: ThermalModel) -> Result<Self, EnvError> {
        grid.validate()?;
        Ok(Self {
            grid,
            model: Some(model),
            cells: (0..grid.num_states()).map(|_| OnceLock::new()).collect(),
            evaluations: AtomicUsize::new(0),
        })
    }

    /// A cache filled from precomputed depths (mm) in flat-id order. No thermal
    /// model is attached.
    pub fn from_depths(grid: StateGrid, depths_mm: &[f64]) -> Result<Self, EnvError> {
        grid.validate()?;
        if depths_mm.len() != grid.num_states() {
            return Err(EnvError::DepthMapSize {
                got: depths_mm.len(),
                expected: grid.num_states(),
            });
        }
        let cells = depths_mm
            .iter()
            .map(|&d| {
                let cell = OnceLock::new();
                let _ = cell.set(Ok(DepthResult {
                    depth_mm: d,
                    converged: true,
                    t_used: 0.0,
                    x_offset_mm: 0.0,
                }));
                cell
            })
            .collect();
        Ok(Self {
            grid,
            model: None,
            cells,
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn model(&self) -> Option<&ThermalModel> {
        self.model.as_ref()
    }

    pub fn get(&self, s: StateId) -> Result<DepthResult, EnvError> {
        self.grid.check(s)?;
        let cell = &self.cells[self.grid.flat(s)];
        let result = cell.get_or_init(|| {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            let (p, v) = self.grid.state_params(s).expect("checked above");
            match &self.model {
                Some(m) => m.melt_pool_depth(p, units::mmpm_to_m_s(v)),
                None => unreachable!("precomputed caches are fully populated"),
            }
        });
        result.clone().map_err(|e| EnvError::EvaluationFailed {
            state: s,
            reason: e.to_string(),
        })
    }

    /// Depth for `s`, failing if the steady state did not converge.
    pub fn converged_depth(&self, s: StateId) -> Result<f64, EnvError> {
        let r = self.get(s)?;
        if !r.converged {
            return Err(EnvError::EvaluationFailed {
                state: s,
                reason: format!("steady state not reached by t = {} s", r.t_used),
            });
        }
        Ok(r.depth_mm)
    }

    /// Evaluates every state, in parallel.
    pub fn warm_up(&self) -> Result<(), EnvError> {
        let states: Vec<StateId> = self.grid.states().collect();
        states.par_iter().try_for_each(|&s| self.get(s).map(|_| ()))
    }

    /// Number of states evaluated so far.
    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// How many thermal evaluations this cache has performed.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// All results in flat-id order, evaluating missing ones.
    pub fn results(&self) -> Result<Vec<DepthResult>, EnvError> {
        self.warm_up()?;
        self.grid.states().map(|s| self.get(s)).collect()
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next: StateId,
    pub depth_mm: f64,
    /// |δ(next) − δ_opt|.
    pub error_mm: f64,
    pub reward: f64,
    pub terminal: bool,
}

/// Grid, reward and depth lookup. Cheap to clone; the cache is shared.
#[derive(Debug, Clone)]
pub struct Environment {
    reward: RewardConfig,
    cache: Arc<DepthCache>,
}

impl Environment {
    pub fn new(cache: Arc<DepthCache>, reward: RewardConfig) -> Result<Self, EnvError> {
        reward.validate()?;
        Ok(Self { reward, cache })
    }

    pub fn grid(&self) -> &StateGrid {
        self.cache.grid()
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn cache(&self) -> &Arc<DepthCache> {
        &self.cache
    }

    pub fn with_reward(&self, reward: RewardConfig) -> Result<Self, EnvError> {
        Self::new(Arc::clone(&self.cache), reward)
    }

    pub fn valid_actions(&self, s: StateId) -> Vec<Action> {
        self.grid().valid_actions(s)
    }

    pub fn step(&self, s: StateId, a: Action) -> Result<Transition, EnvError> {
        self.grid().check(s)?;
        let next = self
            .grid()
            .apply(s, a)
            .ok_or(EnvError::InvalidAction { state: s, action: a })?;
        let depth_mm = self.cache.converged_depth(next)?;
        let error_mm = self.reward.error(depth_mm);
        Ok(Transition {
            next,
            depth_mm,
            error_mm,
            reward: self.reward.reward(error_mm),
            terminal: self.reward.is_terminal(error_mm),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> StateGrid {
        StateGrid::default()
    }

    #[test]
    fn state_params_corners_and_reported_optimum() {
        let g = grid10();
        assert_eq!(g.state_params(StateId::new(0, 0)).unwrap(), (500.0, 400.0));
        assert_eq!(g.state_params(StateId::new(9, 9)).unwrap(), (1000.0, 700.0));
        let (p, v) = g.state_params(StateId::new(7, 5)).unwrap();
        assert!((p - 888.89).abs() < 0.005, "{p}");
        assert!((v - 566.67).abs() < 0.005, "{v}");
        assert_eq!((p * 10.0).round() / 10.0, 888.9);
        assert_eq!((v * 10.0).round() / 10.0, 566.7);
    }

    #[test]
    fn out_of_range_state_rejected() {
        assert!(matches!(
            grid10().state_params(StateId::new(10, 0)),
            Err(EnvError::OutOfGrid { i: 10, j: 0, n: 10 })
        ));
    }

    #[test]
    fn action_order_and_index_roundtrip() {
        for (k, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), k);
            assert_eq!(Action::from_index(k), Some(*a));
        }
        assert_eq!(Action::ALL[0], Action { di: -1, dj: -1 });
        assert_eq!(Action::ALL[3], Action { di: 0, dj: -1 });
        assert_eq!(Action::ALL[4], Action { di: 0, dj: 1 });
        assert_eq!(Action::ALL[7].label(), "di+1_dj+1");
        assert_eq!(Action::ALL[1].label(), "di-1_dj0");
    }

    #[test]
    fn valid_action_counts() {
        let g = grid10();
        assert_eq!(g.valid_actions(StateId::new(5, 5)).len(), 8);
        let corner = g.valid_actions(StateId::new(0, 0));
        assert_eq!(
            corner,
            vec![
                Action { di: 0, dj: 1 },
                Action { di: 1, dj: 0 },
                Action { di: 1, dj: 1 }
            ]
        );
        assert_eq!(g.valid_actions(StateId::new(0, 5)).len(), 5);
        assert_eq!(g.valid_actions(StateId::new(9, 9)).len(), 3);
        assert_eq!(g.valid_actions(StateId::new(9, 3)).len(), 5);
    }

    #[test]
    fn grid_validation() {
        assert!(StateGrid::with_n(1).validate().is_err());
        let g = StateGrid {
            p_min_w: 900.0,
            p_max_w: 800.0,
            ..grid10()
        };
        assert!(matches!(g.validate(), Err(EnvError::InvalidConfig { field: "p_max_w", .. })));
    }

    fn rc(variant: RewardVariant) -> RewardConfig {
        RewardConfig {
            variant,
            ..RewardConfig::default()
        }
    }

    #[test]
    fn paper_reward_examples() {
        let r = rc(RewardVariant::Paper);
        let e = r.error(1.0045);
        assert!((e - 0.0045).abs() < 1e-12);
        let expected = 1.0 / (1.0 - 0.0045);
        assert!((r.reward(e) - expected).abs() < 1e-12);
        assert!((r.reward(e) - 1.00452).abs() < 1e-5);
        assert_eq!(r.reward(r.error(0.5)), -0.5);
        assert_eq!(r.reward(r.error(1.0)), 1.0);
        assert!(r.is_terminal(r.error(1.0)));
    }

    #[test]
    fn inverse_error_reward() {
        let r = rc(RewardVariant::InverseError);
        assert!((r.reward(0.004) - 250.0).abs() < 1e-9);
        assert_eq!(r.reward(0.5), -0.5);
        // exact hit hits the denominator floor
        assert_eq!(r.reward(0.0), 1e6);
    }

    #[test]
    fn reward_config_validation() {
        let bad = RewardConfig {
            tol_delta_mm: 0.2,
            ..RewardConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn synthetic_env() -> Environment {
        let g = StateGrid::with_n(3);
        let depths = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0045, 1.2, 1.3, 1.0];
        let cache = Arc::new(DepthCache::from_depths(g, &depths).unwrap());
        Environment::new(cache, rc(RewardVariant::Paper)).unwrap()
    }

    #[test]
    fn step_moves_and_scores() {
        let env = synthetic_env();
        let t = env.step(StateId::new(0, 1), Action { di: 1, dj: 1 }).unwrap();
        assert_eq!(t.next, StateId::new(1, 2));
        assert_eq!(t.depth_mm, 1.0045);
        assert!(t.terminal);
        assert!(t.reward > 1.0);
        let t = env.step(StateId::new(1, 1), Action { di: 1, dj: 1 }).unwrap();
        assert_eq!(t.next, StateId::new(2, 2));
        assert_eq!(t.reward, 1.0);
    }

    #[test]
    fn step_rejects_leaving_grid() {
        let env = synthetic_env();
        let err = env.step(StateId::new(0, 0), Action { di: -1, dj: 0 }).unwrap_err();
        assert!(matches!(err, EnvError::InvalidAction { .. }));
    }

    #[test]
    fn unconverged_depth_fails_step() {
        let g = StateGrid::with_n(2);
        let mut cache = DepthCache::from_depths(g, &[1.0; 4]).unwrap();
        let _ = cache.cells[3].take();
        let _ = cache.cells[3].set(Ok(DepthResult {
            depth_mm: 1.0,
            converged: false,
            t_used: 10.125,
            x_offset_mm: 0.0,
        }));
        let env = Environment::new(Arc::new(cache), RewardConfig::default()).unwrap();
        let err = env.step(StateId::new(0, 0), Action { di: 1, dj: 1 }).unwrap_err();
        assert!(err.to_string().starts_with("environment evaluation failed"), "{err}");
    }

    #[test]
    fn from_depths_size_checked() {
        assert!(matches!(
            DepthCache::from_depths(StateGrid::with_n(2), &[1.0; 3]),
            Err(EnvError::DepthMapSize { got: 3, expected: 4 })
        ));
    }
}
