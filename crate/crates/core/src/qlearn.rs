//! Tabular Q-learning over the process-parameter grid.
//!
//! One training run owns one [`QTable`] and runs its episodes sequentially.
//! Each episode starts from a uniformly random state, then repeats
//! select → step → update until the successor is terminal or the epoch cap is
//! hit. Termination is tested on the successor, so an episode always records
//! at least one epoch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Action, EnvError, Environment, StateGrid, StateId};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QLearnError {
    #[error("invalid {field}: {reason}")]
    InvalidHyperparams { field: &'static str, reason: String },
    #[error("non-finite Q-value at state {state}, action {action}")]
    NonFinite { state: StateId, action: Action },
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<QLearnError>,
    },
    #[error("q-table has {got} rows, grid has {expected} states")]
    ShapeMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How the best state is read off a trained table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// A state scores the largest Q over the (state, action) pairs that lead
    /// into it.
    #[default]
    Successor,
    /// A state scores the largest Q in its own row (valid actions only).
    RowMax,
}

impl Readout {
    pub fn name(self) -> &'static str {
        match self {
            Readout::Successor => "successor",
            Readout::RowMax => "row_max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Learning rate, (0, 1].
    pub alpha: f64,
    /// Discount, [0, 1].
    pub gamma: f64,
    /// Exploration probability, [0, 1].
    pub epsilon: f64,
    pub episodes: usize,
    /// Per-episode epoch cap.
    pub n_epochs: usize,
    pub seed: u64,
    pub readout: Readout,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 0.25,
            epsilon: 0.25,
            episodes: 100,
            n_epochs: 50,
            seed: 0,
            readout: Readout::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), QLearnError> {
        let bad = |field, reason: String| Err(QLearnError::InvalidHyperparams { field, reason });
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("must be in (0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", format!("must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", format!("must be in [0, 1], got {}", self.epsilon));
        }
        if self.episodes == 0 {
            return bad("episodes", "must be >= 1".into());
        }
        if self.n_epochs == 0 {
            return bad("n_epochs", "must be >= 1".into());
        }
        Ok(())
    }
}

/// `n² × 8` table, row = flat state id, column = [`Action::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    rows: usize,
    values: Vec<f64>,
}

impl QTable {
    pub const ACTIONS: usize = 8;

    pub fn zeros(grid: &StateGrid) -> Self {
        let rows = grid.num_states();
        Self {
            rows,
            values: vec![0.0; rows * Self::ACTIONS],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, Self::ACTIONS)
    }

    pub fn row(&self, flat: usize) -> &[f64] {
        &self.values[flat * Self::ACTIONS..(flat + 1) * Self::ACTIONS]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, grid: &StateGrid, s: StateId, a: Action) -> f64 {
        self.values[grid.flat(s) * Self::ACTIONS + a.index()]
    }

    /// Overwrites one entry, e.g. to seed a table with prior knowledge.
    pub fn set(&mut self, grid: &StateGrid, s: StateId, a: Action, value: f64) -> Result<(), QLearnError> {
        self.check_shape(grid)?;
        grid.check(s)?;
        if !value.is_finite() {
            return Err(QLearnError::NonFinite { state: s, action: a });
        }
        *self.slot(grid, s, a) = value;
        Ok(())
    }

    fn slot(&mut self, grid: &StateGrid, s: StateId, a: Action) -> &mut f64 {
        &mut self.values[grid.flat(s) * Self::ACTIONS + a.index()]
    }

    fn check_shape(&self, grid: &StateGrid) -> Result<(), QLearnError> {
        if self.rows != grid.num_states() {
            return Err(QLearnError::ShapeMismatch {
                got: self.rows,
                expected: grid.num_states(),
            });
        }
        Ok(())
    }

    /// max over valid actions of Q(s, ·).
    pub fn max_valid(&self, grid: &StateGrid, s: StateId) -> f64 {
        grid.valid_actions(s)
            .into_iter()
            .map(|a| self.get(grid, s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-state scores under `readout`, in flat-id order.
    pub fn state_scores(&self, grid: &StateGrid, readout: Readout) -> Vec<f64> {
        match readout {
            Readout::RowMax => grid.states().map(|s| self.max_valid(grid, s)).collect(),
            Readout::Successor => {
                let mut scores = vec![f64::NEG_INFINITY; grid.num_states()];
                for s in grid.states() {
                    for a in grid.valid_actions(s) {
                        let next = grid.apply(s, a).expect("valid action");
                        let slot = &mut scores[grid.flat(next)];
                        *slot = slot.max(self.get(grid, s, a));
                    }
                }
                scores
            }
        }
    }

    /// Highest-scoring state; ties go to the lowest flat id.
    pub fn best_state(&self, grid: &StateGrid, readout: Readout) -> (StateId, f64) {
        let scores = self.state_scores(grid, readout);
        let (flat, score) = scores
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        (grid.state(flat).expect("in grid"), score)
    }
}

/// Q(s,a) ← Q(s,a) + α [r + γ max_a' Q(s',a') − Q(s,a)], with the max taken
/// over the actions valid at `next`. Returns the new value.
pub fn q_update(
    q: &mut QTable,
    grid: &StateGrid,
    s: StateId,
    a: Action,
    reward: f64,
    next: StateId,
    hp: &Hyperparams,
) -> Result<f64, QLearnError> {
    q.check_shape(grid)?;
    grid.check(s)?;
    grid.check(next)?;
    let future = q.max_valid(grid, next);
    let slot = q.slot(grid, s, a);
    // Same as Q + α(target − Q), but gives exactly r when α = 1 and γ = 0.
    let updated = (1.0 - hp.alpha) * *slot + hp.alpha * (reward + hp.gamma * future);
    if !updated.is_finite() {
        return Err(QLearnError::NonFinite { state: s, action: a });
    }
    *slot = updated;
    Ok(updated)
}

/// ε-greedy over the valid actions at `s`. One uniform draw decides
/// explore/exploit; greedy ties are broken uniformly from the same stream.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    grid: &StateGrid,
    s: StateId,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    let valid = grid.valid_actions(s);
    debug_assert!(!valid.is_empty());
    let u: f64 = rng.random();
    if u < epsilon {
        return valid[rng.random_range(0..valid.len())];
    }
    let best = valid
        .iter()
        .map(|&a| q.get(grid, s, a))
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<Action> = valid.into_iter().filter(|&a| q.get(grid, s, a) == best).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub state: StateId,
    pub action: Action,
    pub reward: f64,
    pub next: StateId,
    /// |δ(next) − δ_opt| in mm.
    pub error_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub start: StateId,
    pub records: Vec<EpochRecord>,
    pub total_reward: f64,
    pub terminated_early: bool,
}

impl EpisodeTrace {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }
}

pub fn run_episode<R: Rng + ?Sized>(
    env: &Environment,
    q: &mut QTable,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<EpisodeTrace, QLearnError> {
    let grid = *env.grid();
    q.check_shape(&grid)?;
    let start = grid.state(rng.random_range(0..grid.num_states()))?;
    let mut s = start;
    let mut records = Vec::new();
    let mut total_reward = 0.0;
    let mut terminated_early = false;
    for _ in 0..hp.n_epochs {
        let a = select_action(q, &grid, s, hp.epsilon, rng);
        let t = env.step(s, a)?;
        q_update(q, &grid, s, a, t.reward, t.next, hp)?;
        records.push(EpochRecord {
            state: s,
            action: a,
            reward: t.reward,
            next: t.next,
            error_mm: t.error_mm,
        });
        total_reward += t.reward;
        s = t.next;
        if t.terminal {
            terminated_early = true;
            break;
        }
    }
    Ok(EpisodeTrace {
        start,
        records,
        total_reward,
        terminated_early,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestState {
    pub state: StateId,
    pub power_w: f64,
    pub speed_mmpm: f64,
    pub depth_mm: f64,
    /// Readout score of the state.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub grid: StateGrid,
    pub hyperparams: Hyperparams,
    pub q: QTable,
    pub episodes: Vec<EpisodeTrace>,
    pub best: BestState,
    pub generator: String,
}

impl RunResult {
    pub fn episode_rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }
}

/// Resolves the best state of `q` under `readout` together with its parameters.
pub fn best_state(env: &Environment, q: &QTable, readout: Readout) -> Result<BestState, QLearnError> {
    let grid = env.grid();
    q.check_shape(grid)?;
    let (state, score) = q.best_state(grid, readout);
    let (power_w, speed_mmpm) = grid.state_params(state)?;
    let depth_mm = env.cache().converged_depth(state)?;
    Ok(BestState {
        state,
        power_w,
        speed_mmpm,
        depth_mm,
        score,
    })
}

/// Runs `hp.episodes` episodes against one table. Episode `e` draws from
/// [`rng::episode_rng`]`(hp.seed, e)`.
pub fn train(env: &Environment, hp: &Hyperparams) -> Result<RunResult, QLearnError> {
    hp.validate()?;
    let grid = *env.grid();
    let mut q = QTable::zeros(&grid);
    let mut episodes = Vec::with_capacity(hp.episodes);
    for e in 0..hp.episodes {
        let mut rng = rng::episode_rng(hp.seed, e as u64);
        let trace = run_episode(env, &mut q, hp, &mut rng).map_err(|err| QLearnError::Episode {
            episode: e,
            source: Box::new(err),
        })?;
        episodes.push(trace);
    }
    let best = best_state(env, &q, hp.readout)?;
    Ok(RunResult {
        grid,
        hyperparams: *hp,
        q,
        episodes,
        best,
        generator: rng::GENERATOR.to_string(),
    })
}

/// Re-applies the recorded transitions of `episodes` to a fresh table with
/// every reward multiplied by `reward_scale`.
pub fn replay(
    grid: &StateGrid,
    episodes: &[EpisodeTrace],
    hp: &Hyperparams,
    reward_scale: f64,
) -> Result<QTable, QLearnError> {
    let mut q = QTable::zeros(grid);
    for ep in episodes {
        for r in &ep.records {
            q_update(&mut q, grid, r.state, r.action, r.reward * reward_scale, r.next, hp)?;
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{DepthCache, RewardConfig};
    use std::sync::Arc;

    fn hp(alpha: f64, gamma: f64) -> Hyperparams {
        Hyperparams {
            alpha,
            gamma,
            ..Hyperparams::default()
        }
    }

    const S: StateId = StateId::new(1, 1);
    const A: Action = Action { di: 0, dj: 1 };
    const NEXT: StateId = StateId::new(1, 2);

    #[test]
    fn update_from_zero() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        let v = q_update(&mut q, &g, S, A, 1.0, NEXT, &hp(0.25, 0.25)).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn update_with_prior_and_future() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        *q.slot(&g, S, A) = 0.5;
        // Future max 0.8 at NEXT; make every other valid action there lower.
        for a in g.valid_actions(NEXT) {
            *q.slot(&g, NEXT, a) = -1.0;
        }
        *q.slot(&g, NEXT, Action { di: -1, dj: 0 }) = 0.8;
        let v = q_update(&mut q, &g, S, A, -0.2, NEXT, &hp(0.5, 0.5)).unwrap();
        assert!((v - 0.35).abs() < 1e-15, "{v}");
    }

    #[test]
    fn degenerate_alpha_one_gamma_zero() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        *q.slot(&g, S, A) = 17.0;
        *q.slot(&g, NEXT, Action { di: 1, dj: 0 }) = 5.0;
        let v = q_update(&mut q, &g, S, A, -0.75, NEXT, &hp(1.0, 0.0)).unwrap();
        assert_eq!(v, -0.75);
    }

    #[test]
    fn update_only_touches_one_entry() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        q_update(&mut q, &g, S, A, 3.0, NEXT, &hp(0.5, 0.9)).unwrap();
        let nonzero = q.values().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn future_max_ignores_invalid_columns() {
        // At a corner only 3 actions are valid; a stray value in an invalid
        // column must not leak into the bootstrap.
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        let corner = StateId::new(0, 0);
        q.values[g.flat(corner) * 8] = 100.0; // (-1,-1) is invalid at (0,0)
        let v = q_update(&mut q, &g, StateId::new(0, 1), Action { di: 0, dj: -1 }, 1.0, corner, &hp(1.0, 1.0))
            .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn non_finite_update_rejected() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        let err = q_update(&mut q, &g, S, A, f64::INFINITY, NEXT, &hp(0.5, 0.5)).unwrap_err();
        assert!(matches!(err, QLearnError::NonFinite { .. }));
    }

    #[test]
    fn greedy_picks_unique_max() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        let target = Action { di: 1, dj: -1 };
        *q.slot(&g, S, target) = 0.1;
        let mut rng = rng::episode_rng(1, 0);
        for _ in 0..200 {
            assert_eq!(select_action(&q, &g, S, 0.0, &mut rng), target);
        }
    }

    #[test]
    fn selection_masks_invalid_actions() {
        let g = StateGrid::with_n(3);
        let q = QTable::zeros(&g);
        let mut rng = rng::episode_rng(3, 0);
        for eps in [0.0, 1.0] {
            for _ in 0..500 {
                let a = select_action(&q, &g, StateId::new(0, 0), eps, &mut rng);
                assert!(g.apply(StateId::new(0, 0), a).is_some());
            }
        }
    }

    fn line_env() -> Environment {
        let g = StateGrid::with_n(4);
        let depths: Vec<f64> = (0..16).map(|k| 0.6 + 0.05 * k as f64).collect();
        let cache = Arc::new(DepthCache::from_depths(g, &depths).unwrap());
        Environment::new(cache, RewardConfig::default()).unwrap()
    }

    #[test]
    fn epoch_cap_of_one() {
        let env = line_env();
        let mut q = QTable::zeros(env.grid());
        let h = Hyperparams {
            n_epochs: 1,
            ..Hyperparams::default()
        };
        let trace = run_episode(&env, &mut q, &h, &mut rng::episode_rng(9, 0)).unwrap();
        assert_eq!(trace.epochs(), 1);
    }

    #[test]
    fn trace_totals_consistent() {
        let env = line_env();
        let h = Hyperparams {
            episodes: 20,
            seed: 5,
            ..Hyperparams::default()
        };
        let run = train(&env, &h).unwrap();
        assert_eq!(run.episodes.len(), 20);
        for ep in &run.episodes {
            assert!(ep.epochs() <= h.n_epochs && ep.epochs() >= 1);
            let sum: f64 = ep.records.iter().map(|r| r.reward).sum();
            assert_eq!(sum, ep.total_reward);
            assert_eq!(ep.records[0].state, ep.start);
            for w in ep.records.windows(2) {
                assert_eq!(w[0].next, w[1].state);
            }
            if ep.terminated_early {
                assert!(ep.records.last().unwrap().error_mm <= 0.005);
            }
        }
    }

    #[test]
    fn gamma_zero_alpha_one_keeps_last_reward() {
        let env = line_env();
        let h = Hyperparams {
            alpha: 1.0,
            gamma: 0.0,
            episodes: 30,
            seed: 11,
            ..Hyperparams::default()
        };
        let run = train(&env, &h).unwrap();
        let g = env.grid();
        let mut last = std::collections::HashMap::new();
        for ep in &run.episodes {
            for r in &ep.records {
                last.insert((r.state, r.action), r.reward);
            }
        }
        for s in g.states() {
            for a in Action::ALL {
                let expected = last.get(&(s, a)).copied().unwrap_or(0.0);
                assert_eq!(run.q.get(g, s, a), expected);
            }
        }
    }

    #[test]
    fn readouts() {
        let g = StateGrid::with_n(3);
        let mut q = QTable::zeros(&g);
        // Row max lives at (0,0); its action points into (1,1).
        *q.slot(&g, StateId::new(0, 0), Action { di: 1, dj: 1 }) = 2.0;
        assert_eq!(q.best_state(&g, Readout::RowMax), (StateId::new(0, 0), 2.0));
        assert_eq!(q.best_state(&g, Readout::Successor), (StateId::new(1, 1), 2.0));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(hp(0.0, 0.5).validate().is_err());
        assert!(hp(0.5, 1.5).validate().is_err());
        let h = Hyperparams {
            episodes: 0,
            ..Hyperparams::default()
        };
        assert!(matches!(h.validate(), Err(QLearnError::InvalidHyperparams { field: "episodes", .. })));
    }
}
