//! One-parameter hyperparameter sweeps with replicated, seeded runs.
//!
//! Replicate `r` uses [`rng::replicate_seed`]`(base_seed, r)` for every swept
//! value, so values are compared on common random streams. Replicates and
//! values train in parallel; results are gathered back in (value, replicate)
//! order, so output never depends on thread count.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::RunConfig;
use crate::environment::{DepthCache, EnvError, Environment, StateGrid};
use crate::oracle::{self, GridReport, OracleError, PassPolicy, Verdict};
use crate::qlearn::{self, EpisodeTrace, QLearnError, RunResult};
use crate::rng;
use crate::thermal::{MaterialEnv, ThermalError, ThermalModel};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("replicate lists are ragged: replicate {replicate} has {got} episodes, expected {expected}")]
    Ragged {
        replicate: usize,
        got: usize,
        expected: usize,
    },
    #[error("no replicates to aggregate")]
    Empty,
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("{param} = {value}, replicate {replicate}: {source}")]
    Run {
        param: SweptParam,
        value: f64,
        replicate: usize,
        #[source]
        source: QLearnError,
    },
    #[error("{param} = {value}: {source}")]
    Oracle {
        param: SweptParam,
        value: f64,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    N,
    Epsilon,
    Gamma,
    Alpha,
    Episodes,
}

impl SweptParam {
    pub const ALL: [SweptParam; 5] = [
        SweptParam::N,
        SweptParam::Epsilon,
        SweptParam::Gamma,
        SweptParam::Alpha,
        SweptParam::Episodes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweptParam::N => "n",
            SweptParam::Epsilon => "epsilon",
            SweptParam::Gamma => "gamma",
            SweptParam::Alpha => "alpha",
            SweptParam::Episodes => "episodes",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweptParam::N => vec![5.0, 10.0, 15.0, 20.0],
            SweptParam::Epsilon | SweptParam::Gamma | SweptParam::Alpha => vec![0.25, 0.5, 0.75, 1.0],
            SweptParam::Episodes => vec![10.0, 25.0, 50.0, 75.0, 100.0, 200.0],
        }
    }

    fn is_integral(self) -> bool {
        matches!(self, SweptParam::N | SweptParam::Episodes)
    }

    pub fn check_values(self, values: &[f64]) -> Result<(), String> {
        if values.is_empty() {
            return Err("value list is empty".into());
        }
        for &v in values {
            if !v.is_finite() {
                return Err(format!("{v} is not finite"));
            }
            if self.is_integral() && (v.fract() != 0.0 || v < 1.0) {
                return Err(format!("{} takes positive integers, got {v}", self.name()));
            }
        }
        Ok(())
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            SweptParam::N => cfg.grid.n = value as usize,
            SweptParam::Epsilon => cfg.qlearn.epsilon = value,
            SweptParam::Gamma => cfg.qlearn.gamma = value,
            SweptParam::Alpha => cfg.qlearn.alpha = value,
            SweptParam::Episodes => cfg.qlearn.episodes = value as usize,
        }
        cfg
    }

    /// Directory-friendly label, e.g. `epsilon_0.25`.
    pub fn label(self, value: f64) -> String {
        format!("{}_{}", self.name(), value)
    }
}

impl fmt::Display for SweptParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweptParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
            format!("unknown parameter '{s}'; valid names: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
}

impl SweepSpec {
    /// Default value list for `param`, replicate count and seed from `base.sweep`.
    pub fn new(base: RunConfig, param: SweptParam) -> Self {
        let values = base.sweep.values.clone().unwrap_or_else(|| param.default_values());
        Self {
            replicates: base.sweep.replicates,
            base_seed: base.sweep.base_seed,
            base,
            param,
            values,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicates == 0 {
            return Err(ExperimentError::InvalidSpec("replicates must be >= 1".into()));
        }
        self.param.check_values(&self.values).map_err(ExperimentError::InvalidSpec)?;
        for &v in &self.values {
            self.param
                .apply(&self.base, v)
                .validate()
                .map_err(|e| ExperimentError::InvalidSpec(format!("{} = {v}: {e}", self.param)))?;
        }
        Ok(())
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates).map(|r| rng::replicate_seed(self.base_seed, r)).collect()
    }
}

/// Per-episode mean and population standard deviation of total reward across
/// replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub replicates: usize,
}

impl ConvergenceCurve {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Mean of `mean` over episode indices `[from, to)`.
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let w = &self.mean[from..to];
        w.iter().sum::<f64>() / w.len() as f64
    }
}

/// Aggregates per-replicate reward series. Each episode's values are summed
/// in sorted order, so the result is independent of replicate order.
pub fn aggregate_rewards(series: &[Vec<f64>]) -> Result<ConvergenceCurve, ExperimentError> {
    let first = series.first().ok_or(ExperimentError::Empty)?;
    let episodes = first.len();
    for (replicate, s) in series.iter().enumerate() {
        if s.len() != episodes {
            return Err(ExperimentError::Ragged {
                replicate,
                got: s.len(),
                expected: episodes,
            });
        }
    }
    let r = series.len() as f64;
    let mut mean = Vec::with_capacity(episodes);
    let mut std = Vec::with_capacity(episodes);
    let mut column = vec![0.0; series.len()];
    for e in 0..episodes {
        for (slot, s) in column.iter_mut().zip(series) {
            *slot = s[e];
        }
        column.sort_by(f64::total_cmp);
        let m = column.iter().sum::<f64>() / r;
        let mut dev: Vec<f64> = column.iter().map(|x| (x - m) * (x - m)).collect();
        dev.sort_by(f64::total_cmp);
        mean.push(m);
        std.push((dev.iter().sum::<f64>() / r).sqrt());
    }
    Ok(ConvergenceCurve {
        mean,
        std,
        replicates: series.len(),
    })
}

pub fn aggregate_convergence(runs: &[Vec<EpisodeTrace>]) -> Result<ConvergenceCurve, ExperimentError> {
    let series: Vec<Vec<f64>> = runs
        .iter()
        .map(|eps| eps.iter().map(|e| e.total_reward).collect())
        .collect();
    aggregate_rewards(&series)
}

/// Ordinary least squares of `values` against their index, with a one-sided
/// t-test for a positive slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
    pub t_stat: f64,
    pub df: f64,
    /// P(T ≥ t) under zero slope.
    pub p_positive: f64,
}

impl Trend {
    pub fn significantly_positive(&self, level: f64) -> bool {
        self.p_positive < level
    }
}

pub fn linear_trend(values: &[f64]) -> Trend {
    let n = values.len() as f64;
    assert!(values.len() >= 3, "trend needs at least three points");
    let mx = (n - 1.0) / 2.0;
    let my = values.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (k, y) in values.iter().enumerate() {
        let dx = k as f64 - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = values
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let r = y - (intercept + slope * k as f64);
            r * r
        })
        .sum();
    let df = n - 2.0;
    let slope_std_err = (sse / df / sxx).sqrt();
    let t_stat = if slope_std_err > 0.0 {
        slope / slope_std_err
    } else if slope > 0.0 {
        f64::INFINITY
    } else if slope < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p_positive = if t_stat.is_finite() {
        1.0 - dist.cdf(t_stat)
    } else if t_stat > 0.0 {
        0.0
    } else {
        1.0
    };
    Trend {
        slope,
        intercept,
        slope_std_err,
        t_stat,
        df,
        p_positive,
    }
}

/// Shared thermal caches keyed by (material, grid), so repeated sweeps over
/// the same grid evaluate each state once.
#[derive(Debug, Default)]
pub struct CachePool {
    entries: Mutex<Vec<(MaterialEnv, StateGrid, Arc<DepthCache>)>>,
}

impl CachePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, material: &MaterialEnv, grid: &StateGrid) -> Result<Arc<DepthCache>, ExperimentError> {
        let mut entries = self.entries.lock().expect("cache pool poisoned");
        if let Some((_, _, c)) = entries.iter().find(|(m, g, _)| m == material && g == grid) {
            return Ok(Arc::clone(c));
        }
        let cache = Arc::new(DepthCache::new(*grid, ThermalModel::new(*material)?)?);
        entries.push((*material, *grid, Arc::clone(&cache)));
        Ok(cache)
    }

    /// Environment for `cfg` with a warmed cache.
    pub fn environment(&self, cfg: &RunConfig) -> Result<Environment, ExperimentError> {
        let cache = self.get(&cfg.material_env(), &cfg.grid)?;
        cache.warm_up()?;
        Ok(Environment::new(cache, cfg.reward_config())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub value: f64,
    pub replicate: usize,
    pub seed: u64,
    pub best_p_w: f64,
    pub best_v_mmpm: f64,
    pub best_depth_mm: f64,
    pub oracle_rank: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub config: RunConfig,
    pub runs: Vec<RunResult>,
    pub curve: ConvergenceCurve,
    pub oracle: Arc<GridReport>,
    pub summaries: Vec<ReplicateSummary>,
}

impl SweepPoint {
    /// Mean of the last episode's total reward over replicates.
    pub fn mean_final_reward(&self) -> f64 {
        *self.curve.mean.last().expect("non-empty curve")
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub spec: SweepSpec,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

/// Depth tolerance and top-k used when validating replicate best states.
pub const VALIDATION_TOP_K: usize = 3;
pub const VALIDATION_DEPTH_TOL_MM: f64 = 0.05;

pub fn run_sweep(spec: &SweepSpec, pool: &CachePool) -> Result<SweepOutcome, ExperimentError> {
    spec.validate()?;
    let seeds = spec.replicate_seeds();

    let mut configs = Vec::with_capacity(spec.values.len());
    let mut envs = Vec::with_capacity(spec.values.len());
    let mut oracles = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let cfg = spec.param.apply(&spec.base, value);
        let env = pool.environment(&cfg)?;
        let rc = cfg.reward_config();
        let report = oracle::brute_force_rank(env.cache(), rc.delta_opt_mm, rc.tol_r_mm).map_err(|source| {
            ExperimentError::Oracle {
                param: spec.param,
                value,
                source,
            }
        })?;
        configs.push(cfg);
        envs.push(env);
        oracles.push(Arc::new(report));
    }

    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.replicates).map(move |r| (v, r)))
        .collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(v, r)| {
            let mut hp = configs[v].hyperparams();
            hp.seed = seeds[r];
            qlearn::train(&envs[v], &hp).map_err(|source| ExperimentError::Run {
                param: spec.param,
                value: spec.values[v],
                replicate: r,
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut runs = runs.into_iter();
    let mut points = Vec::with_capacity(spec.values.len());
    for (v, &value) in spec.values.iter().enumerate() {
        let point_runs: Vec<RunResult> = runs.by_ref().take(spec.replicates).collect();
        let traces: Vec<Vec<EpisodeTrace>> = point_runs.iter().map(|r| r.episodes.clone()).collect();
        let curve = aggregate_convergence(&traces)?;
        let mut summaries = Vec::with_capacity(point_runs.len());
        for (replicate, run) in point_runs.iter().enumerate() {
            let verdict = oracle::validate_run(
                &oracles[v],
                run,
                VALIDATION_TOP_K,
                VALIDATION_DEPTH_TOL_MM,
                PassPolicy::RankOrDepth,
            )
            .map_err(|source| ExperimentError::Oracle {
                param: spec.param,
                value,
                source,
            })?;
            summaries.push(ReplicateSummary {
                value,
                replicate,
                seed: seeds[replicate],
                best_p_w: run.best.power_w,
                best_v_mmpm: run.best.speed_mmpm,
                best_depth_mm: run.best.depth_mm,
                oracle_rank: verdict.oracle_rank,
                verdict,
            });
        }
        points.push(SweepPoint {
            value,
            config: configs[v].clone(),
            runs: point_runs,
            curve,
            oracle: Arc::clone(&oracles[v]),
            summaries,
        });
    }
    Ok(SweepOutcome {
        spec: spec.clone(),
        seeds,
        points,
    })
}
