//! Exhaustive ground truth over the grid: every state's depth, ranked by
//! distance to the target. Independent of anything the learner produces.

use serde::{Deserialize, Serialize};

use crate::environment::{DepthCache, EnvError, StateGrid, StateId};
use crate::qlearn::RunResult;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("state {state} did not reach steady state (t = {t_used} s)")]
    Unconverged { state: StateId, t_used: f64 },
    #[error("run grid {run:?} does not match report grid {report:?}")]
    GridMismatch { report: StateGrid, run: StateGrid },
    #[error("k must be >= 1")]
    InvalidK,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub state: StateId,
    pub flat: usize,
    pub power_w: f64,
    pub speed_mmpm: f64,
    pub depth_mm: f64,
    pub error_mm: f64,
    /// 1 is closest to the target; ties go to the lower flat id.
    pub rank: usize,
    /// `error_mm <= tol_r`.
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid: StateGrid,
    pub delta_opt_mm: f64,
    pub tol_r_mm: f64,
    /// Flat-id order.
    pub rows: Vec<GridRow>,
}

impl GridReport {
    pub fn best(&self) -> &GridRow {
        self.rows.iter().find(|r| r.rank == 1).expect("non-empty grid")
    }

    pub fn row(&self, s: StateId) -> Option<&GridRow> {
        self.rows.get(self.grid.flat(s)).filter(|r| r.state == s)
    }

    /// Rows sorted by rank.
    pub fn ranked(&self) -> Vec<&GridRow> {
        let mut v: Vec<&GridRow> = self.rows.iter().collect();
        v.sort_by_key(|r| r.rank);
        v
    }

    pub fn top_k(&self, k: usize) -> Vec<StateId> {
        self.ranked().into_iter().take(k).map(|r| r.state).collect()
    }

    pub fn band(&self) -> Vec<&GridRow> {
        self.rows.iter().filter(|r| r.in_band).collect()
    }
}

/// Evaluates every state through `cache` (in parallel) and ranks by
/// |δ − δ_opt|.
pub fn brute_force_rank(cache: &DepthCache, delta_opt_mm: f64, tol_r_mm: f64) -> Result<GridReport, OracleError> {
    let grid = *cache.grid();
    let results = cache.results()?;
    let mut rows = Vec::with_capacity(results.len());
    for (flat, (state, r)) in grid.states().zip(&results).enumerate() {
        if !r.converged {
            return Err(OracleError::Unconverged {
                state,
                t_used: r.t_used,
            });
        }
        let (power_w, speed_mmpm) = grid.state_params(state)?;
        let error_mm = (r.depth_mm - delta_opt_mm).abs();
        rows.push(GridRow {
            state,
            flat,
            power_w,
            speed_mmpm,
            depth_mm: r.depth_mm,
            error_mm,
            rank: 0,
            in_band: error_mm <= tol_r_mm,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].error_mm.total_cmp(&rows[b].error_mm).then(a.cmp(&b)));
    for (rank0, idx) in order.into_iter().enumerate() {
        rows[idx].rank = rank0 + 1;
    }
    Ok(GridReport {
        grid,
        delta_opt_mm,
        tol_r_mm,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassPolicy {
    RankOnly,
    /// Pass on either criterion.
    #[default]
    RankOrDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub state: StateId,
    pub oracle_rank: usize,
    pub k: usize,
    pub within_top_k: bool,
    pub depth_mm: f64,
    /// |δ_run − δ_opt|.
    pub depth_error_mm: f64,
    /// |δ_run − δ_opt| − |δ_oracle_best − δ_opt|.
    pub gap_to_best_mm: f64,
    pub depth_tol_mm: f64,
    pub within_depth_tol: bool,
    pub passed: bool,
}

/// Compares a run's best state against the oracle ranking.
pub fn validate_run(
    report: &GridReport,
    run: &RunResult,
    k: usize,
    depth_tol_mm: f64,
    policy: PassPolicy,
) -> Result<Verdict, OracleError> {
    if k == 0 {
        return Err(OracleError::InvalidK);
    }
    if report.grid != run.grid {
        return Err(OracleError::GridMismatch {
            report: report.grid,
            run: run.grid,
        });
    }
    let row = report.row(run.best.state).ok_or(EnvError::OutOfGrid {
        i: run.best.state.i,
        j: run.best.state.j,
        n: report.grid.n,
    })?;
    let within_top_k = row.rank <= k;
    let within_depth_tol = row.error_mm <= depth_tol_mm;
    let passed = match policy {
        PassPolicy::RankOnly => within_top_k,
        PassPolicy::RankOrDepth => within_top_k || within_depth_tol,
    };
    Ok(Verdict {
        state: row.state,
        oracle_rank: row.rank,
        k,
        within_top_k,
        depth_mm: row.depth_mm,
        depth_error_mm: row.error_mm,
        gap_to_best_mm: row.error_mm - report.best().error_mm,
        depth_tol_mm,
        within_depth_tol,
        passed,
    })
}
