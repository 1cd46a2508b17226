//! CSV and JSON writers. Depths are written in mm with 4 decimals; Q-values
//! and rewards use shortest round-trip formatting so files are bit-faithful.
//!
//! Every output directory gets a `config.json` next to the data, which
//! [`RunConfig::load`] reads back directly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::environment::{Action, DepthCache, EnvError, StateGrid};
use crate::experiments::{ConvergenceCurve, SweepOutcome};
use crate::oracle::{GridReport, Verdict};
use crate::qlearn::{EpisodeTrace, QTable, RunResult};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExportError + '_ {
    move |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn mm4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn ensure_dir(dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, ExportError> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), ExportError> {
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ExportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_config(path: &Path, cfg: &RunConfig) -> Result<(), ExportError> {
    write_json(path, cfg)
}

/// `state_id,i,j,power_w,speed_mmpm,depth_mm`
pub fn write_depth_map(path: &Path, cache: &DepthCache) -> Result<(), ExportError> {
    let grid = *cache.grid();
    let results = cache.results()?;
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    (|| {
        w.write_record(["state_id", "i", "j", "power_w", "speed_mmpm", "depth_mm"])?;
        for (flat, (s, r)) in grid.states().zip(&results).enumerate() {
            w.write_record([
                flat.to_string(),
                s.i.to_string(),
                s.j.to_string(),
                grid.power_w(s.i).to_string(),
                grid.speed_mmpm(s.j).to_string(),
                mm4(r.depth_mm),
            ])?;
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, path)
}

/// `state_id,i,j,power_w,speed_mmpm,depth_mm,abs_error_mm,rank,in_band`
pub fn write_pv_map(path: &Path, report: &GridReport) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    (|| {
        w.write_record([
            "state_id",
            "i",
            "j",
            "power_w",
            "speed_mmpm",
            "depth_mm",
            "abs_error_mm",
            "rank",
            "in_band",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.flat.to_string(),
                r.state.i.to_string(),
                r.state.j.to_string(),
                r.power_w.to_string(),
                r.speed_mmpm.to_string(),
                mm4(r.depth_mm),
                mm4(r.error_mm),
                r.rank.to_string(),
                r.in_band.to_string(),
            ])?;
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, path)
}

/// `state_id` followed by one column per action label, in action order.
pub fn write_qtable_csv(path: &Path, q: &QTable) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    (|| {
        let mut header = vec!["state_id".to_string()];
        header.extend(Action::ALL.iter().map(|a| a.label()));
        w.write_record(&header)?;
        for flat in 0..q.rows() {
            let mut rec = vec![flat.to_string()];
            rec.extend(q.row(flat).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, path)
}

#[derive(Serialize)]
struct QTableJson<'a> {
    config: &'a RunConfig,
    seed: u64,
    generator: &'a str,
    grid: &'a StateGrid,
    actions: Vec<String>,
    /// One row per flat state id.
    table: Vec<&'a [f64]>,
}

pub fn write_qtable_json(path: &Path, cfg: &RunConfig, run: &RunResult) -> Result<(), ExportError> {
    let doc = QTableJson {
        config: cfg,
        seed: run.hyperparams.seed,
        generator: &run.generator,
        grid: &run.grid,
        actions: Action::ALL.iter().map(|a| a.label()).collect(),
        table: (0..run.q.rows()).map(|f| run.q.row(f)).collect(),
    };
    write_json(path, &doc)
}

/// `episode,total_reward,epochs,terminated_early`
pub fn write_convergence(path: &Path, episodes: &[EpisodeTrace]) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    (|| {
        w.write_record(["episode", "total_reward", "epochs", "terminated_early"])?;
        for (e, t) in episodes.iter().enumerate() {
            w.write_record([
                e.to_string(),
                t.total_reward.to_string(),
                t.epochs().to_string(),
                t.terminated_early.to_string(),
            ])?;
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, path)
}

/// `episode,mean_reward,std_reward,replicates`
pub fn write_curve(path: &Path, curve: &ConvergenceCurve) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    (|| {
        w.write_record(["episode", "mean_reward", "std_reward", "replicates"])?;
        for (e, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
            w.write_record([e.to_string(), m.to_string(), s.to_string(), curve.replicates.to_string()])?;
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, path)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub generator: String,
    pub best_state: [usize; 2],
    pub best_power_w: f64,
    pub best_speed_mmpm: f64,
    /// Rounded to 4 decimals.
    pub best_depth_mm: f64,
    pub readout: String,
    pub readout_score: f64,
    pub episodes: usize,
    pub episodes_terminated_early: usize,
    pub oracle: Option<Verdict>,
    pub config: RunConfig,
}

impl TrainSummary {
    pub fn new(cfg: &RunConfig, run: &RunResult, oracle: Option<Verdict>) -> Self {
        Self {
            seed: run.hyperparams.seed,
            generator: run.generator.clone(),
            best_state: [run.best.state.i, run.best.state.j],
            best_power_w: run.best.power_w,
            best_speed_mmpm: run.best.speed_mmpm,
            best_depth_mm: round4(run.best.depth_mm),
            readout: run.hyperparams.readout.name().to_string(),
            readout_score: run.best.score,
            episodes: run.episodes.len(),
            episodes_terminated_early: run.episodes.iter().filter(|e| e.terminated_early).count(),
            oracle,
            config: cfg.clone(),
        }
    }
}

/// Files written by a single training run.
pub fn write_train(dir: &Path, cfg: &RunConfig, run: &RunResult, oracle: Option<Verdict>) -> Result<(), ExportError> {
    ensure_dir(dir)?;
    write_config(&dir.join("config.json"), cfg)?;
    write_qtable_csv(&dir.join("qtable.csv"), &run.q)?;
    write_qtable_json(&dir.join("qtable.json"), cfg, run)?;
    write_convergence(&dir.join("convergence.csv"), &run.episodes)?;
    write_json(&dir.join("summary.json"), &TrainSummary::new(cfg, run, oracle))
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    param: &'a str,
    values: &'a [f64],
    replicates: usize,
    base_seed: u64,
    replicate_seeds: &'a [u64],
    seed_scheme: &'static str,
    generator: &'static str,
    band: &'static str,
    validation: String,
    subdirectories: Vec<String>,
}

/// Sweep tree:
///
/// ```text
/// <dir>/sweep.json
/// <dir>/summary.csv
/// <dir>/<param>_<value>/config.json
/// <dir>/<param>_<value>/convergence.csv
/// <dir>/<param>_<value>/run_XX/{qtable.csv,convergence.csv,config.json}
/// ```
pub fn write_sweep(dir: &Path, out: &SweepOutcome) -> Result<(), ExportError> {
    ensure_dir(dir)?;
    let spec = &out.spec;
    let subdirs: Vec<String> = out.points.iter().map(|p| spec.param.label(p.value)).collect();
    let meta = SweepMeta {
        param: spec.param.name(),
        values: &spec.values,
        replicates: spec.replicates,
        base_seed: spec.base_seed,
        replicate_seeds: &out.seeds,
        seed_scheme: "replicate r uses splitmix64(base_seed + 0x9e3779b97f4a7c15 * (r + 1)); the same seeds are reused for every value",
        generator: crate::rng::GENERATOR,
        band: "population standard deviation of episode total reward across replicates",
        validation: format!(
            "best state passes if oracle rank <= {} or |depth - delta_opt| <= {} mm",
            crate::experiments::VALIDATION_TOP_K,
            crate::experiments::VALIDATION_DEPTH_TOL_MM
        ),
        subdirectories: subdirs.clone(),
    };
    write_json(&dir.join("sweep.json"), &meta)?;

    let summary_path = dir.join("summary.csv");
    let mut w = csv_writer(&summary_path)?;
    let err = csv_err(&summary_path);
    (|| {
        w.write_record([
            "value",
            "replicate",
            "seed",
            "best_p_w",
            "best_v_mmpm",
            "best_depth_mm",
            "oracle_rank",
            "passed",
        ])?;
        for p in &out.points {
            for s in &p.summaries {
                w.write_record([
                    s.value.to_string(),
                    s.replicate.to_string(),
                    s.seed.to_string(),
                    s.best_p_w.to_string(),
                    s.best_v_mmpm.to_string(),
                    mm4(s.best_depth_mm),
                    s.oracle_rank.to_string(),
                    s.verdict.passed.to_string(),
                ])?;
            }
        }
        Ok(())
    })()
    .map_err(err)?;
    finish(w, &summary_path)?;

    for (p, sub) in out.points.iter().zip(&subdirs) {
        let pdir = dir.join(sub);
        ensure_dir(&pdir)?;
        write_config(&pdir.join("config.json"), &p.config)?;
        write_curve(&pdir.join("convergence.csv"), &p.curve)?;
        for (r, run) in p.runs.iter().enumerate() {
            let rdir = pdir.join(format!("run_{r:02}"));
            ensure_dir(&rdir)?;
            let mut cfg = p.config.clone();
            cfg.set_hyperparams(&run.hyperparams);
            write_config(&rdir.join("config.json"), &cfg)?;
            write_qtable_csv(&rdir.join("qtable.csv"), &run.q)?;
            write_convergence(&rdir.join("convergence.csv"), &run.episodes)?;
        }
    }
    Ok(())
}
