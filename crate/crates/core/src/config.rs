//! Run configuration. TOML on input (JSON also accepted, which is what run
//! snapshots are written as). Every section is optional; missing keys take the
//! defaults that reproduce the reference 10×10 study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::{EnvError, RewardConfig, RewardVariant, StateGrid};
use crate::experiments::SweptParam;
use crate::qlearn::{Hyperparams, QLearnError, Readout};
use crate::thermal::{MaterialEnv, ThermalError};
use crate::units;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(section: &str, field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: format!("{section}.{field}"),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub t0_k: f64,
    pub t_liq_k: f64,
    pub cp: f64,
    pub rho: f64,
    pub diffusivity: f64,
    pub sigma_l_mm: f64,
    pub absorptivity: f64,
}

impl Default for MaterialSection {
    fn default() -> Self {
        Self::from(&MaterialEnv::default())
    }
}

impl From<&MaterialEnv> for MaterialSection {
    fn from(m: &MaterialEnv) -> Self {
        Self {
            t0_k: m.t0,
            t_liq_k: m.t_liq,
            cp: m.cp,
            rho: m.rho,
            diffusivity: m.diffusivity,
            // Snapped to 1e-12 mm so a value read from a file converts back unchanged.
            sigma_l_mm: (units::m_to_mm(m.sigma_l) * 1e12).round() / 1e12,
            absorptivity: m.absorptivity,
        }
    }
}

impl MaterialSection {
    pub fn to_env(&self) -> MaterialEnv {
        MaterialEnv {
            t0: self.t0_k,
            t_liq: self.t_liq_k,
            cp: self.cp,
            rho: self.rho,
            diffusivity: self.diffusivity,
            sigma_l: units::mm_to_m(self.sigma_l_mm),
            absorptivity: self.absorptivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub delta_opt_mm: f64,
    pub tol_r_mm: f64,
    pub tol_delta_mm: f64,
    pub denom_floor_mm: f64,
    pub variant: RewardVariant,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardConfig::default();
        Self {
            delta_opt_mm: r.delta_opt_mm,
            tol_r_mm: r.tol_r_mm,
            tol_delta_mm: r.tol_delta_mm,
            denom_floor_mm: r.denom_floor_mm,
            variant: r.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnSection {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub n_epochs: usize,
    pub seed: u64,
    pub readout: Readout,
}

impl Default for QLearnSection {
    fn default() -> Self {
        let h = Hyperparams::default();
        Self {
            alpha: h.alpha,
            gamma: h.gamma,
            epsilon: h.epsilon,
            episodes: h.episodes,
            n_epochs: h.n_epochs,
            seed: h.seed,
            readout: h.readout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub param: Option<SweptParam>,
    /// Overrides the default value list of the swept parameter.
    pub values: Option<Vec<f64>>,
    pub replicates: usize,
    pub base_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            param: None,
            values: None,
            replicates: 10,
            base_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialSection,
    pub grid: StateGrid,
    pub reward: RewardSection,
    pub qlearn: QLearnSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|span| {
                    let (line, col) = line_col(text, span.start);
                    format!("line {line}, column {col}: ")
                })
                .unwrap_or_default();
            format!("{location}{}", e.message())
        })
    }

    fn from_json_str(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("line {}, column {}: {e}", e.line(), e.column()))
    }

    /// Parses TOML text and validates it.
    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg = Self::from_toml_str(text).map_err(|message| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.material.to_env().validate().map_err(|e| match e {
            ThermalError::InvalidInput { field, reason } => {
                let key = match field {
                    "t0" => "t0_k",
                    "t_liq" => "t_liq_k",
                    "sigma_l" => "sigma_l_mm",
                    other => other,
                };
                ConfigError::invalid("material", key, reason)
            }
            other => ConfigError::invalid("material", "?", other.to_string()),
        })?;
        self.grid.validate().map_err(|e| env_error("grid", e))?;
        self.reward_config().validate().map_err(|e| env_error("reward", e))?;
        self.hyperparams().validate().map_err(|e| match e {
            QLearnError::InvalidHyperparams { field, reason } => ConfigError::invalid("qlearn", field, reason),
            other => ConfigError::invalid("qlearn", "?", other.to_string()),
        })?;
        if self.sweep.replicates == 0 {
            return Err(ConfigError::invalid("sweep", "replicates", "must be >= 1"));
        }
        if let (Some(param), Some(values)) = (self.sweep.param, &self.sweep.values) {
            param
                .check_values(values)
                .map_err(|reason| ConfigError::invalid("sweep", "values", reason))?;
        }
        Ok(())
    }

    pub fn material_env(&self) -> MaterialEnv {
        self.material.to_env()
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            delta_opt_mm: self.reward.delta_opt_mm,
            tol_r_mm: self.reward.tol_r_mm,
            tol_delta_mm: self.reward.tol_delta_mm,
            denom_floor_mm: self.reward.denom_floor_mm,
            variant: self.reward.variant,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let q = &self.qlearn;
        Hyperparams {
            alpha: q.alpha,
            gamma: q.gamma,
            epsilon: q.epsilon,
            episodes: q.episodes,
            n_epochs: q.n_epochs,
            seed: q.seed,
            readout: q.readout,
        }
    }

    pub fn set_hyperparams(&mut self, h: &Hyperparams) {
        self.qlearn = QLearnSection {
            alpha: h.alpha,
            gamma: h.gamma,
            epsilon: h.epsilon,
            episodes: h.episodes,
            n_epochs: h.n_epochs,
            seed: h.seed,
            readout: h.readout,
        };
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn env_error(section: &str, e: EnvError) -> ConfigError {
    match e {
        EnvError::InvalidConfig { field, reason } => ConfigError::invalid(section, field, reason),
        other => ConfigError::invalid(section, "?", other.to_string()),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}
