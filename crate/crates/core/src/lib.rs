//! Tabular Q-learning search over a laser power / scan speed grid for the
//! parameters that give a target steady-state melt-pool depth, with an
//! Eagar-Tsai moving Gaussian heat source as the environment.
//!
//! Layers, bottom up: [`quadrature`] and [`thermal`] evaluate the temperature
//! field and depth; [`environment`] turns the grid into an MDP; [`qlearn`]
//! trains an agent; [`oracle`] ranks every state exhaustively; [`experiments`]
//! runs replicated hyperparameter sweeps; [`config`], [`export`] and [`cli`]
//! handle files.

pub mod cli;
pub mod config;
pub mod environment;
pub mod experiments;
pub mod export;
pub mod oracle;
pub mod qlearn;
pub mod quadrature;
pub mod rng;
pub mod thermal;
pub mod units;
