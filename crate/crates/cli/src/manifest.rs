use std::path::PathBuf;

use ccs_ica::IcaConfig;
use serde::{Deserialize, Serialize};

/// Record of one `separate` run. Feeding it back through `--config`
/// reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: IcaConfig,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub channels: usize,
    pub samples: usize,
    pub bandwidth: f64,
    pub iterations: usize,
    pub converged: bool,
    pub step_halvings: usize,
    pub final_divergence: f64,
    /// Per-source SIR in dB when reference sources were given.
    pub sir_db: Option<Vec<f64>>,
    pub total_sir_db: Option<f64>,
    pub wall_time_s: f64,
}

/// Record of one `gen` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenManifest {
    pub tool_version: String,
    pub preset: String,
    pub samples: usize,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub outputs: Vec<PathBuf>,
}

pub fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}
