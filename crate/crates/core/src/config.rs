//! The single JSON configuration that drives a benchmark run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{MpcParams, MppiParams};
use crate::error::{Error, Result};
use crate::scheme::SolverSettings;
use crate::system::BenchmarkConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: [usize; 2],
    /// Cells added outside the arena on every side.
    pub pad: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nodes: [70, 70], pad: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub dt: f64,
    pub count: usize,
    pub seed: u64,
    /// Initial states need `V_s(x, 0) >= margin`.
    pub margin: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            count: 100,
            seed: 0,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub dt: f64,
    pub directions: usize,
    pub coarse_nodes: Vec<usize>,
    pub coarse_pad: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            directions: 16,
            coarse_nodes: vec![11, 21],
            coarse_pad: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkConfig,
    pub grid: GridConfig,
    pub solver: SolverSettings,
    pub gamma: f64,
    pub rollout: RolloutConfig,
    pub mppi: MppiParams,
    pub filter: FilterConfig,
    pub mpc: MpcParams,
    pub oracle: OracleConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        self.solver.store_intervals(self.benchmark.horizon)?;
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.rollout.dt > 0.0) || !(self.rollout.margin >= 0.0) {
            return Err(Error::Config("rollout needs dt > 0 and margin >= 0".into()));
        }
        if self.oracle.directions < 3 {
            return Err(Error::Config("oracle needs at least 3 control directions".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config always serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"grid": {"nodes": [21, 21]}}"#).unwrap();
        assert_eq!(cfg.grid.nodes, [21, 21]);
        assert_eq!(cfg.grid.pad, 4);
        assert_eq!(cfg.rollout, RolloutConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"gird": {}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.rollout.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
