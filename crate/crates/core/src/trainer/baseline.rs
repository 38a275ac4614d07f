//! Ground-truth-reward SAC reference runs and the stored threshold derived from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_scripted, RewardSource, RunConfig};
use crate::error::{Error, Result};

pub const REGISTRATION_SEEDS: [u64; 5] = [100, 101, 102, 103, 104];
pub const BASELINE_STEPS: u64 = 30_000;
/// Fraction of the median's magnitude the threshold gives away.
pub const BASELINE_SLACK: f64 = 0.2;

/// Same run with the environment's reward stored in replay and no feedback at all.
pub fn ground_truth_config(base: &RunConfig, seed: u64, total_steps: u64) -> RunConfig {
    RunConfig {
        reward_source: RewardSource::GroundTruth,
        total_feedback: 0,
        seed,
        total_steps,
        metrics_path: None,
        sessions_path: None,
        checkpoint_dir: None,
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineThreshold {
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// Final evaluation return of each registration seed.
    pub returns: Vec<f64>,
    pub median_return: f64,
    pub slack: f64,
    /// Returns at or above this count as near-optimal.
    pub threshold: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BaselineThreshold {
    pub fn from_returns(seeds: Vec<u64>, total_steps: u64, returns: Vec<f64>, slack: f64) -> Result<Self> {
        if returns.is_empty() || returns.len() != seeds.len() {
            return Err(Error::InvalidInput("one return per registration seed is required".into()));
        }
        let median_return = median(&returns);
        Ok(Self {
            seeds,
            total_steps,
            returns,
            median_return,
            slack,
            threshold: median_return - slack * median_return.abs(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Runs every registration seed for `total_steps` and derives the threshold.
pub fn register_baseline(base: &RunConfig, seeds: &[u64], total_steps: u64) -> Result<BaselineThreshold> {
    let returns = seeds
        .iter()
        .map(|&seed| run_scripted(&ground_truth_config(base, seed, total_steps)).map(|s| s.final_evaluation.mean_return))
        .collect::<Result<Vec<_>>>()?;
    BaselineThreshold::from_returns(seeds.to_vec(), total_steps, returns, BASELINE_SLACK)
}
