//! Sweep configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use collapse_core::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{write_file, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: TrainConfig,
    pub alpha_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub repeats_per_cell: usize,
    pub output_dir: PathBuf,
    pub workers: usize,
}

/// `count` points `start + k·step`, computed without accumulating rounding.
pub fn linear_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + k as f64 * step).collect()
}

impl Default for SweepConfig {
    /// 21 α values `0.00, 0.05, …, 1.00` by 20 τ values `0.05, …, 1.00`.
    fn default() -> Self {
        Self {
            base: TrainConfig::default(),
            alpha_grid: (0..=20).map(|k| k as f64 / 20.0).collect(),
            tau_grid: (1..=20).map(|k| k as f64 / 20.0).collect(),
            repeats_per_cell: 1,
            output_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.alpha_grid.is_empty() || self.tau_grid.is_empty() {
            return bad("alpha_grid and tau_grid must be nonempty".into());
        }
        if !strictly_increasing(&self.alpha_grid) || !strictly_increasing(&self.tau_grid) {
            return bad("grids must be strictly increasing".into());
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("alpha {a} outside [0, 1]"));
        }
        if let Some(t) = self.tau_grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return bad(format!("tau {t} must be positive"));
        }
        if self.repeats_per_cell == 0 {
            return bad("repeats_per_cell must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if self.base.m < 2 || self.base.n < 2 {
            return bad(format!("sweeps need m >= 2 and n >= 2, got {} and {}", self.base.m, self.base.n));
        }
        // Every cell shares the base shape and optimizer, so one check suffices.
        let mut probe = self.base;
        probe.loss.alpha = self.alpha_grid[0];
        probe.loss.tau = self.tau_grid[0];
        probe.validate().map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| LabError::Json { path: PathBuf::from("<config>"), source: e })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| LabError::Json { path: path.to_path_buf(), source: e })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &(self.to_json() + "\n"))
    }

    pub fn cells(&self) -> usize {
        self.alpha_grid.len() * self.tau_grid.len()
    }
}

/// Reads a standalone [`TrainConfig`] JSON document.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let config: TrainConfig = serde_json::from_str(&text)
        .map_err(|e| LabError::Json { path: path.to_path_buf(), source: e })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let c = SweepConfig::default();
        assert_eq!(c.alpha_grid.len(), 21);
        assert_eq!(c.tau_grid.len(), 20);
        assert_eq!(c.alpha_grid[20], 1.0);
        assert_eq!(c.tau_grid[0], 0.05);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut c = SweepConfig::default();
        c.workers = 3;
        c.base.seed = 99;
        let back = SweepConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = SweepConfig::from_json(r#"{"alpha_grid": [0.0, 0.5], "base": {"epochs": 5}}"#).unwrap();
        assert_eq!(c.alpha_grid, vec![0.0, 0.5]);
        assert_eq!(c.base.epochs, 5);
        assert_eq!(c.base.m, 10);
        assert_eq!(c.tau_grid.len(), 20);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SweepConfig::from_json(r#"{"alpha_grid": []}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"alpha_grid": [0.5, 0.5]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"alpha_grid": [1.5]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"tau_grid": [0.0, 1.0]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"workers": 0}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"colour": "red"}"#).is_err());
        assert!(SweepConfig::from_json("{").is_err());
    }
}
