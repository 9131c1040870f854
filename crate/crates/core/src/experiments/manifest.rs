//! Per-run manifest: config hash, version, constants and check outcomes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// `false` for diagnostics that are reported but not part of the verdict.
    pub required: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            required: true,
            detail: String::new(),
        }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            passed: value >= threshold,
            ..Self::at_most(name, value, threshold)
        }
    }

    pub fn flag(name: &str, passed: bool) -> Self {
        Self {
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            ..Self::at_most(name, 0.0, 0.0)
        }
    }

    pub fn informational(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Constants under their conventional names; absent when not applicable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub nu: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub k: Option<f64>,
    #[serde(rename = "C")]
    pub c_coercive: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub chi: Option<f64>,
    #[serde(rename = "A1")]
    pub a1: Option<f64>,
    #[serde(rename = "A2")]
    pub a2: Option<f64>,
    pub r: Option<f64>,
    #[serde(rename = "Lambda")]
    pub lambda: Option<f64>,
    pub theta: Option<[f64; 2]>,
    pub eps: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub n: Vec<usize>,
    #[serde(rename = "M")]
    pub growth_m: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    /// SHA-256 of the resolved configuration's JSON form.
    pub config_hash: String,
    pub seed: u64,
    pub all_required_passed: bool,
    pub checks: Vec<Check>,
    pub constants: Constants,
    pub outputs: Vec<String>,
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(config.to_json_string()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new(
        experiment: &str,
        config: &ExperimentConfig,
        checks: Vec<Check>,
        constants: Constants,
        outputs: Vec<String>,
    ) -> Result<Self> {
        Ok(Self {
            experiment: experiment.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(config)?,
            seed: config.seed,
            all_required_passed: checks.iter().filter(|c| c.required).all(|c| c.passed),
            checks,
            constants,
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
