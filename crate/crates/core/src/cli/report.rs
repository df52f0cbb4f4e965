use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::diagnostics::{EquilibriumResidual, QuadraticEquilibrium};
use crate::error::Result;
use crate::solvers::{SolverKind, StopReason};
use crate::supernet::Genotype;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalPoint {
    pub alpha: f64,
    pub w: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub step: u64,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainSummary {
    pub epochs: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
}

/// Outcome of one seed (one grid cell for sweeps). Fields that do not apply
/// to the experiment kind are left out of the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub solver: SolverKind,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<FinalPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<EquilibriumResidual>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent_violations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<QuadraticEquilibrium>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_softmax: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<Genotype>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genotype: Option<Genotype>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain: Option<RetrainSummary>,
}

impl RunSummary {
    pub fn new(seed: u64, solver: SolverKind) -> Self {
        RunSummary {
            seed,
            solver,
            status: RunStatus::Ok,
            error: None,
            lambda: None,
            beta: None,
            steps: None,
            stop_reason: None,
            divergence: None,
            point: None,
            residual: None,
            descent_violations: None,
            equilibrium: None,
            equilibrium_error: None,
            train_loss: None,
            val_loss: None,
            alpha_softmax: None,
            teacher: None,
            genotype: None,
            recovered: None,
            retrain: None,
        }
    }

    /// Every teacher edge was recovered.
    pub fn fully_recovered(&self) -> bool {
        self.recovered.as_ref().is_some_and(|r| r.iter().all(|&x| x))
    }
}

/// One seed of a primary-vs-baseline search comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub primary_val_mse: Option<f64>,
    pub baseline_val_mse: Option<f64>,
    pub primary_test_mse: Option<f64>,
    pub baseline_test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub primary: SolverKind,
    pub baseline: SolverKind,
    pub rows: Vec<ComparisonRow>,
    /// Means over seeds where both arms finished.
    pub mean_primary_val_mse: Option<f64>,
    pub mean_baseline_val_mse: Option<f64>,
    pub mean_primary_test_mse: Option<f64>,
    pub mean_baseline_test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baseline_runs: Vec<RunSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    pub wall_clock_seconds: Option<f64>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    /// Empty report echoing `config`. The output directory is left out so
    /// that the same experiment written to two places reads the same.
    pub fn new(config: &ExperimentConfig) -> Self {
        RunReport {
            kind: config.kind,
            config: ExperimentConfig {
                out_dir: None,
                ..config.clone()
            },
            runs: Vec::new(),
            baseline_runs: Vec::new(),
            comparison: None,
            wall_clock_seconds: None,
            manifest: Vec::new(),
        }
    }

    /// Process exit status: `3` if any run diverged, `1` if any other run
    /// failed, `0` otherwise.
    pub fn exit_code(&self) -> i32 {
        let all = self.runs.iter().chain(&self.baseline_runs);
        let statuses: Vec<RunStatus> = all.map(|r| r.status).collect();
        if statuses.contains(&RunStatus::Diverged) {
            3
        } else if statuses.contains(&RunStatus::Failed) {
            1
        } else {
            0
        }
    }
}

/// Output directory that remembers every file written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            manifest: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        fs::write(self.path(name), contents)?;
        self.record(name, contents.len() as u64);
        Ok(())
    }

    /// Registers a file that was written by other means.
    pub fn record(&mut self, name: &str, bytes: u64) {
        self.manifest.retain(|e| e.path != name);
        self.manifest.push(ManifestEntry {
            path: name.to_string(),
            bytes,
        });
    }

    /// Writes `report.json`, whose manifest includes the report itself.
    pub fn finish(mut self, mut report: RunReport) -> Result<RunReport> {
        let mut size = 0u64;
        let text = loop {
            self.record(REPORT_FILE, size);
            report.manifest = self.manifest.clone();
            let text = serde_json::to_string_pretty(&report)? + "\n";
            if text.len() as u64 == size {
                break text;
            }
            size = text.len() as u64;
        };
        fs::write(self.path(REPORT_FILE), &text)?;
        Ok(report)
    }
}
