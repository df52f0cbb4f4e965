use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::HyperParams;
use crate::solvers::{SolverKind, StopRule};
use crate::supernet::{CellSpec, Genotype, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Quadratic,
    Search,
    Retrain,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::Search => "search",
            ExperimentKind::Retrain => "retrain",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

/// Initial point of a quadratic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticInit {
    pub alpha0: f64,
    pub w0: f64,
    pub y0: f64,
    /// Each seed shifts the three coordinates by `U(-jitter, jitter)`.
    #[serde(default)]
    pub jitter: f64,
    /// Emit an SVG phase plot next to each trajectory.
    #[serde(default = "yes")]
    pub plot: bool,
}

fn yes() -> bool {
    true
}

impl Default for QuadraticInit {
    fn default() -> Self {
        QuadraticInit {
            alpha0: 2.0,
            w0: -2.0,
            y0: 0.0,
            jitter: 0.0,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            n_train: 256,
            n_val: 256,
            n_test: 256,
            noise_std: 0.0,
        }
    }
}

fn default_init_gain() -> f64 {
    0.3
}

/// Supernet, data and search settings shared by `search` and `retrain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub cell: CellSpec,
    #[serde(default)]
    pub task: TaskSpec,
    /// Student weights start at `N(0, (init_gain / sqrt(d))²)`.
    #[serde(default = "default_init_gain")]
    pub init_gain: f64,
    /// Let the zero op win discretization.
    #[serde(default)]
    pub include_zero: bool,
    /// Second solver run on the same tasks for a paired comparison.
    #[serde(default)]
    pub baseline: Option<SolverKind>,
    /// Reserved for an additive latency penalty; must stay unset.
    #[serde(default)]
    pub latency_penalty: Option<f64>,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            cell: CellSpec {
                edges: 2,
                feature_dim: 8,
                ops: vec![OpKind::Zero, OpKind::Identity, OpKind::LinearTanh, OpKind::LinearRelu],
            },
            task: TaskSpec::default(),
            init_gain: default_init_gain(),
            include_zero: false,
            baseline: None,
            latency_penalty: None,
        }
    }
}

fn default_epochs() -> usize {
    20_000
}

fn default_retrain_lr() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainSpec {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_retrain_lr")]
    pub lr: f64,
    /// Cell to retrain for `kind = retrain`, inline ...
    #[serde(default)]
    pub genotype: Option<Genotype>,
    /// ... or as a genotype JSON file, relative to the config file.
    #[serde(default)]
    pub genotype_path: Option<PathBuf>,
}

impl Default for RetrainSpec {
    fn default() -> Self {
        RetrainSpec {
            epochs: default_epochs(),
            lr: default_retrain_lr(),
            genotype: None,
            genotype_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            lambdas: vec![0.5, 1.0, 10.0],
            betas: vec![1.0, 10.0],
        }
    }
}

fn default_solver() -> SolverKind {
    SolverKind::Rarts
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_log_every() -> u64 {
    1
}

/// One experiment, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    pub hyper: HyperParams,
    pub stop: StopRule,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub quadratic: QuadraticInit,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub retrain: RetrainSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Put the run's duration into the report. Off by default so that
    /// reports of repeated runs are byte-identical.
    #[serde(default)]
    pub record_wall_clock: bool,
}

/// Command-line replacements for config values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub log_every: Option<u64>,
    pub solver: Option<SolverKind>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub lr_w: Option<f64>,
    pub lr_y: Option<f64>,
    pub lr_alpha: Option<f64>,
    pub xi: Option<f64>,
    pub steps: Option<u64>,
}

impl ExperimentConfig {
    /// Built-in configuration used when no config file is given.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            solver: SolverKind::Rarts,
            hyper: HyperParams::new(10.0, 10.0, 0.01),
            stop: StopRule::steps(10_000),
            seeds: default_seeds(),
            log_every: 10,
            quadratic: QuadraticInit::default(),
            search: SearchSpec::default(),
            retrain: RetrainSpec::default(),
            sweep: SweepSpec::default(),
            out_dir: None,
            record_wall_clock: false,
        };
        match kind {
            ExperimentKind::Quadratic | ExperimentKind::Sweep => base,
            ExperimentKind::Search | ExperimentKind::Retrain => ExperimentConfig {
                hyper: HyperParams::new(1.0, 1.0, 0.1),
                stop: StopRule::steps(2_000),
                seeds: (0..5).collect(),
                log_every: 100,
                ..base
            },
        }
    }

    /// Strict parse without touching the file system.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses `path` and resolves file references against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.retrain.genotype_path {
            let resolved = if p.is_absolute() { p.clone() } else { base.join(p) };
            if !resolved.is_file() {
                return Err(Error::Config(format!(
                    "genotype file {} does not exist",
                    resolved.display()
                )));
            }
            cfg.retrain.genotype_path = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out_dir {
            self.out_dir = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.seeds = vec![v];
        }
        if let Some(v) = o.log_every {
            self.log_every = v;
        }
        if let Some(v) = o.solver {
            self.solver = v;
        }
        let h = &mut self.hyper;
        for (slot, v) in [
            (&mut h.lambda, o.lambda),
            (&mut h.beta, o.beta),
            (&mut h.eta_w, o.lr_w),
            (&mut h.eta_y, o.lr_y),
            (&mut h.eta_alpha, o.lr_alpha),
            (&mut h.xi, o.xi),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(v) = o.steps {
            self.stop.max_steps = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.stop.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        if self.log_every < 1 {
            return Err(Error::config("log_every must be at least 1"));
        }
        if self.solver == SolverKind::Darts2 && !(self.hyper.xi > 0.0) {
            return Err(Error::config("darts2 requires xi > 0"));
        }
        match self.kind {
            ExperimentKind::Quadratic => self.validate_quadratic(),
            ExperimentKind::Sweep => {
                self.validate_quadratic()?;
                if self.sweep.lambdas.is_empty() || self.sweep.betas.is_empty() {
                    return Err(Error::config("sweep grids must be non-empty"));
                }
                for &l in &self.sweep.lambdas {
                    if !(l > 0.0 && l.is_finite()) {
                        return Err(Error::config(format!("sweep lambda must be positive, got {l}")));
                    }
                }
                for &b in &self.sweep.betas {
                    if !(b >= 0.0 && b.is_finite()) {
                        return Err(Error::config(format!("sweep beta must be non-negative, got {b}")));
                    }
                }
                Ok(())
            }
            ExperimentKind::Search => {
                self.validate_search()?;
                if self.search.baseline == Some(SolverKind::Darts2) && !(self.hyper.xi > 0.0) {
                    return Err(Error::config("darts2 baseline requires xi > 0"));
                }
                self.validate_retrain()
            }
            ExperimentKind::Retrain => {
                self.validate_search()?;
                self.validate_retrain()?;
                match (&self.retrain.genotype, &self.retrain.genotype_path) {
                    (Some(_), Some(_)) => Err(Error::config(
                        "give either retrain.genotype or retrain.genotype_path, not both",
                    )),
                    (None, None) => Err(Error::config("retrain needs retrain.genotype or retrain.genotype_path")),
                    (Some(g), None) => self.check_genotype(g),
                    (None, Some(_)) => Ok(()),
                }
            }
        }
    }

    fn validate_quadratic(&self) -> Result<()> {
        let q = &self.quadratic;
        if ![q.alpha0, q.w0, q.y0].iter().all(|v| v.is_finite()) {
            return Err(Error::config("quadratic initial point must be finite"));
        }
        if !(q.jitter >= 0.0 && q.jitter.is_finite()) {
            return Err(Error::config("quadratic jitter must be non-negative"));
        }
        Ok(())
    }

    fn validate_search(&self) -> Result<()> {
        let s = &self.search;
        s.cell.validate()?;
        if s.task.n_train == 0 || s.task.n_val == 0 || s.task.n_test == 0 {
            return Err(Error::config("every split needs at least one sample"));
        }
        if !(s.task.noise_std >= 0.0 && s.task.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be non-negative"));
        }
        if !(s.init_gain > 0.0 && s.init_gain.is_finite()) {
            return Err(Error::config("init_gain must be positive"));
        }
        if s.latency_penalty.is_some() {
            return Err(Error::config("latency_penalty is reserved and not supported yet"));
        }
        Ok(())
    }

    fn validate_retrain(&self) -> Result<()> {
        if self.retrain.epochs == 0 {
            return Err(Error::config("retrain needs at least one epoch"));
        }
        if !(self.retrain.lr > 0.0 && self.retrain.lr.is_finite()) {
            return Err(Error::config("retrain lr must be positive"));
        }
        Ok(())
    }

    /// Genotype to retrain, read from disk if configured as a path.
    pub fn genotype(&self) -> Result<Genotype> {
        let g = match (&self.retrain.genotype, &self.retrain.genotype_path) {
            (Some(g), _) => g.clone(),
            (None, Some(p)) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read genotype {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad genotype {}: {e}", p.display())))?
            }
            (None, None) => return Err(Error::config("no genotype configured")),
        };
        self.check_genotype(&g)?;
        Ok(g)
    }

    fn check_genotype(&self, g: &Genotype) -> Result<()> {
        if g.edges.len() != self.search.cell.edges {
            return Err(Error::Config(format!(
                "genotype has {} edges, cell has {}",
                g.edges.len(),
                self.search.cell.edges
            )));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::config("no output directory: pass --out or set out_dir"))
    }
}
