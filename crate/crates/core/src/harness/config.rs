use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frozenlake::{build_mdp, load_map, SlipModel};
use crate::learners::{default_m_values, Algorithm, ScheduleParams, StepSize};
use crate::lqr::{build_mass_damper, Hyper, LinearSystem, LqrRunSettings, StepRule, Variant};
use crate::mdp::FiniteMdp;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tabular,
    Lqr,
    Bound,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Tabular => "tabular",
            Task::Lqr => "lqr",
            Task::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoName {
    Vanilla,
    Speedy,
    Aql,
}

/// Experiment definition as read from JSON. Absent fields take task defaults
/// in [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    /// Explicit seed list; otherwise `base_seed, base_seed + 1, …` of length `num_seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_samples: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularSection {
    /// `frozenlake4x4`, `frozenlake8x8` or a map file path.
    pub map: String,
    pub slip: SlipModel,
    pub algorithms: Vec<AlgoName>,
    /// AQL cells, one per value; defaults to `{⌈1/γ⌉, ⌈2/γ⌉, ⌈4/γ⌉}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<f64>>,
    pub vanilla_step: StepSize,
    pub qstar_tol: f64,
}

impl Default for TabularSection {
    fn default() -> Self {
        Self {
            map: "frozenlake4x4".into(),
            slip: SlipModel::default(),
            algorithms: vec![AlgoName::Speedy, AlgoName::Aql],
            m_values: None,
            vanilla_step: StepSize::Harmonic,
            qstar_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    MassDamper {
        n_masses: usize,
        n_actuators: usize,
        eta: f64,
        dt: f64,
    },
    /// JSON file in the [`crate::lqr::SystemJson`] layout.
    File(PathBuf),
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::MassDamper {
            n_masses: 2,
            n_actuators: 1,
            eta: 0.1,
            dt: 0.01,
        }
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearSystem> {
        match self {
            SystemSpec::MassDamper {
                n_masses,
                n_actuators,
                eta,
                dt,
            } => build_mass_damper(*n_masses, *n_actuators, *eta, *dt),
            SystemSpec::File(path) => {
                let text = read_file(path)?;
                LinearSystem::from_json(&text).map_err(|e| e.context(format!("system file {}", path.display())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrSection {
    pub system: SystemSpec,
    pub variants: Vec<Variant>,
    pub hyper: Hyper,
    pub noise_std: f64,
    pub noise_decay: f64,
    pub batch: usize,
    pub capacity: usize,
    pub horizon: usize,
    pub init_scale: f64,
    pub blowup_factor: f64,
    pub prioritized: bool,
    pub step_rule: StepRule,
    pub dare_tol: f64,
    pub dare_max_iter: usize,
}

impl Default for LqrSection {
    fn default() -> Self {
        let s = LqrRunSettings::default();
        Self {
            system: SystemSpec::default(),
            variants: Variant::ALL.to_vec(),
            hyper: s.hyper,
            noise_std: s.noise_std,
            noise_decay: s.noise_decay,
            batch: s.batch,
            capacity: s.capacity,
            horizon: s.horizon,
            init_scale: s.init_scale,
            blowup_factor: s.blowup_factor,
            prioritized: s.prioritized,
            step_rule: s.step_rule,
            dare_tol: 1e-12,
            dare_max_iter: 1_000_000,
        }
    }
}

impl LqrSection {
    pub fn settings(&self, gamma: f64, steps: usize) -> LqrRunSettings {
        LqrRunSettings {
            hyper: self.hyper,
            gamma,
            steps,
            noise_std: self.noise_std,
            noise_decay: self.noise_decay,
            batch: self.batch,
            capacity: self.capacity,
            horizon: self.horizon,
            init_scale: self.init_scale,
            blowup_factor: self.blowup_factor,
            prioritized: self.prioritized,
            step_rule: self.step_rule,
        }
    }
}

/// Inputs of the finite-time bound; `T` comes from `iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    /// Defaults to `⌈1/γ⌉`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub n: usize,
    pub delta: f64,
    pub r_max: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        Self {
            m: None,
            n: 64,
            delta: 0.1,
            r_max: 1.0,
        }
    }
}

/// Fully defaulted, validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    pub gamma: f64,
    pub shared_samples: bool,
    pub thresholds: Vec<f64>,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSection>,
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ExperimentConfig {
    /// A config with only the task set; everything else takes defaults.
    pub fn for_task(task: Task) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            seeds: None,
            num_seeds: None,
            base_seed: None,
            iterations: None,
            gamma: None,
            shared_samples: None,
            jobs: None,
            thresholds: None,
            out: None,
            tabular: None,
            lqr: None,
            bound: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies task defaults and checks every invariant, including that the
    /// referenced map or system can be loaded.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        let (default_gamma, default_iters, default_seeds, default_thresholds) = match self.task {
            Task::Tabular => (0.95, 10_000, 20, vec![]),
            Task::Lqr => (1.0, 3000, 5, vec![0.1]),
            Task::Bound => (0.5, 1000, 1, vec![]),
        };
        let sections = [
            (Task::Tabular, self.tabular.is_some()),
            (Task::Lqr, self.lqr.is_some()),
            (Task::Bound, self.bound.is_some()),
        ];
        for (task, present) in sections {
            if present && task != self.task {
                return bad(format!(
                    "section '{}' given for task '{}'",
                    task.name(),
                    self.task.name()
                ));
            }
        }
        let seeds = match (&self.seeds, self.num_seeds) {
            (Some(_), Some(_)) => return bad("give either seeds or num_seeds, not both".into()),
            (Some(list), None) => list.clone(),
            (None, n) => {
                let base = self.base_seed.unwrap_or(0);
                let n = n.unwrap_or(default_seeds) as u64;
                (0..n).map(|i| base.wrapping_add(i)).collect()
            }
        };
        if seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let iterations = self.iterations.unwrap_or(default_iters);
        if iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        let gamma = self.gamma.unwrap_or(default_gamma);
        let gamma_ok = match self.task {
            Task::Lqr => gamma > 0.0 && gamma <= 1.0,
            _ => gamma > 0.0 && gamma < 1.0,
        };
        if !gamma_ok {
            return bad(format!("gamma {gamma} out of range for task '{}'", self.task.name()));
        }
        let thresholds = self.thresholds.clone().unwrap_or(default_thresholds);
        if thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad(format!("thresholds must be positive: {thresholds:?}"));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }

        let mut resolved = ResolvedConfig {
            task: self.task,
            seeds,
            iterations,
            gamma,
            shared_samples: self.shared_samples.unwrap_or(true),
            thresholds,
            jobs: self.jobs,
            out: self.out.clone(),
            tabular: None,
            lqr: None,
            bound: None,
        };
        match self.task {
            Task::Tabular => {
                let mut t = self.tabular.clone().unwrap_or_default();
                if t.algorithms.is_empty() {
                    return bad("tabular.algorithms is empty".into());
                }
                let m_values = t.m_values.clone().unwrap_or_else(|| default_m_values(gamma).to_vec());
                if t.algorithms.contains(&AlgoName::Aql) && m_values.is_empty() {
                    return bad("tabular.m_values is empty".into());
                }
                for &m in &m_values {
                    ScheduleParams::new(m, gamma).map_err(|e| Error::Config(e.to_string()))?;
                }
                t.m_values = Some(m_values);
                if !(t.qstar_tol > 0.0) {
                    return bad("tabular.qstar_tol must be positive".into());
                }
                t.slip.validate().map_err(|e| Error::Config(e.to_string()))?;
                load_map(&t.map).map_err(|e| e.context("tabular.map"))?;
                resolved.tabular = Some(t);
            }
            Task::Lqr => {
                let l = self.lqr.clone().unwrap_or_default();
                if l.variants.is_empty() {
                    return bad("lqr.variants is empty".into());
                }
                l.settings(gamma, iterations)
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                if !(l.dare_tol > 0.0) || l.dare_max_iter == 0 {
                    return bad("lqr.dare_tol and lqr.dare_max_iter must be positive".into());
                }
                l.system.build().map_err(|e| e.context("lqr.system"))?;
                resolved.lqr = Some(l);
            }
            Task::Bound => {
                let mut b = self.bound.clone().unwrap_or_default();
                let m = b.m.unwrap_or((1.0 / gamma).ceil());
                b.m = Some(m);
                crate::bounds::BoundParams::new(gamma, m, iterations, b.n, b.delta, b.r_max)
                    .map_err(|e| Error::Config(e.to_string()))?;
                resolved.bound = Some(b);
            }
        }
        Ok(resolved)
    }
}

impl ResolvedConfig {
    /// Hex SHA-256 of the canonical JSON of every field except `out` and `jobs`.
    pub fn config_hash(&self) -> String {
        // serde_json objects are key-sorted, which makes the encoding canonical.
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_tabular_mdp(&self) -> Result<FiniteMdp> {
        let t = self
            .tabular
            .as_ref()
            .ok_or_else(|| Error::Config("not a tabular config".into()))?;
        build_mdp(&load_map(&t.map)?, t.slip, self.gamma)
    }

    /// Learners in canonical cell order: the listed algorithms, AQL expanded per `m`.
    pub fn tabular_algorithms(&self) -> Result<Vec<Algorithm>> {
        let t = self
            .tabular
            .as_ref()
            .ok_or_else(|| Error::Config("not a tabular config".into()))?;
        let mut out = Vec::new();
        for name in &t.algorithms {
            match name {
                AlgoName::Vanilla => out.push(Algorithm::Vanilla(t.vanilla_step)),
                AlgoName::Speedy => out.push(Algorithm::Speedy),
                AlgoName::Aql => {
                    for &m in t.m_values.as_deref().unwrap_or_default() {
                        out.push(Algorithm::Aql(ScheduleParams::new(m, self.gamma)?));
                    }
                }
            }
        }
        Ok(out)
    }
}
