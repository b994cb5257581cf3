use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::discrete::DiscreteConfig;
use crate::dynamics::{GammaSchedule, IntegratorConfig};
use crate::graph::{build_cluster_network, load_network, ClusterNetwork, ClusterSpec};
use crate::objective::{load_objective, ObjectiveGenerator, QuadraticObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkSource,
    pub objective: ObjectiveSource,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub continuous: Option<ContinuousConfig>,
    #[serde(default)]
    pub discrete: Option<DiscreteConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    /// Network file, relative to the config file.
    File(PathBuf),
    Generate(ClusterSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSource {
    File(PathBuf),
    Generate(ObjectiveGenerator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Continuous,
    Discrete,
    Both,
}

impl Mode {
    pub fn continuous(self) -> bool {
        matches!(self, Self::Continuous | Self::Both)
    }

    pub fn discrete(self) -> bool {
        matches!(self, Self::Discrete | Self::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Zero,
    /// Every node at `x*`.
    Optimum,
    /// `x* + scale·ξ_i` with i.i.d. standard normal `ξ_i`.
    PerturbedOptimum { scale: f64, seed: u64 },
    /// `scale·ξ_i`.
    Gaussian { scale: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    /// `2/(μt)` with `μ` from the objective.
    #[default]
    InverseTime,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousConfig {
    #[serde(default = "default_t0")]
    pub t0: f64,
    pub t_end: f64,
    /// Defaults to `1e-3 / max(1, ‖L‖)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub gamma: GammaChoice,
    /// Overrides the trajectory's largest `‖∇F‖` as `L`.
    #[serde(default)]
    pub grad_bound: Option<f64>,
}

fn default_t0() -> f64 {
    1.0
}

fn default_sample_every() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// The full condition with `L` and `μ`.
    #[default]
    Full,
    /// The simplified spectral comparison.
    Proxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTimeScaleConfig {
    #[serde(default = "default_tts_span")]
    pub duration: f64,
    #[serde(default = "default_tts_dt")]
    pub dt: f64,
    #[serde(default = "default_tts_stride")]
    pub sample_every: usize,
    #[serde(default = "default_tts_factor")]
    pub factor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_tts_span() -> f64 {
    20.0
}
fn default_tts_dt() -> f64 {
    1e-3
}
fn default_tts_stride() -> usize {
    5
}
fn default_tts_factor() -> f64 {
    3.0
}

impl Default for TwoTimeScaleConfig {
    fn default() -> Self {
        Self {
            duration: default_tts_span(),
            dt: default_tts_dt(),
            sample_every: default_tts_stride(),
            factor: default_tts_factor(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "yes")]
    pub identities: bool,
    #[serde(default = "yes")]
    pub assumption3: bool,
    #[serde(default)]
    pub assumption3_criterion: Criterion,
    /// Radius around `x*` for the a priori gradient bound; defaults to the
    /// largest distance of an initial node state from `x*` (or 1 if zero).
    #[serde(default)]
    pub region_radius: Option<f64>,
    #[serde(default = "yes")]
    pub lemmas: bool,
    #[serde(default = "yes")]
    pub theorem: bool,
    #[serde(default)]
    pub two_time_scale: Option<TwoTimeScaleConfig>,
    #[serde(default = "yes")]
    pub discrete_convergence: bool,
    #[serde(default = "default_slack")]
    pub slack_rel: f64,
    #[serde(default = "default_r2")]
    pub tail_r2_min: f64,
}

fn yes() -> bool {
    true
}
fn default_slack() -> f64 {
    1e-8
}
fn default_r2() -> f64 {
    0.9
}

impl Default for VerifyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// A config with its files loaded and its network, objective and start state built.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub net: ClusterNetwork,
    pub obj: QuadraticObjective,
    pub x0: DMatrix<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces every seed (network generation, objective, start state) with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        if let NetworkSource::Generate(spec) = &mut self.network {
            spec.seed = seed;
        }
        if let ObjectiveSource::Generate(g) = &mut self.objective {
            g.seed = seed;
        }
        match &mut self.initial {
            InitialState::PerturbedOptimum { seed: s, .. } | InitialState::Gaussian { seed: s, .. } => *s = seed,
            _ => {}
        }
        if let Some(t) = &mut self.verify.two_time_scale {
            t.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.mode.continuous() && self.continuous.is_none() {
            return Err(CliError::Config("mode needs a \"continuous\" section".into()));
        }
        if self.mode.discrete() && self.discrete.is_none() {
            return Err(CliError::Config("mode needs a \"discrete\" section".into()));
        }
        Ok(())
    }

    pub fn integrator(&self, net: &ClusterNetwork, obj: &QuadraticObjective) -> Option<IntegratorConfig> {
        self.continuous.map(|c| IntegratorConfig {
            t0: c.t0,
            t_end: c.t_end,
            dt: c.dt.unwrap_or_else(|| IntegratorConfig::default_dt(net)),
            sample_every: c.sample_every,
            gamma: match c.gamma {
                GammaChoice::InverseTime => GammaSchedule::InverseTime { mu: obj.mu() },
                GammaChoice::Zero => GammaSchedule::Zero,
            },
        })
    }
}

pub fn gaussian_state(rows: usize, cols: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        scale * v
    })
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig, base_dir: &Path) -> Result<Self, CliError> {
        config.validate()?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let net = match &config.network {
            NetworkSource::File(p) => load_network(resolve(p))?,
            NetworkSource::Generate(spec) => build_cluster_network(spec)?,
        };
        net.check_connectivity()?;
        let obj = match &config.objective {
            ObjectiveSource::File(p) => load_objective(resolve(p))?,
            ObjectiveSource::Generate(g) => g.generate(net.num_nodes())?,
        };
        if obj.num_nodes() != net.num_nodes() {
            return Err(CliError::Config(format!(
                "objective has {} nodes, network has {}",
                obj.num_nodes(),
                net.num_nodes()
            )));
        }
        let (n, d) = (net.num_nodes(), obj.dim());
        let at_optimum = || DMatrix::from_fn(n, d, |_, j| obj.x_star()[j]);
        let x0 = match config.initial {
            InitialState::Zero => DMatrix::zeros(n, d),
            InitialState::Optimum => at_optimum(),
            InitialState::PerturbedOptimum { scale, seed } => at_optimum() + gaussian_state(n, d, scale, seed),
            InitialState::Gaussian { scale, seed } => gaussian_state(n, d, scale, seed),
        };
        Ok(Self { config, base_dir: base_dir.to_path_buf(), net, obj, x0 })
    }

    /// Default region radius: largest `‖x_i(0) - x*‖`, or 1 when the start is at `x*`.
    pub fn region_radius(&self) -> f64 {
        self.config.verify.region_radius.unwrap_or_else(|| {
            let r = (0..self.x0.nrows())
                .map(|i| (self.x0.row(i).transpose() - self.obj.x_star()).norm())
                .fold(0.0, f64::max);
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
    }
}
