//! Continuous-time DCG flow `Ẋ = -(Lᴵ + Lᴱ)X - γ(t)∇F(X)`, its integrator,
//! the fast/slow/inter-cluster right-hand sides, Lyapunov monitors and the
//! convergence-rate certificate.

mod certificate;
mod fit;
mod integrator;
mod monitors;
mod projections;

pub use certificate::{rate_certificate, theorem_check, RateCertificate, TheoremReport, TheoremRow};
pub use fit::{fit_decay_rate, fit_linear, two_time_scale, DecayFit, LinearFit, TwoTimeScaleReport};
pub use integrator::{integrate, running_average, Trajectory, TrajectorySample};
pub use monitors::{lemma_monitors, LemmaCheck, LemmaReport, LemmaRow};
pub use projections::{fast_rhs, inter_rhs, projection_residuals, slow_rhs, ProjectionResiduals};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClusterNetwork, GraphError};
use crate::linalg::SparseSym;
use crate::objective::{ObjectiveError, QuadraticObjective};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("state became non-finite at t = {t}")]
    Diverged { t: f64 },
    #[error("time {t} outside the trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("network and objective disagree: {0}")]
    Mismatch(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Step-size schedule `γ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSchedule {
    /// Pure consensus.
    Zero,
    /// `γ(t) = 2/(μt)`.
    InverseTime { mu: f64 },
    Constant(f64),
}

impl GammaSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::InverseTime { mu } => 2.0 / (mu * t),
            Self::Constant(c) => c,
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        match *self {
            Self::InverseTime { mu } if !(mu > 0.0 && mu.is_finite()) => {
                Err(DynamicsError::Config(format!("γ(t) = 2/(μt) needs μ > 0, got {mu}")))
            }
            Self::Constant(c) if !c.is_finite() => Err(DynamicsError::Config(format!("constant γ = {c}"))),
            _ => Ok(()),
        }
    }
}

/// Fixed-step RK4 settings. The step is shrunk slightly, if needed, so that an
/// integer number of steps ends exactly at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Record a sample every this many steps (the final step is always recorded).
    pub sample_every: usize,
    pub gamma: GammaSchedule,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.t0 > 0.0 && self.t0 < self.t_end && self.t_end.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "need 0 < t0 < T, got t0 = {}, T = {}",
                self.t0, self.t_end
            )));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_end - self.t0) {
            return Err(DynamicsError::Config(format!("dt = {} must lie in (0, T - t0]", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(DynamicsError::Config("sample_every must be at least 1".into()));
        }
        self.gamma.validate()
    }

    /// Number of steps and the step actually used.
    pub fn steps(&self) -> (usize, f64) {
        let span = self.t_end - self.t0;
        let n = ((span / self.dt).round() as usize).max(1);
        (n, span / n as f64)
    }

    /// Default step `1e-3 / max(1, ‖L‖)`.
    pub fn default_dt(net: &ClusterNetwork) -> f64 {
        1e-3 / crate::linalg::sym_norm2(net.laplacian()).max(1.0)
    }
}

pub(crate) fn check_compatible(net: &ClusterNetwork, obj: &QuadraticObjective) -> Result<(), DynamicsError> {
    if net.num_nodes() != obj.num_nodes() {
        return Err(DynamicsError::Mismatch(format!(
            "{} network nodes, {} objective nodes",
            net.num_nodes(),
            obj.num_nodes()
        )));
    }
    Ok(())
}

/// `-(Lᴵ + Lᴱ)X - γ(t)∇F(X)`.
pub fn dcg_rhs(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    x: &DMatrix<f64>,
    t: f64,
    gamma: &GammaSchedule,
) -> Result<DMatrix<f64>, DynamicsError> {
    check_compatible(net, obj)?;
    obj.check_state(x)?;
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
    rhs_into(net.sparse_laplacian(), obj, x, gamma.at(t), &mut out, &mut grad);
    Ok(out)
}

pub(crate) fn rhs_into(
    lap: &SparseSym,
    obj: &QuadraticObjective,
    x: &DMatrix<f64>,
    gamma: f64,
    out: &mut DMatrix<f64>,
    grad: &mut DMatrix<f64>,
) {
    lap.apply_into(x, out);
    if gamma != 0.0 {
        obj.gradient_stack_into(x, grad);
        *out += gamma * &*grad;
    }
    out.neg_mut();
}
