//! Discrete-time DCG: `X(k+1) = W X(k) - γ(k) ∇F(X(k))` with Metropolis weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::decompose;
use crate::graph::{metropolis_weights, ClusterNetwork, GraphError, MixingMatrix};
use crate::linalg::axpy;
use crate::objective::{ObjectiveError, QuadraticObjective};

#[derive(Debug, Error)]
pub enum DiscreteError {
    #[error("invalid discrete configuration: {0}")]
    Config(String),
    #[error("iterate became non-finite at k = {k}")]
    Diverged { k: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Step sizes `γ(k)`, `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `1/k`.
    #[default]
    Harmonic,
    /// `scale / k^power`.
    Power { scale: f64, power: f64 },
    Constant(f64),
    Zero,
}

impl StepSchedule {
    pub fn at(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            Self::Harmonic => 1.0 / k,
            Self::Power { scale, power } => scale / k.powf(power),
            Self::Constant(c) => c,
            Self::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConfig {
    pub iterations: usize,
    #[serde(default)]
    pub gamma: StepSchedule,
    /// Use `1/(1 + max(d_i, d_j))` instead of `1/max(d_i, d_j)`.
    #[serde(default)]
    pub metropolis_plus_one: bool,
    /// Nodes whose optimality gap is recorded individually.
    #[serde(default)]
    pub track: Vec<usize>,
    /// Record every this many iterations (the last one is always recorded).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl DiscreteConfig {
    pub fn new(iterations: usize) -> Self {
        Self { iterations, gamma: StepSchedule::Harmonic, metropolis_plus_one: false, track: vec![0], record_every: 1 }
    }

    fn validate(&self, n: usize) -> Result<(), DiscreteError> {
        if self.iterations == 0 {
            return Err(DiscreteError::Config("iterations must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(DiscreteError::Config("record_every must be at least 1".into()));
        }
        if let Some(&p) = self.track.iter().find(|&&p| p >= n) {
            return Err(DiscreteError::Config(format!("tracked node {p} out of range for {n} nodes")));
        }
        Ok(())
    }
}

/// `W X - γ(k) ∇F(X)`.
pub fn discrete_step(
    w: &MixingMatrix,
    obj: &QuadraticObjective,
    x: &DMatrix<f64>,
    k: usize,
    gamma: &StepSchedule,
) -> Result<DMatrix<f64>, DiscreteError> {
    if k == 0 {
        return Err(DiscreteError::Config("iterations are numbered from k = 1".into()));
    }
    if w.dim() != x.nrows() {
        return Err(DiscreteError::Config(format!("{}-node weights for a {}-row state", w.dim(), x.nrows())));
    }
    let grad = obj.gradient_stack(x)?;
    let mut out = w.apply(x);
    axpy(&mut out, -gamma.at(k), &grad);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteRecord {
    pub k: usize,
    pub gamma: f64,
    /// `‖z_p(k) - x*‖` for each tracked node.
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub v_ex: f64,
    pub v_ey: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteRun {
    pub records: Vec<DiscreteRecord>,
    pub tracked: Vec<usize>,
    /// `‖z_p(K) - x*‖` for every node.
    pub final_gaps: Vec<f64>,
    pub final_state: DMatrix<f64>,
    /// First `k` with `V(eˣ) < V(eʸ)`: the end of the local synchronisation phase.
    pub local_sync_k: Option<usize>,
    /// Largest deviation of the column means from `x̄ - (γ/N)1ᵀ∇F` over all steps.
    pub mean_drift_residual: f64,
}

impl DiscreteRun {
    /// The record at iteration `k`, if it was kept.
    pub fn record_at(&self, k: usize) -> Option<&DiscreteRecord> {
        self.records.binary_search_by_key(&k, |r| r.k).ok().map(|i| &self.records[i])
    }

    pub fn final_mean_gap(&self) -> f64 {
        self.final_gaps.iter().sum::<f64>() / self.final_gaps.len() as f64
    }
}

/// Runs `K` iterations from `X(1) = x0`. The running average is the plain mean
/// `z_p(k) = (1/k) Σ_{j ≤ k} x_p(j)`.
pub fn run_discrete(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    x0: &DMatrix<f64>,
    cfg: &DiscreteConfig,
) -> Result<DiscreteRun, DiscreteError> {
    let n = net.num_nodes();
    cfg.validate(n)?;
    obj.check_state(x0)?;
    if obj.num_nodes() != n {
        return Err(DiscreteError::Config(format!("{n} network nodes, {} objective nodes", obj.num_nodes())));
    }
    let w = metropolis_weights(net, cfg.metropolis_plus_one)?;
    let x_star = obj.x_star();
    let big_k = cfg.iterations;

    let mut x = x0.clone();
    let mut next = DMatrix::zeros(n, x0.ncols());
    let mut grad = DMatrix::zeros(n, x0.ncols());
    let mut sum = DMatrix::zeros(n, x0.ncols());
    let mut records = Vec::with_capacity(big_k / cfg.record_every + 1);
    let mut local_sync_k = None;
    let mut mean_drift_residual: f64 = 0.0;
    let node_gap = |sum: &DMatrix<f64>, p: usize, k: usize| (sum.row(p).transpose() / k as f64 - x_star).norm();

    for k in 1..=big_k {
        sum += &x;
        let dec = decompose(net, &x).expect("row count checked");
        let (v_ex, v_ey) = (dec.e_x.norm(), dec.e_y.norm());
        if local_sync_k.is_none() && v_ey > 0.0 && v_ex < v_ey {
            local_sync_k = Some(k);
        }
        let gamma = cfg.gamma.at(k);
        if k % cfg.record_every == 0 || k == big_k || k == 1 {
            let all: Vec<f64> = (0..n).map(|p| node_gap(&sum, p, k)).collect();
            records.push(DiscreteRecord {
                k,
                gamma,
                gaps: cfg.track.iter().map(|&p| all[p]).collect(),
                mean_gap: all.iter().sum::<f64>() / n as f64,
                max_gap: all.iter().copied().fold(0.0, f64::max),
                v_ex,
                v_ey,
            });
        }
        if k == big_k {
            break;
        }

        obj.gradient_stack_into(&x, &mut grad);
        w.0.apply_into(&x, &mut next);
        axpy(&mut next, -gamma, &grad);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(DiscreteError::Diverged { k: k + 1 });
        }
        let expected: DVector<f64> = (x.row_mean() - grad.row_mean() * gamma).transpose();
        let drift = (next.row_mean().transpose() - expected).amax();
        mean_drift_residual = mean_drift_residual.max(drift / (1.0 + x.amax()));
        std::mem::swap(&mut x, &mut next);
    }

    let final_gaps = (0..n).map(|p| node_gap(&sum, p, big_k)).collect();
    Ok(DiscreteRun {
        records,
        tracked: cfg.track.clone(),
        final_gaps,
        final_state: x,
        local_sync_k,
        mean_drift_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::make_random_objective;

    fn pair() -> (ClusterNetwork, QuadraticObjective) {
        let net = ClusterNetwork::from_edges(&[2], &[(0, 1)]).unwrap();
        let obj = QuadraticObjective::new(vec![
            (DMatrix::identity(1, 1), DVector::from_element(1, 1.0)),
            (DMatrix::identity(1, 1), DVector::from_element(1, -1.0)),
        ])
        .unwrap();
        (net, obj)
    }

    #[test]
    fn hand_evaluated_step() {
        let (net, obj) = pair();
        let w = metropolis_weights(&net, false).unwrap();
        let x = discrete_step(&w, &obj, &DMatrix::zeros(2, 1), 1, &StepSchedule::Harmonic).unwrap();
        assert_eq!(x.as_slice(), &[2.0, -2.0]);
        assert!(discrete_step(&w, &obj, &x, 0, &StepSchedule::Harmonic).is_err());
    }

    #[test]
    fn zero_step_preserves_column_means() {
        let net = ClusterNetwork::from_edges(&[3, 2], &[(0, 1), (1, 2), (3, 4), (2, 3)]).unwrap();
        let obj = make_random_objective(5, 2, 3, 1, 1.0).unwrap();
        let w = metropolis_weights(&net, false).unwrap();
        let x = DMatrix::from_fn(5, 2, |i, j| (i as f64 - 2.0) * (j as f64 + 1.0));
        let next = discrete_step(&w, &obj, &x, 3, &StepSchedule::Zero).unwrap();
        assert!((next.row_mean() - x.row_mean()).amax() < 1e-15);
    }

    #[test]
    fn consensus_at_optimum_keeps_average() {
        let net = ClusterNetwork::from_edges(&[2, 2], &[(0, 1), (2, 3), (1, 2)]).unwrap();
        let obj = make_random_objective(4, 2, 3, 2, 1.0).unwrap();
        let w = metropolis_weights(&net, false).unwrap();
        let x = DMatrix::from_fn(4, 2, |_, j| obj.x_star()[j]);
        let next = discrete_step(&w, &obj, &x, 5, &StepSchedule::Harmonic).unwrap();
        assert!((next.row_mean() - x.row_mean()).amax() < 1e-12);
    }

    #[test]
    fn single_node_gap_eventually_monotone() {
        let net = ClusterNetwork::from_edges(&[1], &[]).unwrap();
        let a = DMatrix::from_element(1, 1, 0.6);
        let obj = QuadraticObjective::new(vec![(a, DVector::from_element(1, 1.2))]).unwrap();
        let cfg = DiscreteConfig { iterations: 500, ..DiscreteConfig::new(500) };
        let run = run_discrete(&net, &obj, &DMatrix::zeros(1, 1), &cfg).unwrap();
        let gaps: Vec<f64> = run.records.iter().map(|r| r.gaps[0]).collect();
        assert!(gaps[5..].windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(run.final_gaps[0] < gaps[9]);
    }

    #[test]
    fn runs_are_reproducible_and_track_means() {
        let net = ClusterNetwork::from_edges(&[3, 3], &[(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)]).unwrap();
        let obj = make_random_objective(6, 2, 4, 8, 0.3).unwrap();
        let cfg = DiscreteConfig { track: vec![0, 5], record_every: 10, ..DiscreteConfig::new(200) };
        let a = run_discrete(&net, &obj, &DMatrix::zeros(6, 2), &cfg).unwrap();
        let b = run_discrete(&net, &obj, &DMatrix::zeros(6, 2), &cfg).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert!(a.mean_drift_residual <= 1e-12);
        assert_eq!(a.records.first().unwrap().k, 1);
        assert_eq!(a.records.last().unwrap().k, 200);
        assert_eq!(a.record_at(50).unwrap().gaps.len(), 2);
        assert!(a.local_sync_k.is_some());
    }

    #[test]
    fn fast_variable_contracts_without_external_edges() {
        let net = ClusterNetwork::from_edges(&[3, 4], &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (5, 6)]).unwrap();
        let obj = make_random_objective(7, 1, 2, 0, 1.0).unwrap();
        let x0 = DMatrix::from_fn(7, 1, |i, _| (i as f64).cos() * 3.0);
        let cfg = DiscreteConfig { gamma: StepSchedule::Zero, ..DiscreteConfig::new(100) };
        let run = run_discrete(&net, &obj, &x0, &cfg).unwrap();
        assert!(run.records.windows(2).all(|w| w[1].v_ex <= w[0].v_ex + 1e-14));
    }

    #[test]
    fn rejects_bad_config() {
        let (net, obj) = pair();
        let x = DMatrix::zeros(2, 1);
        assert!(run_discrete(&net, &obj, &x, &DiscreteConfig::new(0)).is_err());
        let cfg = DiscreteConfig { track: vec![2], ..DiscreteConfig::new(5) };
        assert!(run_discrete(&net, &obj, &x, &cfg).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::Harmonic.at(4), 0.25);
        assert_eq!(StepSchedule::Power { scale: 2.0, power: 0.5 }.at(4), 1.0);
        let cfg: DiscreteConfig = serde_json::from_str(r#"{"iterations": 10}"#).unwrap();
        assert_eq!((cfg.gamma, cfg.record_every, cfg.metropolis_plus_one), (StepSchedule::Harmonic, 1, false));
    }
}
