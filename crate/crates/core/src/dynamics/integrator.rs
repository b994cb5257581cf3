use nalgebra::{DMatrix, DVector};

use super::{check_compatible, rhs_into, DynamicsError, GammaSchedule, IntegratorConfig};
use crate::decomposition::{decompose, lyapunov, Decomposition, LyapunovSample};
use crate::graph::ClusterNetwork;
use crate::linalg::axpy;
use crate::objective::QuadraticObjective;

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: DMatrix<f64>,
    pub decomposition: Decomposition,
    pub lyapunov: LyapunovSample,
    /// `∫_{t0}^{t} X dt`, N×d.
    pub z_integral: DMatrix<f64>,
}

/// Sampled solution of the DCG flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    gamma: GammaSchedule,
    grad_norm_max: f64,
    step: f64,
}

impl Trajectory {
    /// Builds a trajectory from externally supplied states; the running
    /// integral uses the trapezoid rule between consecutive states.
    pub fn from_states(
        net: &ClusterNetwork,
        obj: &QuadraticObjective,
        times: &[f64],
        states: Vec<DMatrix<f64>>,
        gamma: GammaSchedule,
    ) -> Result<Self, DynamicsError> {
        check_compatible(net, obj)?;
        if times.is_empty() || times.len() != states.len() {
            return Err(DynamicsError::EmptyTrajectory);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DynamicsError::Config("sample times must be strictly increasing".into()));
        }
        let mut samples: Vec<TrajectorySample> = Vec::with_capacity(states.len());
        let mut grad_norm_max: f64 = 0.0;
        for (&t, state) in times.iter().zip(states) {
            grad_norm_max = grad_norm_max.max(obj.gradient_stack(&state)?.norm());
            let z_integral = match samples.last() {
                None => DMatrix::zeros(state.nrows(), state.ncols()),
                Some(prev) => &prev.z_integral + (&prev.state + &state) * (0.5 * (t - prev.t)),
            };
            samples.push(make_sample(net, obj, t, state, z_integral)?);
        }
        let step = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { samples, gamma, grad_norm_max, step })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().unwrap()
    }

    pub fn t0(&self) -> f64 {
        self.first().t
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    pub fn gamma(&self) -> &GammaSchedule {
        &self.gamma
    }

    /// Largest `‖∇F(X)‖` seen at any integration step.
    pub fn grad_norm_max(&self) -> f64 {
        self.grad_norm_max
    }

    /// Integration step (largest sample spacing for [`Trajectory::from_states`]).
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn num_nodes(&self) -> usize {
        self.first().state.nrows()
    }
}

fn make_sample(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    t: f64,
    state: DMatrix<f64>,
    z_integral: DMatrix<f64>,
) -> Result<TrajectorySample, DynamicsError> {
    let decomposition = decompose(net, &state).map_err(|e| DynamicsError::Mismatch(e.to_string()))?;
    let lyapunov = lyapunov(&decomposition, obj.x_star(), t);
    Ok(TrajectorySample { t, state, decomposition, lyapunov, z_integral })
}

/// Classical fixed-step RK4 from `cfg.t0` to `cfg.t_end`.
pub fn integrate(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    x0: &DMatrix<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    check_compatible(net, obj)?;
    obj.check_state(x0)?;
    let (n_steps, h) = cfg.steps();
    let lap = net.sparse_laplacian();
    let (rows, cols) = x0.shape();
    let zeros = || DMatrix::<f64>::zeros(rows, cols);
    let (mut k1, mut k2, mut k3, mut k4) = (zeros(), zeros(), zeros(), zeros());
    let (mut stage, mut grad) = (zeros(), zeros());

    let mut x = x0.clone();
    let mut z = zeros();
    let mut samples = Vec::with_capacity(n_steps / cfg.sample_every + 2);
    samples.push(make_sample(net, obj, cfg.t0, x.clone(), z.clone())?);

    obj.gradient_stack_into(&x, &mut grad);
    let mut grad_norm_max = grad.norm();

    for step in 1..=n_steps {
        let t = cfg.t0 + (step - 1) as f64 * h;
        let t_mid = t + 0.5 * h;
        let t_next = cfg.t0 + step as f64 * h;
        let (g1, g2, g4) = (cfg.gamma.at(t), cfg.gamma.at(t_mid), cfg.gamma.at(t_next));

        rhs_into(lap, obj, &x, g1, &mut k1, &mut grad);
        stage.copy_from(&x);
        axpy(&mut stage, 0.5 * h, &k1);
        rhs_into(lap, obj, &stage, g2, &mut k2, &mut grad);
        stage.copy_from(&x);
        axpy(&mut stage, 0.5 * h, &k2);
        rhs_into(lap, obj, &stage, g2, &mut k3, &mut grad);
        stage.copy_from(&x);
        axpy(&mut stage, h, &k3);
        rhs_into(lap, obj, &stage, g4, &mut k4, &mut grad);

        // z += h/2 (x_old + x_new)
        axpy(&mut z, 0.5 * h, &x);
        k2 += &k3;
        axpy(&mut k1, 2.0, &k2);
        k1 += &k4;
        axpy(&mut x, h / 6.0, &k1);
        axpy(&mut z, 0.5 * h, &x);

        if !x.iter().all(|v| v.is_finite()) {
            return Err(DynamicsError::Diverged { t: t_next });
        }
        obj.gradient_stack_into(&x, &mut grad);
        grad_norm_max = grad_norm_max.max(grad.norm());

        if step % cfg.sample_every == 0 || step == n_steps {
            samples.push(make_sample(net, obj, t_next, x.clone(), z.clone())?);
        }
    }
    Ok(Trajectory { samples, gamma: cfg.gamma, grad_norm_max, step: h })
}

/// `z_p(T) = (1/(T - t0)) ∫_{t0}^{T} x_p dt`, interpolating linearly between samples.
/// At `T = t0` this is the limit `x_p(t0)`.
pub fn running_average(traj: &Trajectory, p: usize, t: f64) -> Result<DVector<f64>, DynamicsError> {
    let n = traj.num_nodes();
    if p >= n {
        return Err(DynamicsError::NodeOutOfRange { node: p, n });
    }
    let (start, end) = (traj.t0(), traj.t_end());
    if !(t >= start && t <= end) {
        return Err(DynamicsError::OutOfRange { t, start, end });
    }
    let samples = traj.samples();
    let row = |s: &TrajectorySample| s.state.row(p).transpose();
    if t == start {
        return Ok(row(&samples[0]));
    }
    let k = samples.partition_point(|s| s.t < t);
    let hi = &samples[k];
    if hi.t == t {
        return Ok(hi.z_integral.row(p).transpose() / (t - start));
    }
    let lo = &samples[k - 1];
    let w = (t - lo.t) / (hi.t - lo.t);
    let x_t = row(lo) * (1.0 - w) + row(hi) * w;
    let integral = lo.z_integral.row(p).transpose() + (row(lo) + x_t) * (0.5 * (t - lo.t));
    Ok(integral / (t - start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::two_node_problem;

    fn scalar_node(lambda: f64, target: f64) -> (ClusterNetwork, QuadraticObjective) {
        let net = ClusterNetwork::from_edges(&[1], &[]).unwrap();
        let a = DMatrix::from_element(1, 1, lambda.sqrt());
        let b = DVector::from_element(1, target * lambda.sqrt());
        (net, QuadraticObjective::new(vec![(a, b)]).unwrap())
    }

    /// `x - x* = (x0 - x*)(t0/t)^{2λ/μ}` with `λ = μ/2` for one node.
    fn exact_single_node(obj: &QuadraticObjective, x0: f64, t0: f64, t: f64) -> f64 {
        let xs = obj.x_star()[0];
        let lambda = obj.hessian()[(0, 0)];
        xs + (x0 - xs) * (t0 / t).powf(2.0 * lambda / obj.mu())
    }

    #[test]
    fn pure_consensus_preserves_average() {
        let net = ClusterNetwork::from_edges(&[3, 2], &[(0, 1), (1, 2), (3, 4), (2, 3)]).unwrap();
        let obj = crate::objective::make_random_objective(5, 2, 3, 0, 1.0).unwrap();
        let x0 = DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64 - 4.0);
        let sigma2 = crate::linalg::sorted_eigenvalues(net.laplacian())[1];
        let t_end = 1.0 + 30.0 / sigma2;
        let cfg = IntegratorConfig { t0: 1.0, t_end, dt: 1e-3, sample_every: 100, gamma: GammaSchedule::Zero };
        let traj = integrate(&net, &obj, &x0, &cfg).unwrap();
        let mean = x0.row_mean();
        let last = &traj.last().state;
        for i in 0..5 {
            assert!((last.row(i) - &mean).amax() <= 1e-8);
        }
    }

    #[test]
    fn single_node_matches_closed_form() {
        let (net, obj) = scalar_node(3.0, 0.7);
        let x0 = DMatrix::from_element(1, 1, -2.0);
        let cfg = IntegratorConfig {
            t0: 1.0,
            t_end: 1e3,
            dt: 1e-2,
            sample_every: 1000,
            gamma: GammaSchedule::InverseTime { mu: obj.mu() },
        };
        let traj = integrate(&net, &obj, &x0, &cfg).unwrap();
        let x_end = traj.last().state[(0, 0)];
        assert!((x_end - obj.x_star()[0]).abs() <= 1e-3);
        assert!((x_end - exact_single_node(&obj, -2.0, 1.0, 1e3)).abs() <= 1e-9);
    }

    #[test]
    fn richardson_ratio_is_fourth_order() {
        let (net, obj) = two_node_problem();
        let x0 = DMatrix::from_column_slice(2, 1, &[2.0, -3.0]);
        let run = |dt: f64| {
            let cfg = IntegratorConfig {
                t0: 1.0,
                t_end: 3.0,
                dt,
                sample_every: usize::MAX,
                gamma: GammaSchedule::InverseTime { mu: obj.mu() },
            };
            integrate(&net, &obj, &x0, &cfg).unwrap().last().state.clone()
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let ratio = (&a - &b).norm() / (&b - &c).norm();
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn divergence_is_reported() {
        let (net, obj) = scalar_node(1.0, 0.0);
        let cfg = IntegratorConfig { t0: 1.0, t_end: 100.0, dt: 1.0, sample_every: 1, gamma: GammaSchedule::Constant(-50.0) };
        let err = integrate(&net, &obj, &DMatrix::from_element(1, 1, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, DynamicsError::Diverged { .. }));
    }

    #[test]
    fn samples_are_strictly_increasing_and_end_at_t() {
        let (net, obj) = two_node_problem();
        let cfg = IntegratorConfig { t0: 1.0, t_end: 2.0, dt: 0.03, sample_every: 7, gamma: GammaSchedule::Zero };
        let traj = integrate(&net, &obj, &DMatrix::zeros(2, 1), &cfg).unwrap();
        assert!(traj.samples().windows(2).all(|w| w[1].t > w[0].t));
        assert!((traj.t_end() - 2.0).abs() < 1e-12);
        assert_eq!(traj.first().z_integral.amax(), 0.0);
    }

    #[test]
    fn running_average_of_constant() {
        let (net, obj) = two_node_problem();
        let states = vec![DMatrix::from_element(2, 1, 1.5); 4];
        let traj = Trajectory::from_states(&net, &obj, &[1.0, 1.5, 2.5, 4.0], states, GammaSchedule::Zero).unwrap();
        for t in [1.0, 1.2, 2.5, 4.0] {
            assert!((running_average(&traj, 1, t).unwrap()[0] - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn running_average_of_ramp() {
        let (net, obj) = two_node_problem();
        let times: Vec<f64> = (0..=200).map(|k| 1.0 + k as f64 * 0.01).collect();
        let states = times.iter().map(|&t| DMatrix::from_element(2, 1, t)).collect();
        let traj = Trajectory::from_states(&net, &obj, &times, states, GammaSchedule::Zero).unwrap();
        assert!((running_average(&traj, 0, 3.0).unwrap()[0] - 2.0).abs() <= 1e-4);
        assert!((running_average(&traj, 0, 2.005).unwrap()[0] - 1.5025).abs() <= 1e-4);
        assert!(running_average(&traj, 0, 0.5).is_err());
        assert!(running_average(&traj, 0, 3.5).is_err());
        assert!(running_average(&traj, 2, 2.0).is_err());
    }

    #[test]
    fn jensen_transfer_on_samples() {
        let (net, obj) = two_node_problem();
        let cfg = IntegratorConfig {
            t0: 1.0,
            t_end: 20.0,
            dt: 1e-2,
            sample_every: 1,
            gamma: GammaSchedule::InverseTime { mu: obj.mu() },
        };
        let traj = integrate(&net, &obj, &DMatrix::from_column_slice(2, 1, &[4.0, -3.0]), &cfg).unwrap();
        for p in 0..2 {
            let z = running_average(&traj, p, 20.0).unwrap();
            let s = traj.samples();
            let mean_f: f64 = s
                .windows(2)
                .map(|w| {
                    let f = |k: &TrajectorySample| obj.value(&k.state.row(p).transpose());
                    0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t)
                })
                .sum::<f64>()
                / 19.0;
            assert!(obj.value(&z) <= mean_f + 1e-6);
        }
    }
}
