use serde::Serialize;

use super::{fit_linear, running_average, DynamicsError, LinearFit, Trajectory};
use crate::graph::{GraphError, SpectralConstants};
use crate::objective::QuadraticObjective;

/// Constants of the `ln(T)/T` bound on `‖z_p(T) - x*‖²` for a run started at `t0`:
///
/// `bound(T) = (D + t0·V(x̄(t0)) + C·ln(T/t0)) / (T - t0)`
///
/// with `C = 2L(N_min + ε)/(μ N_min)`, `ε = 6L N_max/(μσ₂(L̃ᴱ)) + N_max‖Lᴱ‖/σ₂(L̃ᴱ)`
/// and `D = V(eˣ(t0)) + ε V(eʸ(t0))`. With `t0 = 1` and `x̄(t0) = x*` this is
/// `D/T + C ln(T)/T` up to the factor `T/(T - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCertificate {
    pub epsilon: f64,
    pub d: f64,
    /// Coefficient of the logarithm.
    pub c: f64,
    pub t0: f64,
    /// `t0·V(x̄(t0))`.
    pub start_residual: f64,
    pub grad_bound: f64,
    pub mu: f64,
}

impl RateCertificate {
    pub fn bound(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return f64::INFINITY;
        }
        (self.d + self.start_residual + self.c * (t / self.t0).ln()) / (t - self.t0)
    }

    /// `D/T + C ln(T)/T`.
    pub fn origin_bound(&self, t: f64) -> f64 {
        self.d / t + self.c * t.ln() / t
    }
}

pub fn rate_certificate(
    sc: &SpectralConstants,
    obj: &QuadraticObjective,
    traj: &Trajectory,
    grad_bound: Option<f64>,
) -> Result<RateCertificate, DynamicsError> {
    if !(sc.sigma2_agg > 0.0) {
        return Err(GraphError::DegenerateSpectrum { what: "the aggregate external graph".into(), value: sc.sigma2_agg }.into());
    }
    let l = grad_bound.unwrap_or(traj.grad_norm_max());
    let mu = obj.mu();
    let (n_min, n_max) = (sc.n_min as f64, sc.n_max as f64);
    let epsilon = 6.0 * l * n_max / (mu * sc.sigma2_agg) + n_max * sc.norm_lext / sc.sigma2_agg;
    let start = traj.first();
    Ok(RateCertificate {
        epsilon,
        d: start.lyapunov.v_ex + epsilon * start.lyapunov.v_ey,
        c: 2.0 * l * (n_min + epsilon) / (mu * n_min),
        t0: start.t,
        start_residual: start.t * start.lyapunov.v_xbar,
        grad_bound: l,
        mu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremRow {
    pub t: f64,
    /// `max_p ‖z_p(T) - x*‖²`.
    pub err: f64,
    pub worst_node: usize,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub checked: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub min_slack_t: f64,
    /// Fit `err = c·ln(T)/T + b` over the last decade of sample times.
    pub tail_fit: Option<LinearFit>,
    pub tail_window: (f64, f64),
    #[serde(skip)]
    pub rows: Vec<TheoremRow>,
}

impl TheoremReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Compares `‖z_p(T) - x*‖²` with `cert.bound(T)` at every sample `T > t0`,
/// for every node `p`.
pub fn theorem_check(
    traj: &Trajectory,
    cert: &RateCertificate,
    obj: &QuadraticObjective,
) -> Result<TheoremReport, DynamicsError> {
    let mut rows = Vec::new();
    for s in traj.samples().iter().skip(1) {
        let mut err = f64::NEG_INFINITY;
        let mut worst_node = 0;
        for p in 0..traj.num_nodes() {
            let e = (running_average(traj, p, s.t)? - obj.x_star()).norm_squared();
            if e > err {
                err = e;
                worst_node = p;
            }
        }
        let bound = cert.bound(s.t);
        rows.push(TheoremRow { t: s.t, err, worst_node, bound, slack: bound - err });
    }
    let violations = rows.iter().filter(|r| !(r.slack >= 0.0)).count();
    let (min_slack, min_slack_t) = rows
        .iter()
        .map(|r| (r.slack, r.t))
        .fold((f64::INFINITY, f64::NAN), |acc, x| if x.0 < acc.0 { x } else { acc });

    let t_end = traj.t_end();
    let tail_window = ((t_end / 10.0).max(traj.t0()), t_end);
    let (u, e): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.t >= tail_window.0)
        .map(|r| (r.t.ln() / r.t, r.err))
        .unzip();
    Ok(TheoremReport {
        checked: rows.len(),
        violations,
        min_slack,
        min_slack_t,
        tail_fit: fit_linear(&u, &e),
        tail_window,
        rows,
    })
}
