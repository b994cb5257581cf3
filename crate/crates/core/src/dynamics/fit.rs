use serde::Serialize;

use super::Trajectory;
use crate::graph::SpectralConstants;

/// Ordinary least squares `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn fit_linear(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Some(LinearFit { slope, intercept, r2, points: n })
}

/// Exponential rate from a least-squares fit of `ln v` against `t`, using the
/// samples from the start up to the first one at or below `v(t_start)/e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r2: f64,
    pub points: usize,
    pub e_fold_time: f64,
}

pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<DecayFit> {
    let v0 = *values.first()?;
    if !(v0 > 0.0) {
        return None;
    }
    let threshold = v0 / std::f64::consts::E;
    let end = values.iter().position(|&v| v <= threshold)?;
    let (t, v) = (&times[..=end], &values[..=end]);
    if v.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let fit = fit_linear(t, &logs)?;
    Some(DecayFit { rate: -fit.slope, r2: fit.r2, points: fit.points, e_fold_time: t[end] - t[0] })
}

/// Fast versus inter-cluster decay on a pure-consensus trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoTimeScaleReport {
    pub rate_ex: f64,
    pub rate_ey: f64,
    pub ratio: f64,
    /// `σ₂ᴵ·N_max / σ₂(L̃ᴱ)`.
    pub predicted_ratio: f64,
    /// Allowed shortfall of `ratio` relative to `predicted_ratio`.
    pub factor: f64,
    pub holds: bool,
    pub margin: f64,
}

pub fn two_time_scale(traj: &Trajectory, sc: &SpectralConstants, factor: f64) -> Option<TwoTimeScaleReport> {
    let times: Vec<f64> = traj.samples().iter().map(|s| s.t).collect();
    let ex: Vec<f64> = traj.samples().iter().map(|s| s.lyapunov.v_ex).collect();
    let ey: Vec<f64> = traj.samples().iter().map(|s| s.lyapunov.v_ey).collect();
    let rate_ex = fit_decay_rate(&times, &ex)?.rate;
    let rate_ey = fit_decay_rate(&times, &ey)?.rate;
    let ratio = rate_ex / rate_ey;
    let predicted_ratio = sc.sigma2_int * sc.n_max as f64 / sc.sigma2_agg;
    let margin = ratio - predicted_ratio / factor;
    Some(TwoTimeScaleReport { rate_ex, rate_ey, ratio, predicted_ratio, factor, holds: margin >= 0.0, margin })
}
