use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{gaussian_state, Criterion, Experiment};
use super::CliError;
use crate::discrete::DiscreteRun;
use crate::dynamics::{
    projection_residuals, GammaSchedule, LemmaReport, RateCertificate, TheoremReport, TwoTimeScaleReport,
};
use crate::graph::{aggregate_laplacian, check_cluster_assumption, metropolis_weights, ConditionCheck, SpectralConstants};
use crate::linalg::{max_abs_diff, sorted_eigenvalues, sym_norm2};

/// A scalar compared against a tolerance: passes when `value ≤ tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub passed: bool,
}

impl Measured {
    fn at_most(value: f64, tolerance: f64) -> Self {
        let margin = tolerance - value;
        Self { value, tolerance, margin, passed: margin >= 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub passed: bool,
    pub margin: f64,
    pub laplacian_split: Measured,
    pub aggregate_product: Measured,
    pub size_matrix: Measured,
    pub centering_projection: Measured,
    pub laplacian_psd: Measured,
    pub metropolis: Measured,
    pub projections: Measured,
}

pub const PROJECTION_PROBES: usize = 5;

pub fn identity_suite(exp: &Experiment) -> Result<IdentityReport, CliError> {
    let net = &exp.net;
    let n = net.num_nodes();
    let u = net.indicator();
    let w = net.centering();

    let laplacian_split = Measured::at_most(
        max_abs_diff(net.laplacian(), &(net.internal_laplacian() + net.external_laplacian())),
        1e-12,
    );
    let aggregate_product = Measured::at_most(max_abs_diff(&aggregate_laplacian(net), net.aggregate_laplacian()), 1e-10);
    let size_matrix = Measured::at_most(max_abs_diff(&(u.transpose() * u), net.size_matrix()), 1e-12);
    let projection = max_abs_diff(&(w * w), w)
        .max((w * DMatrix::from_element(n, 1, 1.0)).amax())
        .max((w * u).amax());
    let centering_projection = Measured::at_most(projection, 1e-12);
    let min_eig = [net.laplacian(), net.internal_laplacian(), net.external_laplacian()]
        .iter()
        .map(|m| sorted_eigenvalues(m)[0])
        .fold(f64::INFINITY, f64::min);
    let laplacian_psd = Measured::at_most((-min_eig).max(0.0), 1e-10);

    let wm = metropolis_weights(net, false)?.to_dense();
    let row_sums = (0..n).map(|i| (wm.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
    let asymmetry = max_abs_diff(&wm, &wm.transpose());
    let radius_excess = (sym_norm2(&wm) - 1.0).max(0.0);
    let metropolis = Measured::at_most(row_sums.max(asymmetry).max(radius_excess), 1e-12);

    let gamma = GammaSchedule::InverseTime { mu: exp.obj.mu() };
    let mut worst: f64 = 0.0;
    for probe in 0..PROJECTION_PROBES {
        let x = gaussian_state(n, exp.obj.dim(), 1.0, 1000 + probe as u64);
        let res = projection_residuals(net, &exp.obj, &x, 1.0 + probe as f64, &gamma)?;
        worst = worst.max(res.max());
    }
    let projections = Measured::at_most(worst, 1e-11);

    let all = [
        laplacian_split,
        aggregate_product,
        size_matrix,
        centering_projection,
        laplacian_psd,
        metropolis,
        projections,
    ];
    Ok(IdentityReport {
        passed: all.iter().all(|m| m.passed),
        margin: all.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min),
        laplacian_split,
        aggregate_product,
        size_matrix,
        centering_projection,
        laplacian_psd,
        metropolis,
        projections,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradBoundSource {
    Override,
    Trajectory,
    APriori,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub criterion: Criterion,
    pub holds: bool,
    pub margin: f64,
    pub grad_bound: f64,
    pub grad_bound_source: GradBoundSource,
    pub mu: f64,
    pub full: ConditionCheck,
    pub proxy: ConditionCheck,
}

pub fn assumption_report(
    sc: &SpectralConstants,
    grad_bound: f64,
    source: GradBoundSource,
    mu: f64,
    criterion: Criterion,
) -> Result<AssumptionReport, CliError> {
    let check = check_cluster_assumption(sc, grad_bound, mu)?;
    let gate = match criterion {
        Criterion::Full => check.full,
        Criterion::Proxy => check.proxy,
    };
    Ok(AssumptionReport {
        criterion,
        holds: gate.holds,
        margin: gate.margin,
        grad_bound,
        grad_bound_source: source,
        mu,
        full: check.full,
        proxy: check.proxy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSection {
    pub passed: bool,
    /// `-max worst_excess` over the three inequalities.
    pub margin: f64,
    #[serde(flatten)]
    pub report: LemmaReport,
}

impl LemmaSection {
    pub fn new(report: LemmaReport) -> Self {
        let worst = [report.inter.worst_excess, report.fast.worst_excess, report.residual.worst_excess]
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        Self { passed: report.holds(), margin: -worst, report }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSection {
    pub passed: bool,
    /// Smallest `bound(T) - err(T)`.
    pub margin: f64,
    pub tail_r2_min: f64,
    /// `R² - tail_r2_min`.
    pub tail_r2_margin: f64,
    pub certificate: RateCertificate,
    #[serde(flatten)]
    pub report: TheoremReport,
}

impl TheoremSection {
    pub fn new(report: TheoremReport, certificate: RateCertificate, tail_r2_min: f64) -> Self {
        let r2 = report.tail_fit.map_or(f64::NAN, |f| f.r2);
        let tail_r2_margin = r2 - tail_r2_min;
        Self {
            passed: report.holds() && tail_r2_margin >= 0.0,
            margin: report.min_slack,
            tail_r2_min,
            tail_r2_margin,
            certificate,
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoTimeScaleSection {
    pub passed: bool,
    pub margin: f64,
    #[serde(flatten)]
    pub report: Option<TwoTimeScaleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSection {
    pub passed: bool,
    /// `gap(K/10) - gap(K)` for the mean gap over all nodes.
    pub margin: f64,
    pub iterations: usize,
    pub mean_gap_tenth: f64,
    pub mean_gap_final: f64,
    pub max_gap_final: f64,
    pub tracked: Vec<usize>,
    pub tracked_final_gaps: Vec<f64>,
    pub local_sync_k: Option<usize>,
    pub mean_drift_residual: f64,
}

impl DiscreteSection {
    pub fn new(run: &DiscreteRun, iterations: usize) -> Self {
        let tenth = (iterations / 10).max(1);
        let gap_at = |k: usize| {
            run.records
                .iter()
                .rev()
                .find(|r| r.k <= k)
                .map_or(f64::NAN, |r| r.mean_gap)
        };
        let mean_gap_tenth = gap_at(tenth);
        let mean_gap_final = run.final_mean_gap();
        let margin = mean_gap_tenth - mean_gap_final;
        let last = run.records.last();
        Self {
            passed: margin > 0.0,
            margin,
            iterations,
            mean_gap_tenth,
            mean_gap_final,
            max_gap_final: last.map_or(f64::NAN, |r| r.max_gap),
            tracked: run.tracked.clone(),
            tracked_final_gaps: run.tracked.iter().map(|&p| run.final_gaps[p]).collect(),
            local_sync_k: run.local_sync_k,
            mean_drift_residual: run.mean_drift_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub internal_edges: usize,
    pub external_edges: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveSummary {
    pub d: usize,
    pub l: usize,
    pub mu: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub region_radius: f64,
    pub node_grad_bound: f64,
    pub stacked_grad_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Checks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identities: Option<IdentityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumption3: Option<AssumptionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_time_scale: Option<TwoTimeScaleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteSection>,
}

impl Checks {
    /// Names of failed checks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |name: &str, passed: Option<bool>| {
            if passed == Some(false) {
                out.push(name.to_string());
            }
        };
        push("identities", self.identities.as_ref().map(|c| c.passed));
        push("assumption3", self.assumption3.as_ref().map(|c| c.holds));
        push("lemmas", self.lemmas.as_ref().map(|c| c.passed));
        push("theorem", self.theorem.as_ref().map(|c| c.passed));
        push("two_time_scale", self.two_time_scale.as_ref().map(|c| c.passed));
        push("discrete", self.discrete.as_ref().map(|c| c.passed));
        out
    }
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: &'static str,
    pub name: Option<String>,
    pub passed: bool,
    pub failures: Vec<String>,
    pub skipped: Vec<&'static str>,
    pub network: NetworkSummary,
    pub spectral: SpectralConstants,
    pub objective: ObjectiveSummary,
    pub checks: Checks,
}
