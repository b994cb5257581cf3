//! Per-node least-squares objectives `f_i(x) = ‖A_i x - b_i‖²` and the
//! network objective `f = (1/N) Σ f_i`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm2, sorted_eigenvalues};

const GENERATION_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("global Hessian is singular (N·l = {rows} rows for d = {dim})")]
    Singular { rows: usize, dim: usize },
    #[error("invalid objective parameter: {0}")]
    InvalidParameter(String),
    #[error("objective file: {0}")]
    Io(#[from] std::io::Error),
    #[error("objective file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
struct NodeQuadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `2AᵀA`
    hess: DMatrix<f64>,
    /// `2Aᵀb`
    lin: DVector<f64>,
}

impl NodeQuadratic {
    fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let at = a.transpose();
        let hess = 2.0 * &at * &a;
        let lin = 2.0 * &at * &b;
        Self { a, b, hess, lin }
    }
}

/// Least-squares network objective with its exact optimum.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    dim: usize,
    rows: usize,
    nodes: Vec<NodeQuadratic>,
    hessian: DMatrix<f64>,
    x_star: DVector<f64>,
    f_star: f64,
    mu: f64,
}

/// A priori constants: `mu` and bounds on gradient norms over a ball around `x*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConstants {
    pub mu: f64,
    pub region_radius: f64,
    /// Bound on `max_i ‖∇f_i(x)‖` for `‖x - x*‖ ≤ R`.
    pub node_grad_bound: f64,
    /// `√N · node_grad_bound`, a bound on the stacked `‖∇F(X)‖`.
    pub stacked_grad_bound: f64,
}

impl QuadraticObjective {
    /// Builds the objective from `(A_i, b_i)` pairs (`A_i` is l×d).
    pub fn new(nodes: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self, ObjectiveError> {
        let Some((a0, _)) = nodes.first() else {
            return Err(ObjectiveError::InvalidParameter("no nodes".into()));
        };
        let (rows, dim) = a0.shape();
        if dim == 0 || rows == 0 {
            return Err(ObjectiveError::InvalidParameter("A_i must be non-empty".into()));
        }
        for (i, (a, b)) in nodes.iter().enumerate() {
            if a.shape() != (rows, dim) || b.len() != rows {
                return Err(ObjectiveError::Dimension(format!(
                    "node {i}: A is {:?}, b has {} entries; expected {rows}×{dim} and {rows}",
                    a.shape(),
                    b.len()
                )));
            }
        }
        let nodes: Vec<NodeQuadratic> = nodes.into_iter().map(|(a, b)| NodeQuadratic::new(a, b)).collect();
        let n = nodes.len() as f64;
        let hessian = nodes.iter().fold(DMatrix::zeros(dim, dim), |acc, q| acc + &q.hess) / n;
        let rhs = nodes.iter().fold(DVector::zeros(dim), |acc, q| acc + &q.lin) / n;

        let singular = || ObjectiveError::Singular { rows: nodes.len() * rows, dim };
        let mu = sorted_eigenvalues(&hessian)[0];
        if !(mu > 1e-12 * hessian.norm().max(1.0)) {
            return Err(singular());
        }
        let x_star = hessian.clone().cholesky().ok_or_else(singular)?.solve(&rhs);

        let mut obj = Self { dim, rows, nodes, hessian, x_star, f_star: 0.0, mu };
        obj.f_star = obj.value(&obj.x_star.clone());
        Ok(obj)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows_per_node(&self) -> usize {
        self.rows
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.nodes[i].a
    }

    pub fn node_target(&self, i: usize) -> &DVector<f64> {
        &self.nodes[i].b
    }

    /// `H = (2/N) Σ A_iᵀA_i`, the Hessian of `f`.
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Strong-convexity constant of `f`: `λ_min(H)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn optimum(&self) -> (&DVector<f64>, f64) {
        (&self.x_star, self.f_star)
    }

    pub fn node_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        let q = &self.nodes[i];
        (&q.a * x - &q.b).norm_squared()
    }

    pub fn node_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let q = &self.nodes[i];
        &q.hess * x - &q.lin
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.nodes.len()).map(|i| self.node_value(i, x)).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let sum = (0..self.nodes.len()).fold(DVector::zeros(self.dim), |acc, i| acc + self.node_gradient(i, x));
        sum / self.nodes.len() as f64
    }

    /// `∇F(X)`: row `i` is `∇f_i(x_i)` for the N×d state `X`.
    pub fn gradient_stack(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ObjectiveError> {
        self.check_state(x)?;
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        self.gradient_stack_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn check_state(&self, x: &DMatrix<f64>) -> Result<(), ObjectiveError> {
        if x.shape() != (self.nodes.len(), self.dim) {
            return Err(ObjectiveError::Dimension(format!(
                "state is {:?}, expected {}×{}",
                x.shape(),
                self.nodes.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Unchecked variant used inside integration loops.
    pub(crate) fn gradient_stack_into(&self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let d = self.dim;
        for (i, q) in self.nodes.iter().enumerate() {
            for r in 0..d {
                let mut acc = -q.lin[r];
                for c in 0..d {
                    acc += q.hess[(r, c)] * x[(i, c)];
                }
                out[(i, r)] = acc;
            }
        }
    }

    /// `μ` plus gradient bounds valid on the ball `‖x - x*‖ ≤ R`, using
    /// `‖∇f_i(x)‖ ≤ ‖∇f_i(0)‖ + ‖2A_iᵀA_i‖·‖x‖` and `‖x‖ ≤ R + ‖x*‖`.
    pub fn estimate_constants(&self, region_radius: f64) -> Result<ObjectiveConstants, ObjectiveError> {
        if !(region_radius > 0.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "region radius must be positive, got {region_radius}"
            )));
        }
        let reach = region_radius + self.x_star.norm();
        let curvature = self.nodes.iter().map(|q| norm2(&q.hess)).fold(0.0, f64::max);
        let at_origin = self.nodes.iter().map(|q| q.lin.norm()).fold(0.0, f64::max);
        let node_grad_bound = curvature * reach + at_origin;
        Ok(ObjectiveConstants {
            mu: self.mu,
            region_radius,
            node_grad_bound,
            stacked_grad_bound: (self.nodes.len() as f64).sqrt() * node_grad_bound,
        })
    }
}

/// Parameters for [`make_random_objective`] as they appear in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGenerator {
    pub d: usize,
    pub l: usize,
    #[serde(default)]
    pub seed: u64,
    /// Scale of the i.i.d. standard-normal entries of each `A_i`.
    #[serde(default = "default_conditioning")]
    pub conditioning: f64,
    /// When set, `b_i = A_i c + noise·ξ_i` for a common random `c` instead of
    /// i.i.d. normal targets; small noise gives a low-heterogeneity problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_noise: Option<f64>,
}

fn default_conditioning() -> f64 {
    1.0
}

impl ObjectiveGenerator {
    pub fn generate(&self, n: usize) -> Result<QuadraticObjective, ObjectiveError> {
        if n == 0 || self.d == 0 || self.l == 0 {
            return Err(ObjectiveError::InvalidParameter("N, d and l must be at least 1".into()));
        }
        if !(self.conditioning > 0.0) {
            return Err(ObjectiveError::InvalidParameter("conditioning must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let mut last_err = None;
        for _ in 0..GENERATION_ATTEMPTS {
            let planted = DVector::from_fn(self.d, |_, _| normal());
            let nodes: Vec<_> = (0..n)
                .map(|_| {
                    let a = DMatrix::from_fn(self.l, self.d, |_, _| self.conditioning * normal());
                    let b = match self.planted_noise {
                        Some(noise) => &a * &planted + DVector::from_fn(self.l, |_, _| noise * normal()),
                        None => DVector::from_fn(self.l, |_, _| normal()),
                    };
                    (a, b)
                })
                .collect();
            match QuadraticObjective::new(nodes) {
                Ok(obj) => return Ok(obj),
                Err(e @ ObjectiveError::Singular { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap())
    }
}

/// Random least-squares instance: `A_i` entries `N(0, conditioning²)`,
/// `b_i` entries `N(0, 1)`, redrawn until the global Hessian is positive definite.
pub fn make_random_objective(
    n: usize,
    d: usize,
    l: usize,
    seed: u64,
    conditioning: f64,
) -> Result<QuadraticObjective, ObjectiveError> {
    ObjectiveGenerator { d, l, seed, conditioning, planted_noise: None }.generate(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveNode {
    /// Row-major `l×d` entries.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFile {
    pub d: usize,
    pub l: usize,
    pub nodes: Vec<ObjectiveNode>,
}

impl ObjectiveFile {
    pub fn from_objective(obj: &QuadraticObjective) -> Self {
        let nodes = obj
            .nodes
            .iter()
            .map(|q| ObjectiveNode {
                a: q.a.transpose().as_slice().to_vec(),
                b: q.b.as_slice().to_vec(),
            })
            .collect();
        Self { d: obj.dim, l: obj.rows, nodes }
    }

    pub fn into_objective(self) -> Result<QuadraticObjective, ObjectiveError> {
        let (d, l) = (self.d, self.l);
        let nodes = self
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, node)| {
                if node.a.len() != l * d || node.b.len() != l {
                    return Err(ObjectiveError::Dimension(format!(
                        "node {i}: {} A entries and {} b entries for l = {l}, d = {d}",
                        node.a.len(),
                        node.b.len()
                    )));
                }
                Ok((DMatrix::from_row_slice(l, d, &node.a), DVector::from_vec(node.b)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        QuadraticObjective::new(nodes)
    }
}

pub fn load_objective(path: impl AsRef<Path>) -> Result<QuadraticObjective, ObjectiveError> {
    let file: ObjectiveFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_objective()
}

pub fn save_objective(obj: &QuadraticObjective, path: impl AsRef<Path>) -> Result<(), ObjectiveError> {
    fs::write(path, serde_json::to_string(&ObjectiveFile::from_objective(obj))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn identity_nodes(targets: &[&[f64]]) -> QuadraticObjective {
        let d = targets[0].len();
        QuadraticObjective::new(
            targets
                .iter()
                .map(|b| (DMatrix::identity(d, d), DVector::from_row_slice(b)))
                .collect(),
        )
        .unwrap()
    }

    /// Independent normal-equation solve via LU on Σ AᵀA.
    fn normal_equation_solution(obj: &QuadraticObjective) -> DVector<f64> {
        let d = obj.dim();
        let mut ata = DMatrix::zeros(d, d);
        let mut atb = DVector::zeros(d);
        for i in 0..obj.num_nodes() {
            let a = obj.node_matrix(i);
            ata += a.transpose() * a;
            atb += a.transpose() * obj.node_target(i);
        }
        ata.lu().solve(&atb).unwrap()
    }

    #[test]
    fn identity_quadratic_single_node() {
        let obj = identity_nodes(&[&[0.0, 0.0, 0.0]]);
        assert!(obj.x_star().norm() < 1e-15);
        assert!((obj.mu() - 2.0).abs() < 1e-12);
        assert_eq!(obj.f_star(), 0.0);
    }

    #[test]
    fn identity_quadratics_average_targets() {
        let obj = identity_nodes(&[&[1.0, 2.0], &[3.0, -2.0], &[5.0, 3.0]]);
        assert!((obj.x_star() - DVector::from_row_slice(&[3.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn random_optimum_matches_normal_equations() {
        let obj = make_random_objective(60, 4, 6, 7, 1.0).unwrap();
        let reference = normal_equation_solution(&obj);
        assert!((obj.x_star() - reference).amax() < 1e-10);
        assert!(obj.gradient(obj.x_star()).amax() < 1e-10);
    }

    #[test]
    fn consistent_system_has_zero_residual() {
        let c = DVector::from_row_slice(&[0.5, -1.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nodes = (0..5)
            .map(|_| {
                let a = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>() - 0.5);
                let b = &a * &c;
                (a, b)
            })
            .collect();
        let obj = QuadraticObjective::new(nodes).unwrap();
        assert!((obj.x_star() - &c).amax() < 1e-10);
        assert!(obj.f_star().abs() < 1e-18);
    }

    #[test]
    fn gradient_stack_formula() {
        let obj = identity_nodes(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 4.0]);
        assert_eq!(obj.gradient_stack(&x).unwrap(), 2.0 * x);
    }

    #[test]
    fn gradients_sum_to_zero_at_optimum() {
        let obj = make_random_objective(20, 3, 4, 11, 1.0).unwrap();
        let consensus = DMatrix::from_fn(20, 3, |_, c| obj.x_star()[c]);
        let g = obj.gradient_stack(&consensus).unwrap();
        assert!(g.row_sum().amax() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let obj = make_random_objective(8, 3, 5, 5, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for i in 0..obj.num_nodes() {
            let x = DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let g = obj.node_gradient(i, &x);
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (obj.node_value(i, &xp) - obj.node_value(i, &xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "node {i} coord {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let obj = identity_nodes(&[&[0.0, 0.0]]);
        assert!(matches!(obj.gradient_stack(&DMatrix::zeros(2, 2)), Err(ObjectiveError::Dimension(_))));
        let bad = QuadraticObjective::new(vec![
            (DMatrix::identity(2, 2), DVector::zeros(2)),
            (DMatrix::identity(3, 2), DVector::zeros(3)),
        ]);
        assert!(matches!(bad, Err(ObjectiveError::Dimension(_))));
    }

    #[test]
    fn underdetermined_problem_is_singular() {
        assert!(matches!(make_random_objective(1, 5, 2, 0, 1.0), Err(ObjectiveError::Singular { .. })));
    }

    #[test]
    fn constants_for_identity() {
        let obj = identity_nodes(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let k = obj.estimate_constants(1.0).unwrap();
        assert!((k.node_grad_bound - 2.0).abs() < 1e-12);
        assert!((k.stacked_grad_bound - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(obj.estimate_constants(0.0).is_err());
    }

    #[test]
    fn mu_of_diagonal_node() {
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]));
        let obj = QuadraticObjective::new(vec![(a, DVector::zeros(2))]).unwrap();
        assert!((obj.mu() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_bound_holds_on_sampled_ball() {
        let obj = make_random_objective(12, 3, 4, 21, 1.0).unwrap();
        let radius = 1.5;
        let k = obj.estimate_constants(radius).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..1000 {
            let dir = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng)).normalize();
            let x = obj.x_star() + dir * (radius * rng.random::<f64>().cbrt());
            for i in 0..obj.num_nodes() {
                assert!(obj.node_gradient(i, &x).norm() <= k.node_grad_bound);
            }
        }
    }

    #[test]
    fn strong_convexity_witness() {
        let obj = make_random_objective(15, 3, 4, 8, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let y = DVector::from_fn(3, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let gap = obj.value(&x) - obj.value(&y) - obj.gradient(&y).dot(&(&x - &y));
            assert!(gap >= 0.5 * obj.mu() * (&x - &y).norm_squared() - 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_random_objective(6, 2, 3, 4, 1.0).unwrap();
        let b = make_random_objective(6, 2, 3, 4, 1.0).unwrap();
        assert_eq!(a.x_star(), b.x_star());
        assert_eq!(a.node_matrix(5), b.node_matrix(5));
    }

    #[test]
    fn file_round_trip() {
        let obj = make_random_objective(4, 2, 3, 1, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obj.json");
        save_objective(&obj, &path).unwrap();
        let back = load_objective(&path).unwrap();
        for i in 0..4 {
            assert_eq!(back.node_matrix(i), obj.node_matrix(i));
            assert_eq!(back.node_target(i), obj.node_target(i));
        }
    }
}
