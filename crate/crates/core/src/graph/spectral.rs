use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ClusterNetwork, GraphError};
use crate::linalg::{sorted_eigenvalues, sym_norm2, SparseSym};

/// Eigenvalues at or below this are treated as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// Spectral quantities entering the cluster-structure condition and the rate bound.
///
/// A one-vertex graph has no disagreement subspace, so its algebraic
/// connectivity is reported as `+∞` (every bound of the form
/// `-vᵀLv ≤ -σ‖v‖²` holds vacuously). This arises for singleton clusters and
/// for the aggregate graph of a single-cluster network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    /// `min_α σ₂(L_α)`.
    pub sigma2_int: f64,
    pub sigma2_per_cluster: Vec<f64>,
    /// `σ₂(L̃ᴱ)`.
    pub sigma2_agg: f64,
    /// `σ₂(L)` of the whole graph, for comparison only.
    pub sigma2_full: f64,
    /// `‖Lᴱ‖₂`.
    pub norm_lext: f64,
    /// `‖L̃ᴱ‖₂`.
    pub norm_lagg: f64,
    pub n_min: usize,
    pub n_max: usize,
}

fn algebraic_connectivity(m: &DMatrix<f64>) -> f64 {
    let ev = sorted_eigenvalues(m);
    ev.get(1).copied().unwrap_or(f64::INFINITY)
}

/// Computes the constants; fails when any internal graph or the aggregate
/// graph is disconnected (`σ₂` within [`ZERO_EIGENVALUE_TOL`] of zero).
pub fn spectral_constants(net: &ClusterNetwork) -> Result<SpectralConstants, GraphError> {
    let per_cluster: Vec<f64> = (0..net.num_clusters())
        .map(|a| algebraic_connectivity(&net.cluster_laplacian(a)))
        .collect();
    for (a, &s) in per_cluster.iter().enumerate() {
        if s <= ZERO_EIGENVALUE_TOL {
            return Err(GraphError::DegenerateSpectrum { what: format!("cluster {a}"), value: s });
        }
    }
    let sigma2_agg = algebraic_connectivity(net.aggregate_laplacian());
    if sigma2_agg <= ZERO_EIGENVALUE_TOL {
        return Err(GraphError::DegenerateSpectrum {
            what: "the aggregate external graph".into(),
            value: sigma2_agg,
        });
    }
    let sizes = net.cluster_sizes();
    Ok(SpectralConstants {
        sigma2_int: per_cluster.iter().copied().fold(f64::INFINITY, f64::min),
        sigma2_per_cluster: per_cluster,
        sigma2_agg,
        sigma2_full: algebraic_connectivity(net.laplacian()),
        norm_lext: sym_norm2(net.external_laplacian()),
        norm_lagg: sym_norm2(net.aggregate_laplacian()),
        n_min: *sizes.iter().min().unwrap(),
        n_max: *sizes.iter().max().unwrap(),
    })
}

/// One side-by-side inequality `lhs ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`; non-negative iff the condition holds.
    pub margin: f64,
}

impl ConditionCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self { holds: margin >= 0.0, lhs, rhs, margin }
    }
}

/// Outcome of the cluster-structure condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    /// `σ₂ᴵ ≥ (12L/μ + ‖Lᴱ‖)·N_max‖Lᴱ‖ / (N_min σ₂(L̃ᴱ))`.
    pub full: ConditionCheck,
    /// The simplified form `σ₂ᴵ ≳ ‖L̃ᴱ‖² / σ₂(L̃ᴱ)` (obtained for `L = μ`, equal cluster sizes).
    pub proxy: ConditionCheck,
}

impl AssumptionCheck {
    pub fn holds(&self) -> bool {
        self.full.holds
    }
}

/// Evaluates the "dense inside, sparse outside" condition for gradient bound
/// `grad_bound` (L) and strong-convexity constant `mu`.
pub fn check_cluster_assumption(
    sc: &SpectralConstants,
    grad_bound: f64,
    mu: f64,
) -> Result<AssumptionCheck, GraphError> {
    if !(grad_bound > 0.0) {
        return Err(GraphError::NonPositive { name: "gradient bound L", value: grad_bound });
    }
    if !(mu > 0.0) {
        return Err(GraphError::NonPositive { name: "strong convexity mu", value: mu });
    }
    if !(sc.sigma2_agg > 0.0) {
        return Err(GraphError::DegenerateSpectrum {
            what: "the aggregate external graph".into(),
            value: sc.sigma2_agg,
        });
    }
    let (n_min, n_max) = (sc.n_min as f64, sc.n_max as f64);
    let full_rhs = if sc.norm_lext == 0.0 {
        0.0
    } else {
        (12.0 * grad_bound / mu + sc.norm_lext) * n_max * sc.norm_lext / (n_min * sc.sigma2_agg)
    };
    let proxy_rhs = if sc.norm_lagg == 0.0 { 0.0 } else { sc.norm_lagg * sc.norm_lagg / sc.sigma2_agg };
    Ok(AssumptionCheck {
        full: ConditionCheck::new(sc.sigma2_int, full_rhs),
        proxy: ConditionCheck::new(sc.sigma2_int, proxy_rhs),
    })
}

/// Symmetric doubly stochastic mixing matrix stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(pub(crate) SparseSym);

impl MixingMatrix {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.0.to_dense()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Metropolis weights `w_ij = 1/max(d_i, d_j)` on edges and `1 - Σ_j w_ij` on
/// the diagonal, with `d` the node degree. With `plus_one` the customary
/// `1/(1 + max(d_i, d_j))` is used instead.
pub fn metropolis_weights(net: &ClusterNetwork, plus_one: bool) -> Result<MixingMatrix, GraphError> {
    let n = net.num_nodes();
    let deg = net.degrees();
    let shift = if plus_one { 1.0 } else { 0.0 };
    let mut rows = vec![Vec::new(); n];
    for &(i, j) in net.edges() {
        let w = 1.0 / (deg[i].max(deg[j]) as f64 + shift);
        rows[i].push((j, w));
        rows[j].push((i, w));
    }
    let mut diag = Vec::with_capacity(n);
    for (node, row) in rows.iter().enumerate() {
        let value = 1.0 - row.iter().map(|&(_, w)| w).sum::<f64>();
        if value < -1e-12 {
            return Err(GraphError::NegativeSelfWeight { node, value });
        }
        diag.push(value.max(0.0));
    }
    Ok(MixingMatrix(SparseSym::new(diag, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn path3() -> ClusterNetwork {
        ClusterNetwork::from_edges(&[3], &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn complete_graph_connectivity_is_n() {
        for n in [2usize, 5, 9] {
            let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let net = ClusterNetwork::from_edges(&[n], &edges).unwrap();
            let sc = spectral_constants(&net).unwrap();
            assert!((sc.sigma2_int - n as f64).abs() < 1e-10);
            assert!((sc.sigma2_full - n as f64).abs() < 1e-10);
            assert_eq!(sc.sigma2_agg, f64::INFINITY);
            assert_eq!(sc.norm_lext, 0.0);
        }
    }

    #[test]
    fn two_node_path_connectivity() {
        let net = ClusterNetwork::from_edges(&[2], &[(0, 1)]).unwrap();
        assert!((spectral_constants(&net).unwrap().sigma2_int - 2.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_of_clusters_aggregate() {
        // Three K4 clusters joined in a triangle by disjoint links.
        let mut edges = Vec::new();
        for a in 0..3 {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((4 * a + i, 4 * a + j));
                }
            }
        }
        edges.extend([(0, 4), (5, 8), (9, 1)]);
        let net = ClusterNetwork::from_edges(&[4, 4, 4], &edges).unwrap();
        let sc = spectral_constants(&net).unwrap();
        assert!((sc.sigma2_agg - 3.0).abs() < 1e-10);
        assert!((sc.norm_lagg - 3.0).abs() < 1e-10);
        assert!((sc.norm_lext - 2.0).abs() < 1e-10);
        assert_eq!((sc.n_min, sc.n_max), (4, 4));
    }

    #[test]
    fn disconnected_spectrum_is_rejected() {
        let net = ClusterNetwork::from_edges(&[2, 2], &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(spectral_constants(&net), Err(GraphError::DegenerateSpectrum { .. })));
    }

    fn constants(sigma2_int: f64, sigma2_agg: f64, norm_lext: f64, norm_lagg: f64, n: (usize, usize)) -> SpectralConstants {
        SpectralConstants {
            sigma2_int,
            sigma2_per_cluster: vec![sigma2_int],
            sigma2_agg,
            sigma2_full: 0.0,
            norm_lext,
            norm_lagg,
            n_min: n.0,
            n_max: n.1,
        }
    }

    #[test]
    fn assumption_without_coupling_is_trivial() {
        let check = check_cluster_assumption(&constants(0.5, 1.0, 0.0, 0.0, (3, 7)), 100.0, 0.1).unwrap();
        assert_eq!(check.full.rhs, 0.0);
        assert!(check.holds());
    }

    #[test]
    fn assumption_formula_hand_value() {
        let check = check_cluster_assumption(&constants(2.0, 2.0, 2.0, 2.0, (2, 2)), 1.0, 1.0).unwrap();
        assert!((check.full.rhs - 14.0).abs() < 1e-12);
        assert!((check.full.margin + 12.0).abs() < 1e-12);
        assert!(!check.holds());
        assert!((check.proxy.rhs - 2.0).abs() < 1e-12);
        assert!(check.proxy.holds);
    }

    #[test]
    fn assumption_rejects_bad_inputs() {
        let sc = constants(2.0, 0.0, 2.0, 2.0, (2, 2));
        assert!(check_cluster_assumption(&sc, 1.0, 1.0).is_err());
        let sc = constants(2.0, 1.0, 2.0, 2.0, (2, 2));
        assert!(check_cluster_assumption(&sc, 0.0, 1.0).is_err());
        assert!(check_cluster_assumption(&sc, 1.0, -1.0).is_err());
    }

    #[test]
    fn metropolis_path() {
        let w = metropolis_weights(&path3(), false).unwrap().to_dense();
        let expected = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5]);
        assert!(max_abs_diff(&w, &expected) < 1e-15);
    }

    #[test]
    fn metropolis_k2_and_star() {
        let k2 = ClusterNetwork::from_edges(&[2], &[(0, 1)]).unwrap();
        let w = metropolis_weights(&k2, false).unwrap().to_dense();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));

        let star = ClusterNetwork::from_edges(&[4], &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let w = metropolis_weights(&star, false).unwrap().to_dense();
        let t = 1.0 / 3.0;
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, t, t, t, t, 2.0 * t, 0.0, 0.0, t, 0.0, 2.0 * t, 0.0, t, 0.0, 0.0, 2.0 * t],
        );
        assert!(max_abs_diff(&w, &expected) < 1e-15);
    }

    #[test]
    fn metropolis_plus_one_variant() {
        let w = metropolis_weights(&path3(), true).unwrap().to_dense();
        let third = 1.0 / 3.0;
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[1.0 - third, third, 0.0, third, 1.0 / 3.0, third, 0.0, third, 1.0 - third],
        );
        assert!(max_abs_diff(&w, &expected) < 1e-15);
    }
}
