use nalgebra::DMatrix;
use serde::Serialize;

use super::{check_compatible, dcg_rhs, DynamicsError, GammaSchedule};
use crate::decomposition::{decompose, Decomposition};
use crate::graph::ClusterNetwork;
use crate::linalg::max_abs_diff;
use crate::objective::QuadraticObjective;

fn inv_sizes(net: &ClusterNetwork, m: DMatrix<f64>) -> DMatrix<f64> {
    let mut m = m;
    for (a, mut row) in m.row_iter_mut().enumerate() {
        row /= net.cluster_sizes()[a] as f64;
    }
    m
}

/// `ėˣ = -W(Lᴵ + Lᴱ)eˣ - WLᴱUy - γW∇F(X)`.
pub fn fast_rhs(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    decomp: &Decomposition,
    x: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>, DynamicsError> {
    check_compatible(net, obj)?;
    let w = net.centering();
    let grad = obj.gradient_stack(x)?;
    let coupled = net.external_laplacian() * net.lift(&decomp.y);
    Ok(-(w * (net.laplacian() * &decomp.e_x + coupled + grad * gamma)))
}

/// `ẏ = -P⁻¹L̃ᴱy - P⁻¹UᵀLᴱeˣ - γP⁻¹Uᵀ∇F(X)`.
pub fn slow_rhs(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    decomp: &Decomposition,
    x: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>, DynamicsError> {
    check_compatible(net, obj)?;
    let grad = obj.gradient_stack(x)?;
    let ut = net.indicator().transpose();
    let sum = net.aggregate_laplacian() * &decomp.y + &ut * (net.external_laplacian() * &decomp.e_x) + ut * grad * gamma;
    Ok(-inv_sizes(net, sum))
}

/// `ėʸ = -P⁻¹L̃ᴱeʸ - P⁻¹UᵀLᴱeˣ - γP⁻¹Uᵀ∇F(X) + (γ/N) 1_r (1ᵀ∇F(X))`.
pub fn inter_rhs(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    decomp: &Decomposition,
    x: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>, DynamicsError> {
    check_compatible(net, obj)?;
    let grad = obj.gradient_stack(x)?;
    let ut = net.indicator().transpose();
    let sum = net.aggregate_laplacian() * &decomp.e_y + &ut * (net.external_laplacian() * &decomp.e_x) + ut * &grad * gamma;
    let mut out = -inv_sizes(net, sum);
    let drift = grad.row_sum() * (gamma / net.num_nodes() as f64);
    for mut row in out.row_iter_mut() {
        row += &drift;
    }
    Ok(out)
}

/// Max-abs gaps between the projected DCG right-hand side and the
/// fast/slow/inter-cluster forms, plus the average-dynamics identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionResiduals {
    pub fast: f64,
    pub slow: f64,
    pub inter: f64,
    pub average: f64,
}

impl ProjectionResiduals {
    pub fn max(&self) -> f64 {
        self.fast.max(self.slow).max(self.inter).max(self.average)
    }
}

pub fn projection_residuals(
    net: &ClusterNetwork,
    obj: &QuadraticObjective,
    x: &DMatrix<f64>,
    t: f64,
    gamma: &GammaSchedule,
) -> Result<ProjectionResiduals, DynamicsError> {
    let rhs = dcg_rhs(net, obj, x, t, gamma)?;
    let g = gamma.at(t);
    let decomp = decompose(net, x).map_err(|e| DynamicsError::Mismatch(e.to_string()))?;
    let fast = fast_rhs(net, obj, &decomp, x, g)?;
    let slow = slow_rhs(net, obj, &decomp, x, g)?;
    let inter = inter_rhs(net, obj, &decomp, x, g)?;

    let mean = rhs.row_mean();
    let mut slow_minus_mean = slow.clone();
    for mut row in slow_minus_mean.row_iter_mut() {
        row -= &mean;
    }
    let expected_mean = obj.gradient_stack(x)?.row_mean() * (-g);
    Ok(ProjectionResiduals {
        fast: max_abs_diff(&(net.centering() * &rhs), &fast),
        slow: max_abs_diff(&net.cluster_means(&rhs), &slow),
        inter: max_abs_diff(&slow_minus_mean, &inter),
        average: (mean - expected_mean).amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::make_random_objective;
    use proptest::prelude::*;

    fn network() -> ClusterNetwork {
        ClusterNetwork::from_edges(
            &[3, 2, 3],
            &[(0, 1), (1, 2), (3, 4), (5, 6), (6, 7), (5, 7), (2, 3), (4, 5), (0, 7)],
        )
        .unwrap()
    }

    #[test]
    fn consensus_with_zero_gamma_is_equilibrium() {
        let net = network();
        let obj = make_random_objective(8, 2, 3, 2, 1.0).unwrap();
        let x = DMatrix::from_fn(8, 2, |_, j| [0.4, -2.0][j]);
        let d = decompose(&net, &x).unwrap();
        assert!(fast_rhs(&net, &obj, &d, &x, 0.0).unwrap().amax() < 1e-14);
        assert!(slow_rhs(&net, &obj, &d, &x, 0.0).unwrap().amax() < 1e-14);
        assert!(inter_rhs(&net, &obj, &d, &x, 0.0).unwrap().amax() < 1e-14);
    }

    proptest! {
        #[test]
        fn projected_rhs_matches_lemma_forms(v in prop::collection::vec(-5.0f64..5.0, 16), t in 1.0f64..50.0) {
            let net = network();
            let obj = make_random_objective(8, 2, 3, 9, 1.0).unwrap();
            let x = DMatrix::from_vec(8, 2, v);
            let r = projection_residuals(&net, &obj, &x, t, &GammaSchedule::InverseTime { mu: obj.mu() }).unwrap();
            prop_assert!(r.max() <= 1e-11, "{r:?}");
        }
    }
}
