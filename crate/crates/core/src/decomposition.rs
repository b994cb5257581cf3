//! Slow, fast and inter-cluster coordinates of a network state.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::graph::ClusterNetwork;

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("state has {got} rows, network has {expected} nodes")]
    Dimension { expected: usize, got: usize },
}

/// `(x̄, y, eˣ, eʸ)` for an N×d state `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Network average, `(1/N) Xᵀ1`.
    pub xbar: DVector<f64>,
    /// Cluster averages `P⁻¹UᵀX`, r×d.
    pub y: DMatrix<f64>,
    /// Within-cluster deviations `X - Uy`, N×d.
    pub e_x: DMatrix<f64>,
    /// Cluster averages minus network average, r×d.
    pub e_y: DMatrix<f64>,
}

impl Decomposition {
    /// `Uy + eˣ`.
    pub fn reconstruct(&self, net: &ClusterNetwork) -> DMatrix<f64> {
        net.lift(&self.y) + &self.e_x
    }
}

pub fn decompose(net: &ClusterNetwork, x: &DMatrix<f64>) -> Result<Decomposition, DecompositionError> {
    if x.nrows() != net.num_nodes() {
        return Err(DecompositionError::Dimension { expected: net.num_nodes(), got: x.nrows() });
    }
    let xbar = x.row_mean().transpose();
    let y = net.cluster_means(x);
    let e_x = x - net.lift(&y);
    let mut e_y = y.clone();
    for mut row in e_y.row_iter_mut() {
        row -= xbar.transpose();
    }
    Ok(Decomposition { xbar, y, e_x, e_y })
}

/// Lyapunov values: `V(eˣ) = ‖eˣ‖`, `V(eʸ) = ‖eʸ‖` (Frobenius) and `V(x̄) = ‖x̄ - x*‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub v_ex: f64,
    pub v_ey: f64,
    pub v_xbar: f64,
}

pub fn lyapunov(decomp: &Decomposition, x_star: &DVector<f64>, t: f64) -> LyapunovSample {
    LyapunovSample {
        t,
        v_ex: decomp.e_x.norm(),
        v_ey: decomp.e_y.norm(),
        v_xbar: (&decomp.xbar - x_star).norm_squared(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use proptest::prelude::*;

    fn two_pairs() -> ClusterNetwork {
        ClusterNetwork::from_edges(&[2, 2], &[(0, 1), (2, 3), (1, 2)]).unwrap()
    }

    fn three_clusters() -> ClusterNetwork {
        ClusterNetwork::from_edges(&[2, 3, 1], &[(0, 1), (2, 3), (3, 4), (1, 2), (4, 5), (0, 5)]).unwrap()
    }

    #[test]
    fn hand_example() {
        let net = two_pairs();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 3.0, 5.0, 7.0]);
        let dec = decompose(&net, &x).unwrap();
        assert_eq!(dec.xbar.as_slice(), &[4.0]);
        assert_eq!(dec.y.as_slice(), &[2.0, 6.0]);
        assert_eq!(dec.e_x.as_slice(), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(dec.e_y.as_slice(), &[-2.0, 2.0]);
        let v = lyapunov(&dec, &DVector::from_element(1, 4.0), 0.0);
        assert_eq!((v.v_ex, v.v_xbar), (2.0, 0.0));
        assert!((v.v_ey - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn consensus_state_has_zero_residuals() {
        let net = three_clusters();
        let c = [0.3, -1.2];
        let x = DMatrix::from_fn(6, 2, |_, j| c[j]);
        let dec = decompose(&net, &x).unwrap();
        assert!(dec.e_x.amax() < 1e-15 && dec.e_y.amax() < 1e-15);
        let v = lyapunov(&dec, &DVector::from_row_slice(&c), 1.0);
        assert!(v.v_ex < 1e-15 && v.v_ey < 1e-15 && v.v_xbar < 1e-30);
    }

    #[test]
    fn squared_residual_norm() {
        let net = two_pairs();
        let x = DMatrix::from_row_slice(4, 2, &[3.0, 4.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
        let dec = decompose(&net, &x).unwrap();
        assert_eq!(lyapunov(&dec, &DVector::zeros(2), 0.0).v_xbar, 25.0);
    }

    #[test]
    fn rejects_wrong_row_count() {
        assert!(decompose(&two_pairs(), &DMatrix::zeros(3, 1)).is_err());
    }

    fn state(values: Vec<f64>) -> DMatrix<f64> {
        DMatrix::from_vec(6, 2, values)
    }

    proptest! {
        #[test]
        fn fast_variable_two_formulas_agree(v in prop::collection::vec(-10.0f64..10.0, 12)) {
            let net = three_clusters();
            let x = state(v);
            let dec = decompose(&net, &x).unwrap();
            prop_assert!(max_abs_diff(&(net.centering() * &x), &dec.e_x) <= 1e-12);
            prop_assert!(max_abs_diff(&dec.reconstruct(&net), &x) <= 1e-12);
        }

        #[test]
        fn block_and_weighted_means_vanish(v in prop::collection::vec(-10.0f64..10.0, 12)) {
            let net = three_clusters();
            let dec = decompose(&net, &state(v)).unwrap();
            prop_assert!(net.cluster_means(&dec.e_x).amax() <= 1e-12);
            let weighted = net.size_matrix() * &dec.e_y;
            prop_assert!(weighted.row_sum().amax() <= 1e-11);
        }

        #[test]
        fn decomposition_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 12)) {
            let net = three_clusters();
            let dec = decompose(&net, &state(v)).unwrap();
            let again = decompose(&net, &dec.reconstruct(&net)).unwrap();
            prop_assert!(max_abs_diff(&again.e_x, &dec.e_x) <= 1e-12);
            prop_assert!(max_abs_diff(&again.y, &dec.y) <= 1e-12);
        }

        #[test]
        fn decomposition_is_linear(v in prop::collection::vec(-10.0f64..10.0, 12), c in -5.0f64..5.0) {
            let net = three_clusters();
            let x = state(v);
            let a = decompose(&net, &x).unwrap();
            let b = decompose(&net, &(&x * c)).unwrap();
            prop_assert!(max_abs_diff(&(&a.e_x * c), &b.e_x) <= 1e-11);
            prop_assert!(max_abs_diff(&(&a.e_y * c), &b.e_y) <= 1e-11);
            prop_assert!((&a.xbar * c - &b.xbar).amax() <= 1e-11);
        }
    }
}
