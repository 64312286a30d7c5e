//! Weighted 2D Procrustes rotation between SRVF trees.

use nalgebra::Matrix2;

use super::Permutation;
use crate::error::{Error, Result};
use crate::srvf::{trapezoid_weights, Srvf, SrvfTree, Weights};

const DEGENERATE_SV: f64 = 1e-12;

/// Result of a rotation fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFit {
    /// Proper rotation to apply to `b`'s samples.
    pub rotation: Matrix2<f64>,
    /// Set when the cross-covariance was numerically zero; `rotation` is then
    /// the identity.
    pub degenerate: bool,
}

impl RotationFit {
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

pub fn rotation_angle(rot: &Matrix2<f64>) -> f64 {
    rot[(1, 0)].atan2(rot[(0, 0)])
}

fn accumulate(h: &mut Matrix2<f64>, qa: &Srvf, qb: &Srvf, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for ((w, a), b) in trapezoid_weights(qa.len()).iter().zip(qa.samples()).zip(qb.samples()) {
        *h += (b * a.transpose()) * (lambda * w);
    }
}

/// `Σ w q_b q_aᵀ` for a single pair of SRVFs of equal length.
pub(crate) fn pair_covariance(qa: &Srvf, qb: &Srvf) -> Matrix2<f64> {
    let mut h = Matrix2::zeros();
    accumulate(&mut h, qa, qb, 1.0);
    h
}

/// Weighted cross-covariance `Σ w q_b q_aᵀ` over the main and the assigned
/// laterals.
pub fn cross_covariance(a: &SrvfTree, b: &SrvfTree, assignment: &Permutation, w: &Weights) -> Result<Matrix2<f64>> {
    if a.laterals.len() != b.laterals.len() || assignment.len() != a.laterals.len() {
        return Err(Error::Mismatch(format!(
            "rotation fit over {} / {} laterals with an assignment of {}",
            a.laterals.len(),
            b.laterals.len(),
            assignment.len()
        )));
    }
    if a.q0.len() != b.q0.len() {
        return Err(Error::Mismatch("main sample counts differ".into()));
    }
    let mut h = Matrix2::zeros();
    accumulate(&mut h, &a.q0, &b.q0, w.lambda_m);
    for (k, &j) in assignment.iter().enumerate() {
        let (la, lb) = (&a.laterals[k].q, &b.laterals[j].q);
        if la.len() != lb.len() {
            return Err(Error::Mismatch("lateral sample counts differ".into()));
        }
        accumulate(&mut h, la, lb, w.lambda_s);
    }
    Ok(h)
}

/// Rotation `O` minimizing `λ_m |q_0^a - O q_0^b|² + λ_s Σ_k |q_k^a - O q_π(k)^b|²`.
///
/// With `H = Σ w q_b q_aᵀ = U S Vᵀ`, the maximizer of `tr(O H)` over SO(2) is
/// `V diag(1, det(V Uᵀ)) Uᵀ`.
pub fn optimal_rotation(a: &SrvfTree, b: &SrvfTree, assignment: &Permutation, w: &Weights) -> Result<RotationFit> {
    let h = cross_covariance(a, b, assignment, w)?;
    Ok(rotation_from_covariance(&h))
}

pub(crate) fn rotation_from_covariance(h: &Matrix2<f64>) -> RotationFit {
    let svd = h.svd(true, true);
    if svd.singular_values.iter().all(|s| *s < DEGENERATE_SV) {
        log::warn!("degenerate cross-covariance in rotation fit; using identity");
        return RotationFit {
            rotation: Matrix2::identity(),
            degenerate: true,
        };
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix2::new(1.0, 0.0, 0.0, d) * u.transpose();
    RotationFit {
        rotation,
        degenerate: false,
    }
}
