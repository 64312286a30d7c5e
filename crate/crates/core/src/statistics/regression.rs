//! Linear regression from biological parameters to mode coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::atlas::{Atlas, Synthesis};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// `b = M [p; 1]`, with `b` the retained mode coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// Row-major, `retained × (l + 1)`; the last column is the affine term.
    pub m: Vec<Vec<f64>>,
    pub param_names: Vec<String>,
    /// Rank of the augmented parameter matrix.
    pub rank: usize,
    /// Set when the parameter matrix is rank deficient; `m` is then the
    /// minimum-norm least-squares solution.
    pub degenerate: bool,
    /// Frobenius norm of `B - M P` on the training set.
    pub residual: f64,
    pub atlas: Atlas,
}

/// Moore-Penrose pseudoinverse by SVD with relative cutoff [`PINV_RTOL`].
/// Returns the inverse and the numerical rank.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * smax;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            out += (v_t.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    (out, rank)
}

/// Parameter matrix `P` with columns `[p_i; 1]`.
pub fn design_matrix(params: &[Vec<f64>]) -> DMatrix<f64> {
    let l = params.first().map_or(0, Vec::len);
    DMatrix::from_fn(l + 1, params.len(), |r, c| if r < l { params[c][r] } else { 1.0 })
}

/// Coefficient matrix `B` with columns `b_i` restricted to retained modes.
pub fn coefficient_matrix(atlas: &Atlas) -> DMatrix<f64> {
    DMatrix::from_fn(atlas.retained, atlas.training_coeffs.len(), |r, c| atlas.training_coeffs[c][r])
}

/// Solves `M = B P⁺`. `params[i]` belongs to training sample `i` of the
/// atlas.
pub fn fit_regression(atlas: &Atlas, params: &[Vec<f64>], names: Vec<String>) -> Result<RegressionModel> {
    let m = atlas.training_coeffs.len();
    if params.len() != m {
        return Err(Error::Mismatch(format!("{} parameter rows for {m} training samples", params.len())));
    }
    let l = names.len();
    if params.iter().any(|p| p.len() != l) {
        return Err(Error::Mismatch(format!("every parameter row needs {l} values")));
    }
    if params.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("parameters", "non-finite value"));
    }
    if l + 1 > m {
        return Err(Error::invalid(
            "regression",
            format!("{l} parameters plus an intercept need at least {} samples, got {m}", l + 1),
        ));
    }
    let p = design_matrix(params);
    let b = coefficient_matrix(atlas);
    let (p_pinv, rank) = pseudo_inverse(&p);
    let degenerate = rank < l + 1;
    if degenerate {
        log::warn!("parameter matrix has rank {rank} < {}; using the minimum-norm solution", l + 1);
    }
    let mm = &b * p_pinv;
    let residual = (&b - &mm * &p).norm();
    Ok(RegressionModel {
        m: (0..mm.nrows()).map(|r| mm.row(r).iter().cloned().collect()).collect(),
        param_names: names,
        rank,
        degenerate,
        residual,
        atlas: atlas.clone(),
    })
}

impl RegressionModel {
    pub fn matrix(&self) -> DMatrix<f64> {
        let cols = self.param_names.len() + 1;
        DMatrix::from_fn(self.m.len(), cols, |r, c| self.m[r][c])
    }

    /// Mode coefficients for parameter values `p`.
    pub fn coefficients(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.param_names.len() {
            return Err(Error::Mismatch(format!(
                "expected {} parameters ({}), got {}",
                self.param_names.len(),
                self.param_names.join(", "),
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("parameters", "non-finite value"));
        }
        Ok(self
            .m
            .iter()
            .map(|row| row.iter().zip(p.iter().chain([&1.0])).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let model: RegressionModel = serde_json::from_str(text).map_err(|source| Error::Parse {
            origin: origin.to_string(),
            source,
        })?;
        let cols = model.param_names.len() + 1;
        if model.m.len() != model.atlas.retained || model.m.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("regression model", "matrix shape does not match atlas and parameters"));
        }
        Ok(model)
    }
}

/// Synthesizes the root predicted for parameter values `p`.
pub fn predict(model: &RegressionModel, p: &[f64], id: &str) -> Result<Synthesis> {
    let b = model.coefficients(p)?;
    model.atlas.synthesize(&b, id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_full_rank_is_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let (p, rank) = pseudo_inverse(&a);
        assert_eq!(rank, 2);
        assert!((p * a - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let (p, rank) = pseudo_inverse(&a);
        assert_eq!(rank, 1);
        // Penrose conditions
        assert!((&a * &p * &a - &a).norm() < 1e-12);
        assert!((&p * &a * &p - &p).norm() < 1e-12);
    }

    #[test]
    fn design_matrix_layout() {
        let p = design_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(p.shape(), (3, 3));
        assert_eq!(p[(0, 1)], 3.0);
        assert_eq!(p[(2, 2)], 1.0);
    }
}
