//! Householder-QR least squares. Normal equations are never formed.

use nalgebra::{DMatrix, DVector};

use super::EstimationError;

/// Relative size of `|R_jj|` against the column norm below which a column is
/// treated as lying in the span of the preceding columns.
const RANK_TOL: f64 = 1e-9;

pub(crate) struct LeastSquares {
    /// Coefficients, one column per right-hand side.
    pub coef: DMatrix<f64>,
    /// Upper-triangular factor, `k × k`.
    pub r: DMatrix<f64>,
}

impl LeastSquares {
    /// Solves `min ‖X·B − Y‖` column by column.
    pub fn solve(x: &DMatrix<f64>, y: &DMatrix<f64>, names: &[String]) -> Result<Self, EstimationError> {
        let (n, k) = x.shape();
        if n <= k {
            return Err(EstimationError::TooFewObservations { n, k });
        }
        let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
        let qr = x.clone().qr();
        let r = qr.r();
        let collinear: Vec<String> = (0..k)
            .filter(|&j| {
                let scale = norms[j];
                scale == 0.0 || r[(j, j)].abs() <= RANK_TOL * scale
            })
            .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
            .collect();
        if !collinear.is_empty() {
            return Err(EstimationError::RankDeficient { columns: collinear });
        }
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let top = qty.rows(0, k).into_owned();
        let coef = r
            .solve_upper_triangular(&top)
            .ok_or_else(|| EstimationError::RankDeficient { columns: names.to_vec() })?;
        Ok(Self { coef, r })
    }

    /// `(X'X)⁻¹ = R⁻¹·R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.r.nrows();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("R verified nonsingular");
        let out = &r_inv * r_inv.transpose();
        symmetrize(out)
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.coef.column(j).into_owned()
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Inverse used for Wald statistics; falls back to a pseudo-inverse when the
/// covariance block is singular (fewer clusters than restrictions).
pub(crate) fn wald_inverse(v: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = v.clone().cholesky() {
        return chol.inverse();
    }
    v.clone()
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(v.nrows(), v.ncols()))
}
