use nalgebra::DMatrix;

use super::SpvarError;
use crate::linalg;

/// Recursive short-run identification: `b0` is lower triangular with a
/// positive diagonal and `b0 b0' = sigma`. Variable order is the order of
/// the VAR's endogenous vector (capital-flow volatility first).
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralId {
    pub b0: DMatrix<f64>,
    pub ordering: Vec<String>,
}

impl StructuralId {
    /// Structural shocks `b0^{-1} u_t` for residual rows `u_t`.
    pub fn structural_shocks(&self, residuals: &DMatrix<f64>) -> DMatrix<f64> {
        let inv = linalg::lower_inverse(&self.b0);
        (inv * residuals.transpose()).transpose()
    }
}

pub fn cholesky_identify(sigma: &DMatrix<f64>, ordering: &[&str]) -> Result<StructuralId, SpvarError> {
    let b0 = linalg::cholesky_lower(sigma).map_err(|_| SpvarError::NotPositiveDefinite)?;
    Ok(StructuralId { b0, ordering: ordering.iter().map(|s| s.to_string()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_and_hand_case() {
        let id = cholesky_identify(&DMatrix::identity(2, 2), &["VolCF", "VolFX"]).unwrap();
        assert_eq!(id.b0, DMatrix::identity(2, 2));
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let id = cholesky_identify(&s, &["VolCF", "VolFX"]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert_abs_diff_eq!((&id.b0 - expected).amax(), 0.0, epsilon = 1e-15);
        assert!((&id.b0 * id.b0.transpose() - s).amax() < 1e-10);
    }

    #[test]
    fn singular_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(cholesky_identify(&s, &["a", "b"]).unwrap_err(), SpvarError::NotPositiveDefinite);
    }
}
