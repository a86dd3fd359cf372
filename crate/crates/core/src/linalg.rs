//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("least squares needs more rows ({rows}) than columns ({cols})")]
    Underdetermined { rows: usize, cols: usize },
}

/// Relative pivot size below which a scaled QR column counts as collinear.
pub const RANK_TOL: f64 = 1e-10;

/// Ordinary least-squares solution with the pieces downstream code reuses.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    /// `(X'X)^{-1}`
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
}

impl LeastSquares {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Least squares by Householder QR on column-equilibrated `x`.
///
/// Exact or near-exact collinearity is reported as
/// [`LinalgError::RankDeficient`] instead of producing huge coefficients.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares, LinalgError> {
    let (n, k) = x.shape();
    if n < k || k == 0 {
        return Err(LinalgError::Underdetermined { rows: n, cols: k });
    }
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = xs.qr();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)].abs() < RANK_TOL {
            return Err(LinalgError::RankDeficient { column: j });
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, k).into_owned();
    let rinv = upper_inverse(&r);
    let mut beta = &rinv * qty;
    let mut xtx_inv = &rinv * rinv.transpose();
    for j in 0..k {
        beta[j] /= scale[j];
        for i in 0..k {
            xtx_inv[(i, j)] /= scale[i] * scale[j];
        }
    }
    let residuals = y - x * &beta;
    Ok(LeastSquares { beta, xtx_inv, residuals })
}

fn upper_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let k = r.nrows();
    let mut inv = DMatrix::zeros(k, k);
    for col in 0..k {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for m in (i + 1)..=col {
                s -= r[(i, m)] * inv[(m, col)];
            }
            inv[(i, col)] = s / r[(i, i)];
        }
    }
    inv
}

/// Lower-triangular Cholesky factor `L` with positive diagonal, `L L' = a`.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky of non-square matrix");
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-13 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for m in 0..j {
            d -= l[(j, m)] * l[(j, m)];
        }
        if !(d > tol) {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for m in 0..j {
                s -= l[(i, m)] * l[(j, m)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    upper_inverse(&l.transpose()).transpose()
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let l = cholesky_lower(a)?;
    let li = lower_inverse(&l);
    Ok(li.transpose() * li)
}

/// Largest elementwise deviation from symmetry.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign of `R`'s diagonal folded into `Q`).
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Max-abs norm of a matrix.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn ols_matches_normal_equations() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 3.1, 4.9, 7.2, 8.8]);
        let fit = least_squares(&x, &y).unwrap();
        let xtx = x.transpose() * &x;
        let direct = xtx.clone().try_inverse().unwrap() * x.transpose() * &y;
        assert_abs_diff_eq!((fit.beta - direct).amax(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((fit.xtx_inv * xtx - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_columns_rejected() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 4.0, 1.0, 3.0, 6.0, 1.0, 5.0, 10.0, 1.0, 7.0, 14.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(least_squares(&x, &y).unwrap_err(), LinalgError::RankDeficient { column: 2 });
    }

    #[test]
    fn cholesky_and_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky_lower(&a).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
        let inv = spd_inverse(&a).unwrap();
        assert_abs_diff_eq!((inv * a - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-14);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(cholesky_lower(&singular).unwrap_err(), LinalgError::NotPositiveDefinite);
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = haar_orthogonal(3, &mut rng);
        assert_abs_diff_eq!((q.transpose() * &q - DMatrix::identity(3, 3)).amax(), 0.0, epsilon = 1e-12);
    }
}
