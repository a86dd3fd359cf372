use nalgebra::{DMatrix, DVector};

use super::SpvarError;
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct VarxOptions {
    pub lags: usize,
    /// Remove each endogenous series' sample mean before estimation.
    pub demean: bool,
}

impl Default for VarxOptions {
    fn default() -> Self {
        VarxOptions { lags: super::DEFAULT_LAGS, demean: true }
    }
}

/// Equation-by-equation least-squares VARX fit.
///
/// Regressors, in order: intercept, `y_{t-1}, ..., y_{t-p}`, contemporaneous
/// exogenous variables.
#[derive(Debug, Clone, PartialEq)]
pub struct VarxModel {
    pub country_id: String,
    pub lags: usize,
    /// `A_1 .. A_p`, each `n x n`; `A_l[(i, j)]` is the effect of `y_j` at lag `l` on `y_i`.
    pub coefficients: Vec<DMatrix<f64>>,
    /// `n x m` coefficients on the exogenous block.
    pub exog_coefficients: DMatrix<f64>,
    pub intercept: DVector<f64>,
    /// Residual covariance with a degrees-of-freedom correction.
    pub sigma: DMatrix<f64>,
    /// `T_eff x n`, row `r` is the residual of observation `lags + r`.
    pub residuals: DMatrix<f64>,
    /// Stacked coefficients, `k x n` (one column per equation).
    pub beta: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    /// Sample means removed before estimation (zeros when not demeaned).
    pub means: DVector<f64>,
    /// First and one-past-last observation index used as a dependent value.
    pub sample_span: (usize, usize),
}

impl VarxModel {
    pub fn n_vars(&self) -> usize {
        self.intercept.len()
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.beta.nrows()
    }

    /// Rebuild the lag / exogenous blocks from a stacked `k x n` matrix.
    pub(crate) fn unstack(beta: &DMatrix<f64>, n: usize, lags: usize) -> (DVector<f64>, Vec<DMatrix<f64>>, DMatrix<f64>) {
        let k = beta.nrows();
        let m = k - 1 - n * lags;
        let intercept = beta.row(0).transpose();
        let coefficients = (0..lags)
            .map(|l| DMatrix::from_fn(n, n, |i, j| beta[(1 + l * n + j, i)]))
            .collect();
        let exog = DMatrix::from_fn(n, m, |i, j| beta[(1 + n * lags + j, i)]);
        (intercept, coefficients, exog)
    }
}

/// Fit a VARX(p) to `endog` (`T x n`) with optional exogenous `exog` (`T x m`).
pub fn estimate_varx(
    country_id: &str,
    endog: &DMatrix<f64>,
    exog: Option<&DMatrix<f64>>,
    opts: VarxOptions,
) -> Result<VarxModel, SpvarError> {
    let (t, n) = endog.shape();
    let p = opts.lags;
    if t <= 10 * p || t <= p + 1 {
        return Err(SpvarError::SeriesTooShort { len: t, required: 10 * p });
    }
    let m = match exog {
        Some(x) if x.nrows() != t => return Err(SpvarError::ExogLength { got: x.nrows(), expected: t }),
        Some(x) => x.ncols(),
        None => 0,
    };
    let means = if opts.demean {
        DVector::from_fn(n, |j, _| endog.column(j).mean())
    } else {
        DVector::zeros(n)
    };
    let y = DMatrix::from_fn(t, n, |i, j| endog[(i, j)] - means[j]);
    let rows = t - p;
    let k = 1 + n * p + m;
    let x = DMatrix::from_fn(rows, k, |r, c| {
        let tt = r + p;
        if c == 0 {
            1.0
        } else if c <= n * p {
            let l = (c - 1) / n + 1;
            let j = (c - 1) % n;
            y[(tt - l, j)]
        } else {
            exog.expect("m > 0")[(tt, c - 1 - n * p)]
        }
    });
    let mut beta = DMatrix::zeros(k, n);
    let mut residuals = DMatrix::zeros(rows, n);
    let mut xtx_inv = DMatrix::zeros(k, k);
    for eq in 0..n {
        let yi = DVector::from_fn(rows, |r, _| y[(r + p, eq)]);
        let fit = linalg::least_squares(&x, &yi).map_err(SpvarError::SingularDesign)?;
        beta.set_column(eq, &fit.beta);
        residuals.set_column(eq, &fit.residuals);
        xtx_inv = fit.xtx_inv;
    }
    let dof = (rows - k) as f64;
    let mut sigma = residuals.transpose() * &residuals / dof;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let (intercept, coefficients, exog_coefficients) = VarxModel::unstack(&beta, n, p);
    Ok(VarxModel {
        country_id: country_id.to_string(),
        lags: p,
        coefficients,
        exog_coefficients,
        intercept,
        sigma,
        residuals,
        beta,
        xtx_inv,
        means,
        sample_span: (p, t),
    })
}
