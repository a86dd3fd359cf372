use nalgebra::{DMatrix, DVector};

use super::{SpvarError, StructuralId, VarxModel};
use crate::stats;

/// Responses of every endogenous variable, row `h` = horizon `h`.
pub type ResponsePath = DMatrix<f64>;

/// `Phi_h = Psi_h impact` for `h = 0..=horizon`, with the MA recursion
/// `Psi_0 = I`, `Psi_h = sum_{j=1}^{min(h,p)} A_j Psi_{h-j}`.
pub fn irf_matrices(coefficients: &[DMatrix<f64>], impact: &DMatrix<f64>, horizon: usize) -> Vec<DMatrix<f64>> {
    let n = impact.nrows();
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    psi.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut acc = DMatrix::zeros(n, n);
        for (j, a) in coefficients.iter().enumerate().take(h) {
            acc += a * &psi[h - 1 - j];
        }
        psi.push(acc);
    }
    psi.into_iter().map(|p| p * impact).collect()
}

/// `np x np` companion matrix of a VAR(p).
pub fn companion_matrix(coefficients: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = coefficients.len();
    let n = coefficients[0].nrows();
    let mut f = DMatrix::zeros(n * p, n * p);
    for (l, a) in coefficients.iter().enumerate() {
        f.view_mut((0, l * n), (n, n)).copy_from(a);
    }
    for i in n..n * p {
        f[(i, i - n)] = 1.0;
    }
    f
}

pub fn spectral_radius(coefficients: &[DMatrix<f64>]) -> f64 {
    companion_matrix(coefficients)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_stable(coefficients: &[DMatrix<f64>]) -> bool {
    spectral_radius(coefficients) < 1.0
}

/// Responses of all variables to a one-SD structural shock `shock`.
/// Instability is logged, not rejected.
pub fn irf(model: &VarxModel, id: &StructuralId, shock: usize, horizon: usize) -> ResponsePath {
    if !is_stable(&model.coefficients) {
        log::warn!(
            "VARX for {} is not stable (spectral radius {:.4}); impulse responses will not decay",
            model.country_id,
            spectral_radius(&model.coefficients)
        );
    }
    let phis = irf_matrices(&model.coefficients, &id.b0, horizon);
    let n = model.n_vars();
    DMatrix::from_fn(horizon + 1, n, |h, i| phis[h][(i, shock)])
}

pub fn cumulative_irf(path: &[f64]) -> Vec<f64> {
    path.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Pointwise cross-country median and interquartile band.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBands {
    pub median: Vec<f64>,
    pub p25: Vec<f64>,
    pub p75: Vec<f64>,
}

impl QuantileBands {
    pub fn cumulative(&self) -> QuantileBands {
        QuantileBands {
            median: cumulative_irf(&self.median),
            p25: cumulative_irf(&self.p25),
            p75: cumulative_irf(&self.p75),
        }
    }
}

/// Type-7 quantiles across paths at each horizon.
pub fn aggregate_irf_quantiles(paths: &[Vec<f64>]) -> Result<QuantileBands, SpvarError> {
    if paths.len() < 2 {
        return Err(SpvarError::TooFewCountries { got: paths.len(), required: 2 });
    }
    let h = paths[0].len();
    if paths.iter().any(|p| p.len() != h) {
        return Err(SpvarError::HorizonMismatch);
    }
    let mut bands = QuantileBands { median: Vec::with_capacity(h), p25: Vec::with_capacity(h), p75: Vec::with_capacity(h) };
    for t in 0..h {
        let col = stats::sorted_copy(&paths.iter().map(|p| p[t]).collect::<Vec<_>>());
        bands.p25.push(stats::quantile_sorted(&col, 0.25, stats::QuantileMethod::Linear));
        bands.median.push(stats::quantile_sorted(&col, 0.5, stats::QuantileMethod::Linear));
        bands.p75.push(stats::quantile_sorted(&col, 0.75, stats::QuantileMethod::Linear));
    }
    Ok(bands)
}

/// Weighted mean path, weights normalised to sum to one.
pub fn shock_weighted_aggregate(paths: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, SpvarError> {
    if paths.is_empty() || paths.len() != weights.len() {
        return Err(SpvarError::HorizonMismatch);
    }
    let h = paths[0].len();
    if paths.iter().any(|p| p.len() != h) {
        return Err(SpvarError::HorizonMismatch);
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(SpvarError::NegativeWeight(*w));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(SpvarError::ZeroWeights);
    }
    let mut out = DVector::zeros(h);
    for (p, w) in paths.iter().zip(weights) {
        out += DVector::from_column_slice(p) * (w / total);
    }
    Ok(out.iter().copied().collect())
}
