//! Panel specification tests: Levin-Lin-Chu unit root and Dumitrescu-Hurlin
//! Granger non-causality.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("panel is unbalanced: series lengths differ")]
    UnbalancedPanel,
    #[error("series too short: {len} periods, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("degenerate regression for member {0} (zero-variance regressor or residual)")]
    Degenerate(usize),
    #[error("empty panel")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Lag augmentation (panel tests).
    pub lags: usize,
    /// Degrees of freedom of the reference distribution (Wald tests; 0 otherwise).
    pub df: usize,
    pub n_countries: usize,
    pub n_periods: usize,
    pub reject_5pct: bool,
}

impl TestResult {
    pub fn new(statistic: f64, p_value: f64, lags: usize, df: usize, n_countries: usize, n_periods: usize) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult { statistic, p_value, lags, df, n_countries, n_periods, reject_5pct: p_value < 0.05 }
    }
}

fn balanced_len(series: &[&[f64]]) -> Result<usize, DiagError> {
    let t = series.first().ok_or(DiagError::Empty)?.len();
    if series.iter().any(|s| s.len() != t) {
        return Err(DiagError::UnbalancedPanel);
    }
    Ok(t)
}

/// Mean and standard-deviation adjustments for the intercept-only model,
/// indexed by the effective sample size.
const LLC_ADJ: [(f64, f64, f64); 12] = [
    (25.0, -0.554, 0.919),
    (30.0, -0.546, 0.889),
    (35.0, -0.541, 0.867),
    (40.0, -0.537, 0.850),
    (45.0, -0.533, 0.837),
    (50.0, -0.531, 0.826),
    (60.0, -0.527, 0.810),
    (70.0, -0.524, 0.798),
    (80.0, -0.521, 0.789),
    (90.0, -0.520, 0.782),
    (100.0, -0.518, 0.776),
    (250.0, -0.509, 0.742),
];
const LLC_ADJ_INF: (f64, f64) = (-0.500, 0.707);

/// Linear interpolation in the effective sample size inside the table;
/// beyond its last row, linear in `1/T` towards the asymptotic values.
pub fn llc_adjustment(t_eff: f64) -> (f64, f64) {
    let first = LLC_ADJ[0];
    if t_eff <= first.0 {
        return (first.1, first.2);
    }
    for w in LLC_ADJ.windows(2) {
        let (t0, m0, s0) = w[0];
        let (t1, m1, s1) = w[1];
        if t_eff <= t1 {
            let a = (t_eff - t0) / (t1 - t0);
            return (m0 + a * (m1 - m0), s0 + a * (s1 - s0));
        }
    }
    let (tl, ml, sl) = LLC_ADJ[LLC_ADJ.len() - 1];
    let a = tl / t_eff;
    (LLC_ADJ_INF.0 + a * (ml - LLC_ADJ_INF.0), LLC_ADJ_INF.1 + a * (sl - LLC_ADJ_INF.1))
}

pub const LLC_MIN_PERIODS: usize = 25;

fn residualize(z: &DMatrix<f64>, v: &DVector<f64>, i: usize) -> Result<DVector<f64>, DiagError> {
    linalg::least_squares(z, v).map(|f| f.residuals).map_err(|_| DiagError::Degenerate(i))
}

/// LLC statistic for each augmentation order `0..=max_lag`.
pub fn llc_unit_root(series: &[&[f64]], max_lag: usize) -> Result<Vec<TestResult>, DiagError> {
    (0..=max_lag).map(|p| llc_unit_root_at(series, p)).collect()
}

/// LLC test with intercept, `lags` lagged differences, and a Bartlett-kernel
/// long-run variance with bandwidth `3.21 T^{1/3}`. H0: every member has a
/// unit root; small (negative) statistics reject.
pub fn llc_unit_root_at(series: &[&[f64]], lags: usize) -> Result<TestResult, DiagError> {
    let t = balanced_len(series)?;
    let required = LLC_MIN_PERIODS.max(lags + 10);
    if t < required {
        return Err(DiagError::TooShort { len: t, required });
    }
    let p = lags;
    let t_eff = t - p - 1;
    let kbar = (3.21 * (t as f64).powf(1.0 / 3.0)).floor() as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut ratios = Vec::with_capacity(series.len());
    let mut stacked = Vec::with_capacity(series.len());
    for (i, y) in series.iter().enumerate() {
        let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        // Rows correspond to `y_t`, t = p+1 .. T-1; `dy[t-1] = y_t - y_{t-1}`.
        let z = DMatrix::from_fn(t_eff, 1 + p, |r, c| if c == 0 { 1.0 } else { dy[r + p - c] });
        let dep = DVector::from_fn(t_eff, |r, _| dy[r + p]);
        let lag = DVector::from_fn(t_eff, |r, _| y[r + p]);
        let e = residualize(&z, &dep, i)?;
        let v = residualize(&z, &lag, i)?;
        let vv = v.norm_squared();
        if vv <= 1e-12 * lag.norm_squared().max(f64::MIN_POSITIVE) {
            return Err(DiagError::Degenerate(i));
        }
        let delta_i = v.dot(&e) / vv;
        let dof = t_eff as f64 - p as f64 - 1.0;
        let sigma_e = ((&e - &v * delta_i).norm_squared() / dof).sqrt();
        if !(sigma_e > 0.0) {
            return Err(DiagError::Degenerate(i));
        }
        let et = e / sigma_e;
        let vt = v / sigma_e;
        num += vt.dot(&et);
        den += vt.norm_squared();

        let m = stats::mean(&dy);
        let d: Vec<f64> = dy.iter().map(|x| x - m).collect();
        let nt = d.len() as f64;
        let gamma = |l: usize| d[l..].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / nt;
        let mut lrv = gamma(0);
        for l in 1..=kbar.min(d.len() - 1) {
            lrv += 2.0 * (1.0 - l as f64 / (kbar as f64 + 1.0)) * gamma(l);
        }
        ratios.push(lrv.max(0.0).sqrt() / sigma_e);
        stacked.push((et, vt));
    }
    let n = series.len() as f64;
    let delta = num / den;
    let ssr: f64 = stacked.iter().map(|(e, v)| (e - v * delta).norm_squared()).sum();
    let s2 = ssr / (n * t_eff as f64);
    let sd_delta = (s2 / den).sqrt();
    let t_delta = delta / sd_delta;
    let s_n = stats::mean(&ratios);
    let (mu, sigma) = llc_adjustment(t_eff as f64);
    let stat = (t_delta - n * t_eff as f64 * s_n * sd_delta / s2 * mu) / sigma;
    Ok(TestResult::new(stat, stats::normal_cdf(stat), lags, 0, series.len(), t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub test: TestResult,
    /// Per-member Wald statistics, input order.
    pub wald: Vec<f64>,
    pub w_bar: f64,
}

/// Average-Wald statistic standardized as `sqrt(N / 2K) (W_bar - K)`.
pub fn dh_z_bar(wald: &[f64], lags: usize) -> (f64, f64) {
    let w_bar = stats::mean(wald);
    let k = lags as f64;
    ((wald.len() as f64 / (2.0 * k)).sqrt() * (w_bar - k), w_bar)
}

/// Dumitrescu-Hurlin test of H0 "x does not Granger-cause y in any member".
/// Per member, `y_t` is regressed on an intercept, `K` own lags and `K` lags
/// of `x`; the Wald statistics for the `x` block are averaged.
pub fn dh_granger(x: &[&[f64]], y: &[&[f64]], lags: usize) -> Result<GrangerResult, DiagError> {
    let t = balanced_len(x)?;
    if balanced_len(y)? != t || x.len() != y.len() {
        return Err(DiagError::UnbalancedPanel);
    }
    let k = lags.max(1);
    if t <= 5 + 2 * k {
        return Err(DiagError::TooShort { len: t, required: 6 + 2 * k });
    }
    let rows = t - k;
    let mut wald = Vec::with_capacity(x.len());
    for (i, (xi, yi)) in x.iter().zip(y).enumerate() {
        let design = DMatrix::from_fn(rows, 1 + 2 * k, |r, c| {
            let s = r + k;
            match c {
                0 => 1.0,
                c if c <= k => yi[s - c],
                c => xi[s - (c - k)],
            }
        });
        let dep = DVector::from_fn(rows, |r, _| yi[r + k]);
        let fit = linalg::least_squares(&design, &dep).map_err(|_| DiagError::Degenerate(i))?;
        let s2 = fit.rss() / (rows - 1 - 2 * k) as f64;
        let g = fit.beta.rows(1 + k, k).into_owned();
        let w = if s2 > 0.0 {
            let v = fit.xtx_inv.view((1 + k, 1 + k), (k, k)) * s2;
            match linalg::spd_inverse(&v.into_owned()) {
                Ok(vi) => (g.transpose() * vi * &g)[(0, 0)],
                Err(_) => f64::INFINITY,
            }
        } else {
            f64::INFINITY
        };
        wald.push(w);
    }
    let (z, w_bar) = dh_z_bar(&wald, k);
    let p = if z.is_finite() { stats::normal_two_sided_p(z) } else { 0.0 };
    Ok(GrangerResult { test: TestResult::new(z, p, k, 0, x.len(), t), wald, w_bar })
}
