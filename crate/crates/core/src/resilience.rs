//! Moderated total effects, thresholds with delta-method standard errors,
//! the first-principal-component composite factor, resilience scores and
//! case-study calculators.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fgls::{FglsError, FglsFit};
use crate::linalg;
use crate::panel::{Frequency, PanelTable};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResilienceError {
    #[error("interaction coefficient is zero; no finite threshold")]
    ZeroGamma2,
    #[error("coefficient covariance is not positive semi-definite (min eigenvalue {0})")]
    NegativeVariance(f64),
    #[error("covariance matrix of the factors is zero")]
    DegenerateCovariance,
    #[error("need more than {required} observations, got {got}")]
    TooFewObservations { got: usize, required: usize },
    #[error("factor {0} is missing")]
    MissingFactor(String),
    #[error("composite factor is not positive ({0}); shares are undefined")]
    NonPositiveComposite(f64),
    #[error("mean CF volatility is zero in a period")]
    ZeroCfVol,
    #[error("no observations in period {0} .. {1}")]
    EmptyPeriod(NaiveDate, NaiveDate),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Fit(#[from] FglsError),
}

pub type Result<T> = std::result::Result<T, ResilienceError>;

/// Name of the composite moderating factor in panels.
pub const PC1MF: &str = "PC1MF";

/// Two-sided 90% normal critical value.
pub const Z_90: f64 = 1.6448536269514722;

/// `gamma1 + gamma2 * mf`.
pub fn total_effect(gamma1: f64, gamma2: f64, mf: f64) -> f64 {
    gamma1 + gamma2 * mf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdDirection {
    /// A mitigating factor must reach at least the threshold.
    GreaterThan,
    /// An aggravating factor must stay at or below the threshold.
    LessThan,
}

impl ThresholdDirection {
    pub fn attained(self, value: f64, threshold: f64) -> bool {
        match self {
            ThresholdDirection::GreaterThan => value >= threshold,
            ThresholdDirection::LessThan => value <= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ThresholdDirection::GreaterThan => ">",
            ThresholdDirection::LessThan => "<",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdQuery {
    pub gamma1: f64,
    pub gamma2: f64,
    /// `2 x 2` covariance of `(gamma1, gamma2)`.
    pub v_gamma: DMatrix<f64>,
    pub theta: f64,
}

impl ThresholdQuery {
    pub fn new(gamma1: f64, gamma2: f64, v_gamma: DMatrix<f64>, theta: f64) -> Self {
        ThresholdQuery { gamma1, gamma2, v_gamma, theta }
    }

    /// Coefficients and covariance block taken from a fitted regression.
    pub fn from_fit(fit: &FglsFit, shock: &str, interaction: &str, theta: f64) -> Result<Self> {
        Ok(ThresholdQuery {
            gamma1: fit.coef(shock)?,
            gamma2: fit.coef(interaction)?,
            v_gamma: fit.covariance_of(&[shock, interaction])?,
            theta,
        })
    }
}

fn check_psd(v: &DMatrix<f64>) -> Result<()> {
    if v.shape() != (2, 2) {
        return Err(ResilienceError::DimensionMismatch(format!("covariance is {:?}, expected 2x2", v.shape())));
    }
    let min = linalg::min_eigenvalue(v);
    let scale = linalg::max_abs(v).max(f64::MIN_POSITIVE);
    if min < -1e-12 * scale || linalg::asymmetry(v) > 1e-10 * scale {
        return Err(ResilienceError::NegativeVariance(min));
    }
    Ok(())
}

/// Factor level at which the total effect equals `theta`:
/// `(theta - gamma1) / gamma2`.
pub fn threshold(q: &ThresholdQuery) -> Result<(f64, ThresholdDirection)> {
    if q.gamma2 == 0.0 {
        return Err(ResilienceError::ZeroGamma2);
    }
    let dir = if q.gamma2 < 0.0 { ThresholdDirection::GreaterThan } else { ThresholdDirection::LessThan };
    Ok(((q.theta - q.gamma1) / q.gamma2, dir))
}

/// Delta-method SE with gradient `(-1/gamma2, -(theta - gamma1)/gamma2^2)`.
pub fn threshold_se(q: &ThresholdQuery) -> Result<f64> {
    if q.gamma2 == 0.0 {
        return Err(ResilienceError::ZeroGamma2);
    }
    check_psd(&q.v_gamma)?;
    let g = DVector::from_vec(vec![-1.0 / q.gamma2, -(q.theta - q.gamma1) / (q.gamma2 * q.gamma2)]);
    Ok((g.transpose() * &q.v_gamma * &g)[(0, 0)].max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub factor: String,
    pub theta: f64,
    pub threshold: f64,
    pub se: f64,
    pub direction: ThresholdDirection,
}

pub fn threshold_row(factor: &str, q: &ThresholdQuery) -> Result<ThresholdRow> {
    let (t, direction) = threshold(q)?;
    Ok(ThresholdRow { factor: factor.into(), theta: q.theta, threshold: t, se: threshold_se(q)?, direction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaLoadings {
    pub factors: Vec<String>,
    /// Unit-norm leading eigenvector, signed so the loadings sum to a positive number.
    pub loadings: Vec<f64>,
    /// Variance along the first component.
    pub eigenvalue: f64,
    pub explained_share: f64,
}

impl PcaLoadings {
    pub fn weight(&self, factor: &str) -> Option<f64> {
        self.factors.iter().position(|f| f == factor).map(|i| self.loadings[i])
    }
}

/// Sample covariance (divisor `n - 1`) of the columns of `x`.
pub fn column_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).mean()).collect();
    let c = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - means[j]);
    let s = c.transpose() * &c / (n as f64 - 1.0);
    (&s + s.transpose()) * 0.5
}

/// First principal component of the columns of `x` (observations in rows).
pub fn pca_first_component(x: &DMatrix<f64>, factors: &[&str]) -> Result<PcaLoadings> {
    let (n, m) = x.shape();
    if factors.len() != m {
        return Err(ResilienceError::DimensionMismatch(format!("{m} columns, {} factor names", factors.len())));
    }
    if n <= m {
        return Err(ResilienceError::TooFewObservations { got: n, required: m });
    }
    let cov = column_covariance(x);
    if linalg::max_abs(&cov) == 0.0 {
        return Err(ResilienceError::DegenerateCovariance);
    }
    let eig = cov.clone().symmetric_eigen();
    let (k, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("m > 0");
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    let trace = cov.trace();
    Ok(PcaLoadings {
        factors: factors.iter().map(|s| s.to_string()).collect(),
        loadings: v,
        eigenvalue: lambda,
        explained_share: if trace > 0.0 { lambda / trace } else { 0.0 },
    })
}

/// Observations x factors matrix of a balanced panel, rows in key order.
pub fn factor_matrix(panel: &PanelTable, factors: &[&str]) -> Result<DMatrix<f64>> {
    let cols: Vec<Vec<f64>> = factors
        .iter()
        .map(|f| {
            let c = panel.pooled(f);
            if c.is_empty() {
                Err(ResilienceError::MissingFactor(f.to_string()))
            } else {
                Ok(c)
            }
        })
        .collect::<Result<_>>()?;
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(ResilienceError::DimensionMismatch("factors have different observation counts".into()));
    }
    Ok(DMatrix::from_fn(n, factors.len(), |i, j| cols[j][i]))
}

/// `sum_m w_m MF_m` per country-period, as a single-variable panel.
/// No re-centering.
pub fn pc1mf(panel: &PanelTable, pca: &PcaLoadings) -> Result<PanelTable> {
    for f in &pca.factors {
        if !panel.has_variable(f) {
            return Err(ResilienceError::MissingFactor(f.clone()));
        }
    }
    let mut rows = Vec::new();
    for c in panel.countries() {
        for d in panel.dates() {
            let mut acc = 0.0;
            let mut complete = true;
            for (f, w) in pca.factors.iter().zip(&pca.loadings) {
                match panel.get(&c, d, f) {
                    Some(v) => acc += w * v,
                    None => complete = false,
                }
            }
            if complete {
                rows.push((c.clone(), d, PC1MF.to_string(), acc));
            }
        }
    }
    PanelTable::from_observations(panel.frequency(), rows).map_err(|e| ResilienceError::DimensionMismatch(e.to_string()))
}

/// `gamma1 + gamma2 * median`.
pub fn resilience(gamma1: f64, gamma2: f64, pc1mf_median: f64) -> f64 {
    total_effect(gamma1, gamma2, pc1mf_median)
}

/// `score -/+ z * sqrt([1, m] V [1, m]')` with `z` the two-sided normal
/// critical value for `level`.
pub fn resilience_ci(score: f64, v_gamma: &DMatrix<f64>, pc1mf_median: f64, level: f64) -> Result<(f64, f64)> {
    check_psd(v_gamma)?;
    let g = DVector::from_vec(vec![1.0, pc1mf_median]);
    let se = (g.transpose() * v_gamma * &g)[(0, 0)].max(0.0).sqrt();
    let z = if (level - 0.9).abs() < 1e-15 { Z_90 } else { stats::normal_quantile(0.5 + level / 2.0) };
    Ok((score - z * se, score + z * se))
}

/// Loading-weighted factor contributions in percent of their sum.
pub fn contributions(loadings: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if loadings.len() != values.len() {
        return Err(ResilienceError::DimensionMismatch(format!("{} loadings, {} values", loadings.len(), values.len())));
    }
    let parts: Vec<f64> = loadings.iter().zip(values).map(|(w, v)| w * v).collect();
    let total: f64 = parts.iter().sum();
    if !(total > 0.0) {
        return Err(ResilienceError::NonPositiveComposite(total));
    }
    Ok(parts.iter().map(|p| 100.0 * p / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceScore {
    pub country_id: String,
    pub period: (NaiveDate, NaiveDate),
    pub pc1mf_median: f64,
    pub score: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `(factor, percent share)`; empty when the composite is not positive.
    pub contributions: Vec<(String, f64)>,
    pub rank: usize,
}

/// Score, CI and contributions for every country with data in the period,
/// ranked ascending by `(score, country)`.
pub fn resilience_ranking(
    gamma1: f64,
    gamma2: f64,
    v_gamma: &DMatrix<f64>,
    mf_panel: &PanelTable,
    pca: &PcaLoadings,
    period: (NaiveDate, NaiveDate),
    level: f64,
) -> Result<Vec<ResilienceScore>> {
    let window = mf_panel.date_range(period.0, period.1);
    let composite = pc1mf(&window, pca)?;
    let mut out = Vec::new();
    for c in composite.countries() {
        let vals = composite.series_values(&c, PC1MF);
        if vals.is_empty() {
            continue;
        }
        let median = stats::median(&vals);
        let score = resilience(gamma1, gamma2, median);
        let (ci_lo, ci_hi) = resilience_ci(score, v_gamma, median, level)?;
        let medians: Vec<f64> = pca.factors.iter().map(|f| stats::median(&window.series_values(&c, f))).collect();
        let contributions = match contributions(&pca.loadings, &medians) {
            Ok(s) => pca.factors.iter().cloned().zip(s).collect(),
            Err(_) => Vec::new(),
        };
        out.push(ResilienceScore { country_id: c, period, pc1mf_median: median, score, ci_lo, ci_hi, contributions, rank: 0 });
    }
    rank_scores(&mut out);
    Ok(out)
}

/// Sort by `(score, country)` and assign ranks from 1.
pub fn rank_scores(scores: &mut [ResilienceScore]) {
    scores.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.country_id.cmp(&b.country_id)));
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
    }
}

/// Number of factors attaining their threshold (inclusive comparison).
pub fn supporting_factor_count(values: &[f64], thresholds: &[f64], directions: &[ThresholdDirection]) -> usize {
    values
        .iter()
        .zip(thresholds)
        .zip(directions)
        .filter(|((v, t), d)| d.attained(**v, **t))
        .count()
}

fn period_mean(series: &[(NaiveDate, f64)], period: (NaiveDate, NaiveDate)) -> Result<f64> {
    let vals: Vec<f64> = series.iter().filter(|(d, _)| *d >= period.0 && *d <= period.1).map(|(_, v)| *v).collect();
    if vals.is_empty() {
        return Err(ResilienceError::EmptyPeriod(period.0, period.1));
    }
    Ok(stats::mean(&vals))
}

/// Percentage change of the FX-to-CF volatility ratio of period means from
/// period `a` to period `b`.
pub fn market_based_resilience(
    vol_fx: &[(NaiveDate, f64)],
    vol_cf: &[(NaiveDate, f64)],
    period_a: (NaiveDate, NaiveDate),
    period_b: (NaiveDate, NaiveDate),
) -> Result<f64> {
    let ca = period_mean(vol_cf, period_a)?;
    let cb = period_mean(vol_cf, period_b)?;
    if ca == 0.0 || cb == 0.0 {
        return Err(ResilienceError::ZeroCfVol);
    }
    let ra = period_mean(vol_fx, period_a)? / ca;
    let rb = period_mean(vol_fx, period_b)? / cb;
    if ra == 0.0 {
        return Err(ResilienceError::DimensionMismatch("FX volatility is zero in the base period".into()));
    }
    Ok(100.0 * (rb - ra) / ra)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    pub mf: f64,
    pub effect: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Total effect with a pointwise confidence band over a factor grid.
pub fn total_effect_curve(gamma1: f64, gamma2: f64, v_gamma: &DMatrix<f64>, grid: &[f64], level: f64) -> Result<Vec<EffectPoint>> {
    grid.iter()
        .map(|&mf| {
            let effect = total_effect(gamma1, gamma2, mf);
            let (ci_lo, ci_hi) = resilience_ci(effect, v_gamma, mf, level)?;
            Ok(EffectPoint { mf, effect, ci_lo, ci_hi })
        })
        .collect()
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Per-country supporting-factor counts in one year, from annual medians.
pub fn supporting_counts_in_year(
    panel: &PanelTable,
    factors: &[&str],
    thresholds: &[f64],
    directions: &[ThresholdDirection],
    year: i32,
) -> BTreeMap<String, usize> {
    use chrono::Datelike;
    let year_panel = panel.filter(|k| k.date.year() == year);
    let mut out = BTreeMap::new();
    for c in year_panel.countries() {
        let vals: Option<Vec<f64>> = factors
            .iter()
            .map(|f| {
                let v = year_panel.series_values(&c, f);
                (!v.is_empty()).then(|| stats::median(&v))
            })
            .collect();
        if let Some(vals) = vals {
            out.insert(c, supporting_factor_count(&vals, thresholds, directions));
        }
    }
    out
}

/// Single-variable annual panel helper used by the case-study calculators.
pub fn annual_panel(rows: &[(&str, i32, &str, f64)]) -> Result<PanelTable> {
    let obs = rows.iter().map(|(c, y, v, x)| {
        (c.to_string(), NaiveDate::from_ymd_opt(*y, 12, 31).expect("valid"), v.to_string(), *x)
    });
    PanelTable::from_observations(Frequency::Annual, obs).map_err(|e| ResilienceError::DimensionMismatch(e.to_string()))
}
