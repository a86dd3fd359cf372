//! Two-way fixed-effects panel regression by feasible GLS with panel AR(1)
//! errors and a contemporaneous cross-sectional covariance, plus Wald tests.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::TestResult;
use crate::linalg::{self, LinalgError};
use crate::panel::PanelTable;
use crate::stats;
use crate::vars;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FglsError {
    #[error("variable {0} is not in the panel")]
    MissingVariable(String),
    #[error("panel is unbalanced: no {variable} for {country} at {date}")]
    UnbalancedPanel { country: String, date: NaiveDate, variable: String },
    #[error("{0} cannot enter as a moderating factor (collinear with financial development)")]
    ExcludedFactor(String),
    #[error("singular design: {0}")]
    SingularDesign(LinalgError),
    #[error(
        "cross-sectional residual covariance ({n} countries, {t} periods) cannot be made invertible; \
         reduce the number of countries, lengthen the sample, or use a diagonal covariance"
    )]
    SingularCsCovariance { n: usize, t: usize },
    #[error("restriction covariance R V R' is singular")]
    SingularRestriction,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown coefficient {0}")]
    UnknownCoefficient(String),
}

pub type Result<T> = std::result::Result<T, FglsError>;

/// Regression of `dependent` on a volatility shock, its interactions with
/// moderating factors, the factors' levels, controls and fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub dependent: String,
    pub shock: String,
    /// Factors entering as `shock x factor`.
    pub interactions: Vec<String>,
    /// Factors entering in levels.
    pub factors: Vec<String>,
    pub controls: Vec<String>,
    pub time_effects: bool,
    pub country_effects: bool,
    /// Inclusive date window.
    pub sample: Option<(NaiveDate, NaiveDate)>,
}

impl RegressionSpec {
    /// Single moderating factor with interaction, default controls, two-way effects.
    pub fn moderated(factor: &str, controls: &[&str]) -> Self {
        RegressionSpec {
            dependent: vars::VOL_FX.into(),
            shock: vars::VOL_CF.into(),
            interactions: vec![factor.into()],
            factors: vec![factor.into()],
            controls: controls.iter().map(|s| s.to_string()).collect(),
            time_effects: true,
            country_effects: true,
            sample: None,
        }
    }

    pub fn interaction_name(&self, factor: &str) -> String {
        interaction_name(&self.shock, factor)
    }
}

pub fn interaction_name(shock: &str, factor: &str) -> String {
    format!("{shock}*{factor}")
}

pub const INTERCEPT: &str = "const";

/// Stacked design, rows ordered country-major (`i * T + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    /// Leading columns that are not fixed effects or the intercept.
    pub n_substantive: usize,
    pub countries: Vec<String>,
    pub periods: Vec<NaiveDate>,
}

impl Design {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sample mean of a named design column.
    pub fn column_mean(&self, name: &str) -> Option<f64> {
        self.column(name).map(|j| self.x.column(j).mean())
    }
}

/// Columns: shock, interactions, factor levels, controls, time dummies (first
/// period omitted), country dummies (first country omitted), intercept.
pub fn build_design(panel: &PanelTable, spec: &RegressionSpec) -> Result<Design> {
    for f in spec.interactions.iter().chain(&spec.factors) {
        if f == vars::CREDIT_PRIVATE {
            return Err(FglsError::ExcludedFactor(f.clone()));
        }
    }
    let table = match spec.sample {
        Some((a, b)) => panel.date_range(a, b),
        None => panel.clone(),
    };
    let mut needed: Vec<&str> = vec![&spec.dependent, &spec.shock];
    needed.extend(spec.interactions.iter().map(String::as_str));
    needed.extend(spec.factors.iter().map(String::as_str));
    needed.extend(spec.controls.iter().map(String::as_str));
    for v in &needed {
        if !table.has_variable(v) {
            return Err(FglsError::MissingVariable(v.to_string()));
        }
    }
    let countries = table.countries();
    let periods = table.dates();
    let (n, t) = (countries.len(), periods.len());
    let value = |c: &str, d: NaiveDate, v: &str| {
        table.get(c, d, v).ok_or_else(|| FglsError::UnbalancedPanel { country: c.into(), date: d, variable: v.into() })
    };

    let mut names = vec![spec.shock.clone()];
    names.extend(spec.interactions.iter().map(|f| spec.interaction_name(f)));
    names.extend(spec.factors.iter().cloned());
    names.extend(spec.controls.iter().cloned());
    let n_substantive = names.len();
    if spec.time_effects {
        names.extend(periods.iter().skip(1).map(|d| format!("time:{d}")));
    }
    if spec.country_effects {
        names.extend(countries.iter().skip(1).map(|c| format!("country:{c}")));
    }
    names.push(INTERCEPT.into());

    let k = names.len();
    let mut x = DMatrix::zeros(n * t, k);
    let mut y = DVector::zeros(n * t);
    for (i, c) in countries.iter().enumerate() {
        for (s, &d) in periods.iter().enumerate() {
            let row = i * t + s;
            y[row] = value(c, d, &spec.dependent)?;
            let shock = value(c, d, &spec.shock)?;
            let mut col = 0;
            x[(row, col)] = shock;
            col += 1;
            for f in &spec.interactions {
                x[(row, col)] = shock * value(c, d, f)?;
                col += 1;
            }
            for v in spec.factors.iter().chain(&spec.controls) {
                x[(row, col)] = value(c, d, v)?;
                col += 1;
            }
            if spec.time_effects {
                if s > 0 {
                    x[(row, col + s - 1)] = 1.0;
                }
                col += t - 1;
            }
            if spec.country_effects {
                if i > 0 {
                    x[(row, col + i - 1)] = 1.0;
                }
                col += n - 1;
            }
            x[(row, col)] = 1.0;
        }
    }
    Ok(Design { x, y, names, n_substantive, countries, periods })
}

/// Structure assumed for the contemporaneous cross-sectional covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CrossSection {
    /// Full `N x N` covariance (correlation and heteroskedasticity).
    #[default]
    Full,
    /// Country-specific variances only.
    Heteroskedastic,
    /// Identity; with `panel_ar1 = false` the fit is OLS.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FglsOptions {
    pub panel_ar1: bool,
    pub cross_section: CrossSection,
    /// Minimum weight on the diagonal of the cross-sectional covariance.
    #[serde(default)]
    pub min_shrinkage: f64,
}

impl Default for FglsOptions {
    fn default() -> Self {
        FglsOptions { panel_ar1: true, cross_section: CrossSection::Full, min_shrinkage: 0.0 }
    }
}

impl FglsOptions {
    pub fn ols() -> Self {
        FglsOptions { panel_ar1: false, cross_section: CrossSection::Identity, min_shrinkage: 0.0 }
    }
}

pub const RHO_BOUND: f64 = 0.99;
/// Shrinkage weights toward the diagonal tried when the covariance is singular.
pub const SHRINKAGE_GRID: [f64; 8] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FglsFit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    /// `(X' Omega^{-1} X)^{-1}`
    pub covariance: DMatrix<f64>,
    pub n_substantive: usize,
    /// Two-way effects recovered from the slope estimates; each set sums to zero.
    pub intercept: f64,
    pub time_effects: Vec<(NaiveDate, f64)>,
    pub country_effects: Vec<(String, f64)>,
    /// Per-country AR(1) coefficients.
    pub rho: Vec<f64>,
    pub sigma_cs: DMatrix<f64>,
    /// Weight on the diagonal used to regularize `sigma_cs` (0 if none).
    pub shrinkage: f64,
    /// `N x T` residuals net of the recovered effects.
    pub residuals: DMatrix<f64>,
    pub countries: Vec<String>,
    pub periods: Vec<NaiveDate>,
    pub iterations: usize,
}

impl FglsFit {
    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| FglsError::UnknownCoefficient(name.into()))
    }

    pub fn coef(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index(name)?])
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        let i = self.index(name)?;
        Ok(self.covariance[(i, i)].max(0.0).sqrt())
    }

    /// Two-sided normal p-value of a single coefficient.
    pub fn p_value(&self, name: &str) -> Result<f64> {
        let se = self.se(name)?;
        let b = self.coef(name)?;
        Ok(if se > 0.0 { stats::normal_two_sided_p(b / se) } else if b == 0.0 { 1.0 } else { 0.0 })
    }

    /// Covariance block of the named coefficients.
    pub fn covariance_of(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = names.iter().map(|n| self.index(n)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.covariance[(idx[a], idx[b])]))
    }

    /// Substantive coefficients with SEs, p-values and significance stars.
    pub fn summary(&self) -> Vec<CoefficientRow> {
        self.names[..self.n_substantive]
            .iter()
            .map(|n| {
                let p = self.p_value(n).expect("own name");
                CoefficientRow {
                    name: n.clone(),
                    estimate: self.coef(n).expect("own name"),
                    std_error: self.se(n).expect("own name"),
                    p_value: p,
                    stars: stats::stars(p).to_string(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub stars: String,
}

fn ar1_coefficient(e: &[f64]) -> f64 {
    let num: f64 = e.windows(2).map(|w| w[1] * w[0]).sum();
    let den: f64 = e[..e.len() - 1].iter().map(|v| v * v).sum();
    if den > 0.0 {
        (num / den).clamp(-RHO_BOUND, RHO_BOUND)
    } else {
        0.0
    }
}

/// Prais-Winsten transform of each country block (rows `i*T .. (i+1)*T`).
fn prais_winsten(m: &DMatrix<f64>, rho: &[f64], t: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &r) in rho.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let base = i * t;
        let head = (1.0 - r * r).sqrt();
        for j in 0..m.ncols() {
            out[(base, j)] = head * m[(base, j)];
            for s in 1..t {
                out[(base + s, j)] = m[(base + s, j)] - r * m[(base + s - 1, j)];
            }
        }
    }
    out
}

/// Premultiply every time slice (the `N` rows sharing a period) by `w`.
fn cross_section_transform(m: &DMatrix<f64>, w: &DMatrix<f64>, n: usize, t: usize) -> DMatrix<f64> {
    let k = m.ncols();
    let mut out = DMatrix::zeros(n * t, k);
    let mut block = DMatrix::zeros(n, k);
    for s in 0..t {
        for i in 0..n {
            block.set_row(i, &m.row(i * t + s));
        }
        let tb = w * &block;
        for i in 0..n {
            out.set_row(i * t + s, &tb.row(i));
        }
    }
    out
}

fn regularized_inverse_root(sigma: &DMatrix<f64>, t: usize, floor: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = sigma.nrows();
    let diag = DMatrix::from_diagonal(&sigma.diagonal());
    if floor > 0.0 {
        let s = sigma * (1.0 - floor) + &diag * floor;
        if let Ok(l) = linalg::cholesky_lower(&s) {
            return Ok((linalg::lower_inverse(&l), floor));
        }
    } else if let Ok(l) = linalg::cholesky_lower(sigma) {
        return Ok((linalg::lower_inverse(&l), 0.0));
    }
    for &lambda in SHRINKAGE_GRID.iter().filter(|&&l| l > floor) {
        let s = sigma * (1.0 - lambda) + &diag * lambda;
        if let Ok(l) = linalg::cholesky_lower(&s) {
            log::warn!(
                "cross-sectional covariance ({n} countries, {t} periods) is singular; \
                 shrinking toward its diagonal with weight {lambda}"
            );
            return Ok((linalg::lower_inverse(&l), lambda));
        }
    }
    Err(FglsError::SingularCsCovariance { n, t })
}

/// FGLS in four steps: pooled OLS; per-country AR(1) coefficients from the
/// OLS residuals (clamped to +-0.99); Prais-Winsten transform and OLS to get
/// residuals for the `N x N` covariance; GLS on the transformed data with
/// the inverse Cholesky factor applied period by period.
pub fn fgls_fit(design: &Design, opts: FglsOptions) -> Result<FglsFit> {
    let (n, t) = (design.n_countries(), design.n_periods());
    if design.x.nrows() != n * t || design.y.len() != n * t {
        return Err(FglsError::DimensionMismatch(format!(
            "design has {} rows, expected {n} x {t}",
            design.x.nrows()
        )));
    }
    if t < 2 {
        return Err(FglsError::DimensionMismatch("need at least two periods".into()));
    }
    if n > t && opts.cross_section == CrossSection::Full {
        log::warn!("{n} countries exceed {t} periods; the cross-sectional covariance will be singular");
    }
    let ols = linalg::least_squares(&design.x, &design.y).map_err(FglsError::SingularDesign)?;
    let tss: f64 = {
        let m = design.y.mean();
        design.y.iter().map(|v| (v - m).powi(2)).sum::<f64>().max(design.y.norm_squared())
    };
    let k = design.x.ncols();
    let perfect = ols.rss() <= 1e-24 * tss.max(f64::MIN_POSITIVE);

    let (beta, covariance, rho, sigma_cs, shrinkage) = if perfect {
        let dof = (n * t).saturating_sub(k).max(1) as f64;
        (ols.beta.clone(), &ols.xtx_inv * (ols.rss() / dof), vec![0.0; n], DMatrix::zeros(n, n), 0.0)
    } else {
        let rho: Vec<f64> = if opts.panel_ar1 {
            (0..n).map(|i| ar1_coefficient(&ols.residuals.as_slice()[i * t..(i + 1) * t])).collect()
        } else {
            vec![0.0; n]
        };
        let xs = prais_winsten(&design.x, &rho, t);
        let ys = prais_winsten(&DMatrix::from_column_slice(n * t, 1, design.y.as_slice()), &rho, t);
        let ys = DVector::from_column_slice(ys.as_slice());
        let pw = linalg::least_squares(&xs, &ys).map_err(FglsError::SingularDesign)?;
        let u = &pw.residuals;
        let sigma_cs = match opts.cross_section {
            CrossSection::Identity => DMatrix::identity(n, n),
            _ => {
                let full = DMatrix::from_fn(n, n, |i, j| (0..t).map(|s| u[i * t + s] * u[j * t + s]).sum::<f64>() / t as f64);
                if opts.cross_section == CrossSection::Heteroskedastic {
                    DMatrix::from_diagonal(&full.diagonal())
                } else {
                    full
                }
            }
        };
        let (w, shrinkage) = regularized_inverse_root(&sigma_cs, t, opts.min_shrinkage.clamp(0.0, 1.0))?;
        let xg = cross_section_transform(&xs, &w, n, t);
        let yg = cross_section_transform(&DMatrix::from_column_slice(n * t, 1, ys.as_slice()), &w, n, t);
        let gls = linalg::least_squares(&xg, &DVector::from_column_slice(yg.as_slice())).map_err(FglsError::SingularDesign)?;
        let scale = if opts.cross_section == CrossSection::Identity {
            // Identity weighting still needs an error variance for V.
            gls.rss() / (n * t).saturating_sub(k).max(1) as f64
        } else {
            1.0
        };
        let mut v = gls.xtx_inv * scale;
        v = (&v + v.transpose()) * 0.5;
        (gls.beta, v, rho, sigma_cs, shrinkage)
    };

    let mut raw = DMatrix::zeros(n, t);
    let slopes = design.x.columns(0, design.n_substantive) * beta.rows(0, design.n_substantive);
    for i in 0..n {
        for s in 0..t {
            raw[(i, s)] = design.y[i * t + s] - slopes[i * t + s];
        }
    }
    let has_time = design.names.iter().any(|c| c.starts_with("time:"));
    let has_country = design.names.iter().any(|c| c.starts_with("country:"));
    let grand = raw.mean();
    let eta: Vec<f64> = if has_country { (0..n).map(|i| raw.row(i).mean() - grand).collect() } else { vec![0.0; n] };
    let mu: Vec<f64> = if has_time { (0..t).map(|s| raw.column(s).mean() - grand).collect() } else { vec![0.0; t] };
    let intercept = if has_time || has_country { grand } else { beta[k - 1] };
    let residuals = DMatrix::from_fn(n, t, |i, s| raw[(i, s)] - intercept - eta[i] - mu[s]);

    Ok(FglsFit {
        names: design.names.clone(),
        coefficients: beta,
        covariance,
        n_substantive: design.n_substantive,
        intercept,
        time_effects: if has_time { design.periods.iter().copied().zip(mu).collect() } else { Vec::new() },
        country_effects: if has_country { design.countries.iter().cloned().zip(eta).collect() } else { Vec::new() },
        rho,
        sigma_cs,
        shrinkage,
        residuals,
        countries: design.countries.clone(),
        periods: design.periods.clone(),
        iterations: 1,
    })
}

fn matrix_rank(r: &DMatrix<f64>) -> usize {
    let sv = r.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    sv.iter().filter(|v| **v > max * 1e-12 * r.nrows().max(r.ncols()) as f64).count()
}

/// `W = (R b - r)' (R V R')^{-1} (R b - r)`, chi-squared with `rank(R)` df.
pub fn wald_test(fit: &FglsFit, restriction: &DMatrix<f64>, value: &DVector<f64>) -> Result<TestResult> {
    let k = fit.coefficients.len();
    if restriction.ncols() != k || restriction.nrows() != value.len() || value.is_empty() {
        return Err(FglsError::DimensionMismatch(format!(
            "restriction is {}x{}, value has {} rows, model has {k} coefficients",
            restriction.nrows(),
            restriction.ncols(),
            value.len()
        )));
    }
    let q = matrix_rank(restriction);
    if q < restriction.nrows() {
        return Err(FglsError::SingularRestriction);
    }
    let d = restriction * &fit.coefficients - value;
    let m = restriction * &fit.covariance * restriction.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let w = if d.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        let mi = linalg::spd_inverse(&m).map_err(|_| FglsError::SingularRestriction)?;
        (d.transpose() * mi * &d)[(0, 0)].max(0.0)
    };
    let p = stats::chi2_sf(w, q);
    Ok(TestResult::new(w, p, 0, q, fit.n_countries(), fit.n_periods()))
}

/// One-row restriction `sum_j c_j b_j = value`.
pub fn linear_restriction(fit: &FglsFit, terms: &[(&str, f64)], value: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut r = DMatrix::zeros(1, fit.coefficients.len());
    for (name, c) in terms {
        r[(0, fit.index(name)?)] += c;
    }
    Ok((r, DVector::from_element(1, value)))
}

/// `H0: b_shock + b_interaction * mf = 0`.
pub fn total_effect_restriction(
    fit: &FglsFit,
    shock: &str,
    interaction: &str,
    mf: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    linear_restriction(fit, &[(shock, 1.0), (interaction, mf)], 0.0)
}

/// `H0: b_j = 0` for every named coefficient.
pub fn joint_zero_restriction(fit: &FglsFit, names: &[&str]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut r = DMatrix::zeros(names.len(), fit.coefficients.len());
    for (row, name) in names.iter().enumerate() {
        r[(row, fit.index(name)?)] = 1.0;
    }
    Ok((r, DVector::zeros(names.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Frequency;
    use crate::rng;
    use crate::synth::{interaction_sample, InteractionDgp};

    fn toy_panel() -> PanelTable {
        let d = |m: u32| NaiveDate::from_ymd_opt(2010, m, if m == 3 { 31 } else { 30 }).unwrap();
        let mut rows = Vec::new();
        for (i, c) in ["AA", "BB"].iter().enumerate() {
            for (s, m) in [3u32, 6, 9].iter().enumerate() {
                let f = (i * 3 + s) as f64;
                rows.push((c.to_string(), d(*m), "VolFX".to_string(), 1.0 + f));
                rows.push((c.to_string(), d(*m), "VolCF".to_string(), 0.5 * f + 0.1));
                rows.push((c.to_string(), d(*m), "TFI".to_string(), (f * f) % 5.0));
            }
        }
        PanelTable::from_observations(Frequency::Quarterly, rows).unwrap()
    }

    #[test]
    fn design_layout() {
        let spec = RegressionSpec::moderated("TFI", &[]);
        let d = build_design(&toy_panel(), &spec).unwrap();
        assert_eq!(d.x.shape(), (6, 3 + 2 + 1 + 1));
        assert_eq!(
            d.names,
            ["VolCF", "VolCF*TFI", "TFI", "time:2010-06-30", "time:2010-09-30", "country:BB", "const"]
        );
        for r in 0..6 {
            assert!((d.x[(r, 1)] - d.x[(r, 0)] * d.x[(r, 2)]).abs() <= 1e-15);
        }
        // Row 4 is BB at the second quarter.
        assert_eq!(d.x.row(4).iter().skip(3).copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn design_errors() {
        let p = toy_panel();
        let spec = RegressionSpec::moderated("TradeOpenness", &[]);
        assert_eq!(build_design(&p, &spec), Err(FglsError::MissingVariable("TradeOpenness".into())));
        let spec = RegressionSpec::moderated("CreditPrivate", &[]);
        assert!(matches!(build_design(&p, &spec), Err(FglsError::ExcludedFactor(_))));
        let gap = p.filter(|k| !(k.country == "BB" && k.variable == "TFI" && k.date.month() == 6));
        let spec = RegressionSpec::moderated("TFI", &[]);
        assert!(matches!(build_design(&gap, &spec), Err(FglsError::UnbalancedPanel { .. })));
    }

    use chrono::Datelike;

    fn sample(n: usize, t: usize, f: impl FnOnce(&mut InteractionDgp), seed: u64) -> PanelTable {
        let mut dgp = InteractionDgp::standard(n, t);
        f(&mut dgp);
        interaction_sample(&dgp, &mut rng::rng_from(seed)).unwrap().to_panel("VolFX", "VolCF", "MF").unwrap()
    }

    #[test]
    fn identity_weighting_is_ols() {
        let p = sample(5, 30, |_| {}, 1);
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let fit = fgls_fit(&d, FglsOptions::ols()).unwrap();
        let ols = linalg::least_squares(&d.x, &d.y).unwrap();
        assert!((&fit.coefficients - &ols.beta).amax() < 1e-10);
    }

    #[test]
    fn white_noise_fgls_close_to_ols() {
        let p = sample(4, 2000, |d| {
            d.rho = 0.0;
            d.cs_correlation = 0.0;
            d.sd_high = d.sd_low;
            d.time_effect_sd = 0.0;
        }, 2);
        let mut spec = RegressionSpec::moderated("MF", &[]);
        spec.time_effects = false;
        let d = build_design(&p, &spec).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        let ols = linalg::least_squares(&d.x, &d.y).unwrap();
        for j in 0..3 {
            let se = fit.covariance[(j, j)].sqrt();
            assert!((fit.coefficients[j] - ols.beta[j]).abs() < 0.3 * se, "{j}: {} {} {se}", fit.coefficients[j], ols.beta[j]);
        }
        assert!(fit.rho.iter().all(|r| r.abs() < 0.1));
    }

    #[test]
    fn matches_explicit_gls_oracle() {
        let p = sample(4, 12, |_| {}, 3);
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        let (n, t) = (4, 12);
        // Explicit Omega^{-1} = P' (Sigma^{-1} (x) I_T) P with country-major rows.
        let mut pm = DMatrix::zeros(n * t, n * t);
        for i in 0..n {
            let r = fit.rho[i];
            pm[(i * t, i * t)] = (1.0 - r * r).sqrt();
            for s in 1..t {
                pm[(i * t + s, i * t + s)] = 1.0;
                pm[(i * t + s, i * t + s - 1)] = -r;
            }
        }
        let si = linalg::spd_inverse(&fit.sigma_cs).unwrap();
        let kron = DMatrix::from_fn(n * t, n * t, |a, b| if a % t == b % t { si[(a / t, b / t)] } else { 0.0 });
        let omega_inv = pm.transpose() * kron * &pm;
        let xtx = d.x.transpose() * &omega_inv * &d.x;
        let v = xtx.clone().try_inverse().unwrap();
        let b = &v * d.x.transpose() * &omega_inv * &d.y;
        let rel = (&fit.covariance - &v).amax() / v.amax();
        assert!(rel < 1e-8, "{rel}");
        assert!((&fit.coefficients - b).amax() < 1e-8);
        assert!(linalg::asymmetry(&fit.covariance) < 1e-12);
        assert!(linalg::min_eigenvalue(&fit.covariance) > 0.0);
        assert!(fit.rho.iter().all(|r| r.abs() <= RHO_BOUND));
    }

    #[test]
    fn residual_country_means_vanish() {
        let p = sample(5, 40, |_| {}, 4);
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        for i in 0..5 {
            assert!(fit.residuals.row(i).mean().abs() < 1e-8);
        }
        let s: f64 = fit.country_effects.iter().map(|(_, v)| v).sum();
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn noiseless_response() {
        let mut p = sample(3, 20, |_| {}, 5);
        p = p.map_variable("VolFX", |k, _| {
            let c = p.get(&k.country, k.date, "VolCF").unwrap();
            let m = p.get(&k.country, k.date, "MF").unwrap();
            0.3 + 0.1 * c - 0.2 * c * m + 0.05 * m
        });
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        assert!(fit.residuals.amax() < 1e-10);
        assert!(fit.covariance.amax() < 1e-20);
        assert!((fit.coef("VolCF*MF").unwrap() + 0.2).abs() < 1e-10);
    }

    #[test]
    fn country_relabeling_leaves_slopes() {
        let p = sample(4, 30, |_| {}, 6);
        let renamed = PanelTable::from_observations(
            Frequency::Quarterly,
            p.to_rows().into_iter().map(|(c, d, v, x)| (format!("Z{}", 9 - c[1..].parse::<u32>().unwrap()), d, v, x)),
        )
        .unwrap();
        let spec = RegressionSpec::moderated("MF", &[]);
        let a = fgls_fit(&build_design(&p, &spec).unwrap(), FglsOptions::default()).unwrap();
        let b = fgls_fit(&build_design(&renamed, &spec).unwrap(), FglsOptions::default()).unwrap();
        for j in 0..3 {
            assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn implied_time_dummy_is_singular() {
        let p = sample(4, 20, |_| {}, 7);
        let common = p
            .filter(|k| k.variable == "MF")
            .to_rows()
            .into_iter()
            .map(|(c, d, _, _)| (c, d, "Global".to_string(), d.month() as f64 + d.year() as f64));
        let rows: Vec<_> = p.to_rows().into_iter().chain(common).collect();
        let p = PanelTable::from_observations(Frequency::Quarterly, rows).unwrap();
        let d = build_design(&p, &RegressionSpec::moderated("MF", &["Global"])).unwrap();
        assert!(matches!(fgls_fit(&d, FglsOptions::default()), Err(FglsError::SingularDesign(_))));
    }

    #[test]
    fn singular_cs_covariance_is_shrunk() {
        let p = sample(12, 8, |_| {}, 8);
        let mut spec = RegressionSpec::moderated("MF", &[]);
        spec.time_effects = false;
        let d = build_design(&p, &spec).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        assert!(fit.shrinkage > 0.0);
    }

    #[test]
    fn full_shrinkage_floor_is_heteroskedastic() {
        let p = sample(5, 30, |_| {}, 10);
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let floor = FglsOptions { min_shrinkage: 1.0, ..FglsOptions::default() };
        let het = FglsOptions { cross_section: CrossSection::Heteroskedastic, ..FglsOptions::default() };
        let a = fgls_fit(&d, floor).unwrap();
        let b = fgls_fit(&d, het).unwrap();
        assert_eq!(a.shrinkage, 1.0);
        assert!((&a.coefficients - &b.coefficients).amax() < 1e-10);
        assert!((&a.covariance - &b.covariance).amax() < 1e-10 * b.covariance.amax());
    }

    #[test]
    fn wald_cases() {
        let p = sample(5, 40, |_| {}, 9);
        let d = build_design(&p, &RegressionSpec::moderated("MF", &[])).unwrap();
        let fit = fgls_fit(&d, FglsOptions::default()).unwrap();
        let b = fit.coef("VolCF").unwrap();
        let (r, v) = linear_restriction(&fit, &[("VolCF", 1.0)], b).unwrap();
        let t = wald_test(&fit, &r, &v).unwrap();
        assert_eq!((t.statistic, t.p_value, t.df), (0.0, 1.0, 1));
        // Single-coefficient Wald equals the squared z statistic.
        let (r, v) = linear_restriction(&fit, &[("VolCF", 1.0)], 0.0).unwrap();
        let t = wald_test(&fit, &r, &v).unwrap();
        let z = b / fit.se("VolCF").unwrap();
        assert!((t.statistic - z * z).abs() < 1e-8 * z * z);
        let (r, v) = joint_zero_restriction(&fit, &["VolCF", "VolCF*MF"]).unwrap();
        assert_eq!(wald_test(&fit, &r, &v).unwrap().df, 2);
        let (mut r, v) = joint_zero_restriction(&fit, &["VolCF", "VolCF"]).unwrap();
        assert_eq!(wald_test(&fit, &r, &v), Err(FglsError::SingularRestriction));
        r = r.columns(0, 3).into_owned();
        assert!(matches!(wald_test(&fit, &r, &v), Err(FglsError::DimensionMismatch(_))));
        let mf = d.column_mean("MF").unwrap();
        let (r, v) = total_effect_restriction(&fit, "VolCF", "VolCF*MF", mf).unwrap();
        assert!(wald_test(&fit, &r, &v).unwrap().p_value <= 1.0);
        let rows = fit.summary();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].stars, stats::stars(rows[0].p_value));
    }
}
