//! Synthetic data-generating processes with known ground truth.

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::panel::{quarter_end, Frequency, Observation, PanelError, PanelTable};
use crate::rng;
use crate::spvar::{is_stable, spectral_radius, CountryEndog};
use crate::vars;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid DGP specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

fn obs(country: &str, date: NaiveDate, variable: &str, value: f64) -> Observation {
    (country.to_string(), date, variable.to_string(), value)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `y_t = sum_l A_l y_{t-l} + shocks_t`, from zero initial conditions.
/// The first `burn` rows are discarded.
pub fn simulate_var_from_shocks(coefficients: &[DMatrix<f64>], shocks: &DMatrix<f64>, burn: usize) -> DMatrix<f64> {
    let (t, n) = shocks.shape();
    let mut y = DMatrix::zeros(t, n);
    for tt in 0..t {
        let mut row = shocks.row(tt).transpose();
        for (l, a) in coefficients.iter().enumerate() {
            if tt > l {
                row += a * y.row(tt - l - 1).transpose();
            }
        }
        y.set_row(tt, &row.transpose());
    }
    y.rows(burn, t - burn).into_owned()
}

/// VAR driven by `impact * e_t`, `e_t ~ N(0, I)`. Returns `t x n` after `burn`.
pub fn simulate_var<R: Rng + ?Sized>(
    coefficients: &[DMatrix<f64>],
    impact: &DMatrix<f64>,
    t: usize,
    burn: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let n = impact.nrows();
    let e = DMatrix::from_fn(t + burn, n, |_, _| normal(rng));
    let u = e * impact.transpose();
    simulate_var_from_shocks(coefficients, &u, burn)
}

/// Random stable VAR(p) coefficients: entries drawn uniformly and rescaled
/// until the spectral radius is at most `max_radius`.
pub fn random_stable_var<R: Rng + ?Sized>(n: usize, p: usize, max_radius: f64, rng: &mut R) -> Vec<DMatrix<f64>> {
    let mut coefs: Vec<DMatrix<f64>> =
        (0..p).map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5))).collect();
    loop {
        let r = spectral_radius(&coefs);
        if r <= max_radius {
            return coefs;
        }
        let s = 0.95 * max_radius / r;
        for (l, a) in coefs.iter_mut().enumerate() {
            *a *= s.powi(l as i32 + 1);
        }
    }
}

/// Panel of VAR members whose structural shocks load on a common shock:
/// `eps_it = lambda_i * g_t + e_it`, `g, e ~ N(0, I)` independent across
/// shocks, and reduced-form errors `u_it = impact * eps_it`.
#[derive(Debug, Clone)]
pub struct FactorPanelSpec {
    pub coefficients: Vec<DMatrix<f64>>,
    pub impact: DMatrix<f64>,
    /// One loading per country, applied to every shock.
    pub loadings: Vec<f64>,
    pub t: usize,
    pub burn: usize,
    /// Exogenous series (shared by all members) with these coefficients, `n x m`.
    pub exog_coefficients: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct FactorPanel {
    pub members: Vec<CountryEndog>,
    /// `t x n` common structural shocks (post burn-in).
    pub common: DMatrix<f64>,
    pub loadings: Vec<f64>,
}

impl FactorPanel {
    /// Population loading of member `i` on the unit-variance common shock
    /// recovered from the cross-sectional average. The average shock is
    /// `mean(lambda) g + mean(e)`, so both sides carry a `1/N` share of
    /// member noise.
    pub fn population_loading(&self, i: usize) -> f64 {
        let n = self.loadings.len() as f64;
        let lbar = self.loadings.iter().sum::<f64>() / n;
        let li = self.loadings[i];
        (li * lbar + 1.0 / n) / ((li * li + 1.0).sqrt() * (lbar * lbar + 1.0 / n).sqrt())
    }
}

pub fn factor_panel<R: Rng + ?Sized>(spec: &FactorPanelSpec, rng: &mut R) -> Result<FactorPanel, SynthError> {
    if !is_stable(&spec.coefficients) {
        return Err(SynthError::InvalidSpec("VAR coefficients are not stable".into()));
    }
    let n = spec.impact.nrows();
    let total = spec.t + spec.burn;
    let g = DMatrix::from_fn(total, n, |_, _| normal(rng));
    let exog = spec.exog_coefficients.as_ref().map(|c| DMatrix::from_fn(total, c.ncols(), |_, _| normal(rng)));
    let mut members = Vec::with_capacity(spec.loadings.len());
    for (i, &lambda) in spec.loadings.iter().enumerate() {
        let eps = DMatrix::from_fn(total, n, |t, k| lambda * g[(t, k)] + normal(rng));
        let mut u = eps * spec.impact.transpose();
        if let (Some(c), Some(x)) = (&spec.exog_coefficients, &exog) {
            u += x * c.transpose();
        }
        let endog = simulate_var_from_shocks(&spec.coefficients, &u, spec.burn);
        members.push(CountryEndog {
            country_id: format!("C{i:02}"),
            endog,
            exog: exog.as_ref().map(|x| x.rows(spec.burn, spec.t).into_owned()),
        });
    }
    Ok(FactorPanel { members, common: g.rows(spec.burn, spec.t).into_owned(), loadings: spec.loadings.clone() })
}

/// `n` independent AR(1) series of length `t` with coefficient `rho`
/// (`rho = 1` gives random walks) and unit-variance innovations.
pub fn ar1_panel<R: Rng + ?Sized>(n: usize, t: usize, rho: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let burn = if rho.abs() < 1.0 { 100 } else { 0 };
    (0..n)
        .map(|_| {
            let mut y = 0.0;
            let mut out = Vec::with_capacity(t);
            for s in 0..t + burn {
                y = rho * y + normal(rng);
                if s >= burn {
                    out.push(y);
                }
            }
            out
        })
        .collect()
}

/// `(x, y)` panels with `x ~ iid N(0,1)` and `y_t = beta x_{t-1} + e_t`.
pub fn granger_panel<R: Rng + ?Sized>(n: usize, t: usize, beta: f64, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..=t).map(|_| normal(rng)).collect();
        let y: Vec<f64> = (1..=t).map(|s| beta * x[s - 1] + normal(rng)).collect();
        xs.push(x[1..].to_vec());
        ys.push(y);
    }
    (xs, ys)
}

/// Balanced two-way panel with an interaction between a shock regressor and
/// a moderating factor:
///
/// `y_it = g0 + g1 c_it + g2 c_it m_it + g3 m_it + mu_t + eta_i + eps_it`,
/// `eps_it = rho_i eps_{i,t-1} + v_it`, `v_t ~ N(0, Sigma_cs)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InteractionDgp {
    pub n: usize,
    pub t: usize,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub rho: f64,
    /// Equicorrelation of the innovations across countries.
    pub cs_correlation: f64,
    /// Innovation SDs range linearly over `[sd_low, sd_high]` across countries.
    pub sd_low: f64,
    pub sd_high: f64,
    pub time_effect_sd: f64,
    pub country_effect_sd: f64,
    pub shock_mean: f64,
    pub shock_sd: f64,
    pub factor_mean: f64,
    pub factor_sd: f64,
}

impl InteractionDgp {
    pub fn standard(n: usize, t: usize) -> Self {
        InteractionDgp {
            n,
            t,
            gamma0: 0.5,
            gamma1: 0.10,
            gamma2: -0.20,
            gamma3: 0.05,
            rho: 0.5,
            cs_correlation: 0.3,
            sd_low: 0.5,
            sd_high: 1.0,
            time_effect_sd: 0.3,
            country_effect_sd: 0.3,
            shock_mean: 1.0,
            shock_sd: 0.5,
            factor_mean: 0.5,
            factor_sd: 0.3,
        }
    }

    pub fn innovation_covariance(&self) -> DMatrix<f64> {
        let sd = |i: usize| {
            if self.n == 1 {
                self.sd_low
            } else {
                self.sd_low + (self.sd_high - self.sd_low) * i as f64 / (self.n - 1) as f64
            }
        };
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let c = if i == j { 1.0 } else { self.cs_correlation };
            c * sd(i) * sd(j)
        })
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 || self.t < 2 {
            return Err(SynthError::InvalidSpec("need n >= 1 and t >= 2".into()));
        }
        if self.rho.abs() >= 1.0 {
            return Err(SynthError::InvalidSpec(format!("|rho| = {} must be below 1", self.rho.abs())));
        }
        if linalg::cholesky_lower(&self.innovation_covariance()).is_err() {
            return Err(SynthError::InvalidSpec("cross-sectional covariance is not positive definite".into()));
        }
        Ok(())
    }
}

/// Country-major (`i * t + s`) columns of one interaction-DGP draw.
#[derive(Debug, Clone)]
pub struct InteractionSample {
    pub n: usize,
    pub t: usize,
    pub y: Vec<f64>,
    pub shock: Vec<f64>,
    pub factor: Vec<f64>,
}

impl InteractionSample {
    /// Quarterly panel with `dependent`, `shock` and `factor` variables,
    /// countries `C00..`, quarters from 2002Q1.
    pub fn to_panel(&self, dependent: &str, shock: &str, factor: &str) -> Result<PanelTable, SynthError> {
        let dates = quarter_grid(start_quarter(), self.t);
        let mut rows = Vec::with_capacity(3 * self.n * self.t);
        for i in 0..self.n {
            let c = format!("C{i:02}");
            for (s, &d) in dates.iter().enumerate() {
                let k = i * self.t + s;
                rows.push(obs(&c, d, dependent, self.y[k]));
                rows.push(obs(&c, d, shock, self.shock[k]));
                rows.push(obs(&c, d, factor, self.factor[k]));
            }
        }
        Ok(PanelTable::from_observations(Frequency::Quarterly, rows)?)
    }
}

pub fn interaction_sample<R: Rng + ?Sized>(dgp: &InteractionDgp, rng: &mut R) -> Result<InteractionSample, SynthError> {
    dgp.validate()?;
    let (n, t) = (dgp.n, dgp.t);
    let l = linalg::cholesky_lower(&dgp.innovation_covariance()).expect("validated");
    let mu: Vec<f64> = (0..t).map(|_| dgp.time_effect_sd * normal(rng)).collect();
    let eta: Vec<f64> = (0..n).map(|_| dgp.country_effect_sd * normal(rng)).collect();
    let sd0 = (1.0 - dgp.rho * dgp.rho).sqrt().recip();
    let mut eps = DMatrix::zeros(n, t);
    for s in 0..t {
        let z = DVector::from_fn(n, |_, _| normal(rng));
        let v = &l * z;
        for i in 0..n {
            eps[(i, s)] = if s == 0 { sd0 * v[i] } else { dgp.rho * eps[(i, s - 1)] + v[i] };
        }
    }
    let mut y = Vec::with_capacity(n * t);
    let mut shock = Vec::with_capacity(n * t);
    let mut factor = Vec::with_capacity(n * t);
    for i in 0..n {
        for s in 0..t {
            let c = dgp.shock_mean + dgp.shock_sd * normal(rng);
            let m = dgp.factor_mean + dgp.factor_sd * normal(rng);
            y.push(dgp.gamma0 + dgp.gamma1 * c + dgp.gamma2 * c * m + dgp.gamma3 * m + mu[s] + eta[i] + eps[(i, s)]);
            shock.push(c);
            factor.push(m);
        }
    }
    Ok(InteractionSample { n, t, y, shock, factor })
}

pub fn start_quarter() -> NaiveDate {
    NaiveDate::from_ymd_opt(2002, 3, 31).expect("valid date")
}

/// `count` consecutive quarter-end dates starting at the quarter containing `first`.
pub fn quarter_grid(first: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = quarter_end(first);
    for _ in 0..count {
        out.push(d);
        d = quarter_end(d + Duration::days(1));
    }
    out
}

/// Every Friday from the first Friday on or after `start` through `end`.
pub fn friday_grid(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let offset = (4 + 7 - start.weekday().num_days_from_monday() as i64) % 7;
    let mut d = start + Duration::days(offset);
    let mut out = Vec::new();
    while d <= end {
        out.push(d);
        d += Duration::days(7);
    }
    out
}

/// Parameters for the end-to-end synthetic dataset: weekly flows, FX index
/// levels and market variables plus quarterly fundamentals.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetSpec {
    pub n_countries: usize,
    pub n_quarters: usize,
    /// Share of countries (the first ones) with a free-floating regime.
    pub free_float_share: f64,
    /// Quarterly interaction relation between CF and FX volatility.
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho: f64,
    pub cs_correlation: f64,
    pub noise_sd: f64,
    /// Weekly log-volatility VAR(1) `[[a11, a12], [a21, a22]]`.
    pub weekly_var: [[f64; 2]; 2],
    /// Loading of weekly volatility shocks on a common factor.
    pub common_loading: f64,
    pub allow_unstable: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_countries: 20,
            n_quarters: 72,
            free_float_share: 0.6,
            gamma0: 0.3,
            gamma1: 0.10,
            gamma2: -0.20,
            rho: 0.5,
            cs_correlation: 0.3,
            noise_sd: 0.02,
            weekly_var: [[0.6, 0.0], [0.2, 0.5]],
            common_loading: 0.8,
            allow_unstable: false,
        }
    }
}

/// Ground truth written next to a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetTruth {
    pub seed: u64,
    pub spec: DatasetSpec,
    pub countries: Vec<String>,
    pub free_float: Vec<String>,
    pub strong_fundamentals: Vec<String>,
    pub economy_class: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub weekly: PanelTable,
    pub quarterly: PanelTable,
    pub truth: DatasetTruth,
}

const COUNTRY_CODES: [&str; 26] = [
    "AU", "BR", "CA", "CH", "CL", "CO", "CZ", "GB", "HK", "HU", "ID", "IL", "IN", "JP", "KR", "MX", "MY", "NO", "NZ",
    "PH", "PL", "SE", "SG", "TH", "US", "ZA",
];

fn country_code(i: usize) -> String {
    COUNTRY_CODES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("X{i:03}"))
}

/// Generate the end-to-end dataset. All randomness derives from `seed`.
///
/// Weekly: latent log volatilities of capital flows and the FX index follow
/// a bivariate VAR(1) with a common shock component; flows and index levels
/// are drawn with those volatilities. Quarterly: fundamentals shift with a
/// strong / weak country type, and the FX index's within-quarter scale
/// follows the interaction relation with a panel AR(1) disturbance.
pub fn dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, SynthError> {
    let n = spec.n_countries;
    let q = spec.n_quarters;
    if n < 6 || q < 8 {
        return Err(SynthError::InvalidSpec("need at least 6 countries and 8 quarters".into()));
    }
    let a = DMatrix::from_fn(2, 2, |i, j| spec.weekly_var[i][j]);
    if !spec.allow_unstable && !is_stable(std::slice::from_ref(&a)) {
        return Err(SynthError::InvalidSpec(format!(
            "weekly VAR is unstable (spectral radius {:.3}); set allow_unstable to override",
            spectral_radius(std::slice::from_ref(&a))
        )));
    }
    if spec.rho.abs() >= 1.0 || !(0.0..1.0).contains(&spec.cs_correlation) {
        return Err(SynthError::InvalidSpec("rho must satisfy |rho| < 1 and cs_correlation must lie in [0, 1)".into()));
    }
    let countries: Vec<String> = (0..n).map(country_code).collect();
    let quarters = quarter_grid(start_quarter(), q);
    let first_day = NaiveDate::from_ymd_opt(quarters[0].year(), quarters[0].month() - 2, 1).expect("valid");
    let fridays = friday_grid(first_day, *quarters.last().expect("non-empty"));
    let n_free = ((n as f64) * spec.free_float_share).round() as usize;

    let mut common_rng = rng::sub_rng(seed, &["synth".into(), "common".into()]);
    let w = fridays.len();
    let g: Vec<[f64; 2]> = (0..w).map(|_| [normal(&mut common_rng), normal(&mut common_rng)]).collect();
    let vix: Vec<f64> = {
        let mut v = 20.0f64;
        (0..w)
            .map(|_| {
                v = 20.0 + 0.9 * (v - 20.0) + 2.0 * normal(&mut common_rng);
                v.max(9.0)
            })
            .collect()
    };
    let commodity: Vec<f64> = (0..w).map(|_| 2.0 * normal(&mut common_rng)).collect();
    let mu_t: Vec<f64> = (0..q).map(|_| 0.05 * normal(&mut common_rng)).collect();
    let cs_l = {
        let c = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { spec.cs_correlation });
        linalg::cholesky_lower(&c).expect("equicorrelation in [0,1) is positive definite")
    };
    let mut eps = DMatrix::zeros(n, q);
    for s in 0..q {
        let z = DVector::from_fn(n, |_, _| normal(&mut common_rng));
        let v = &cs_l * z * spec.noise_sd;
        for i in 0..n {
            eps[(i, s)] = if s == 0 { v[i] / (1.0 - spec.rho * spec.rho).sqrt() } else { spec.rho * eps[(i, s - 1)] + v[i] };
        }
    }

    let mut weekly_rows = Vec::new();
    let mut quarterly_rows = Vec::new();
    let mut strong = Vec::new();
    let mut classes = Vec::new();
    for (i, c) in countries.iter().enumerate() {
        let mut r = rng::sub_rng(seed, &["synth".into(), "country".into(), c.as_str().into()]);
        let free = i < n_free;
        let is_strong = if free { i % 2 == 0 } else { i % 3 == 0 };
        if is_strong {
            strong.push(c.clone());
        }
        classes.push((c.clone(), if is_strong { "AE" } else { "EME" }.to_string()));
        let tilt = if is_strong { 1.0 } else { -1.0 };
        let eta = 0.05 * normal(&mut r);

        // Quarterly fundamentals: persistent around a type-dependent level.
        let levels = [
            (vars::REAL_GDP_GROWTH, 3.0 - 0.8 * tilt, 1.0),
            (vars::TRADE_OPENNESS, 60.0 + 25.0 * tilt, 5.0),
            (vars::FX_RESERVES, 2.0 + 1.5 * tilt, 0.5),
            (vars::TFI, 1.0 + 2.0 * tilt, 1.0),
            (vars::CREDIT_PRIVATE, 120.0 + 50.0 * tilt, 10.0),
            (vars::SHORT_RATE, 4.0 - 2.0 * tilt, 0.8),
            (vars::FISCAL_SURPLUS, -1.0 + 1.0 * tilt, 0.7),
            (vars::FINANCIAL_DEVELOPMENT, 0.6 + 0.2 * tilt, 0.05),
        ];
        let mut state: Vec<f64> = levels.iter().map(|(_, m, s)| m + 2.0 * s * normal(&mut r)).collect();
        let regime = if free { 6.0 } else { (1 + (i % 5)) as f64 };
        let control = if free { 0.1 } else { 0.5 } + 0.1 * r.random::<f64>();
        let mut fx_scale = Vec::with_capacity(q);
        let mut cf_scale = Vec::with_capacity(q);
        for (s, &d) in quarters.iter().enumerate() {
            for (k, (name, m, sd)) in levels.iter().enumerate() {
                state[k] = m + 0.9 * (state[k] - m) + 0.5 * sd * normal(&mut r);
                quarterly_rows.push(obs(c, d, name, state[k]));
            }
            quarterly_rows.push(obs(c, d, vars::FX_REGIME, regime));
            quarterly_rows.push(obs(c, d, vars::CAPITAL_CONTROL, control));
            // Resilience-relevant composite on a [0,1]-like scale.
            let composite = 0.5 + 0.3 * tilt + 0.1 * normal(&mut r);
            let cf = (0.8 + 0.3 * normal(&mut r)).abs() + 0.2;
            let fx = (spec.gamma0 + spec.gamma1 * cf + spec.gamma2 * cf * composite + mu_t[s] + eta + eps[(i, s)]).max(0.02);
            cf_scale.push(cf);
            fx_scale.push(fx);
        }

        // Weekly: latent log vols on top of the quarterly scales.
        let mut h = [0.0f64; 2];
        let mut level = 100.0;
        for (wk, &d) in fridays.iter().enumerate() {
            let qi = quarters.iter().position(|&qe| d <= qe).expect("friday inside grid");
            let shocks = [
                spec.common_loading * g[wk][0] + normal(&mut r),
                spec.common_loading * g[wk][1] + normal(&mut r),
            ];
            let prev = h;
            h[0] = a[(0, 0)] * prev[0] + a[(0, 1)] * prev[1] + 0.15 * shocks[0];
            h[1] = a[(1, 0)] * prev[0] + a[(1, 1)] * prev[1] + 0.15 * shocks[1];
            let flow = cf_scale[qi] * h[0].exp() * normal(&mut r);
            level = 100.0 + 0.7 * (level - 100.0) + fx_scale[qi] * h[1].exp() * normal(&mut r);
            let equity = (1.0 + 0.3 * h[0]) * 2.0 * normal(&mut r);
            weekly_rows.push(obs(c, d, vars::CAPITAL_FLOW, flow));
            weekly_rows.push(obs(c, d, vars::FX_INDEX, level));
            weekly_rows.push(obs(c, d, vars::EQUITY_RETURN, equity));
            weekly_rows.push(obs(c, d, vars::VIX, vix[wk]));
            weekly_rows.push(obs(c, d, vars::COMMODITY_RETURN, commodity[wk]));
        }
    }
    let weekly = PanelTable::from_observations(Frequency::Weekly, weekly_rows)?;
    let quarterly = PanelTable::from_observations(Frequency::Quarterly, quarterly_rows)?;
    Ok(Dataset {
        weekly,
        quarterly,
        truth: DatasetTruth {
            seed,
            spec: spec.clone(),
            free_float: countries[..n_free].to_vec(),
            countries,
            strong_fundamentals: strong,
            economy_class: classes,
        },
    })
}
