//! Windowed volatility of flow and FX-index series.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::linalg;
use crate::panel::{quarter_end, quarter_label};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolError {
    #[error("series of length {len} is shorter than the required {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("window must be at least 2 (got {0})")]
    BadWindow(usize),
    #[error("quarter {0} has fewer than 2 observations")]
    SparseQuarter(String),
    #[error("degenerate ARIMA(1,1,0) fit: {0}")]
    DegenerateFit(String),
    #[error("dates and values differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolVariable {
    VolCF,
    VolFX,
}

impl VolVariable {
    pub fn name(self) -> &'static str {
        match self {
            VolVariable::VolCF => "VolCF",
            VolVariable::VolFX => "VolFX",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolFrequency {
    Weekly,
    Quarterly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    RollingSD,
    ArimaResidSD,
}

/// Volatility estimates for one country and one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSeries {
    pub country_id: String,
    pub variable: VolVariable,
    pub frequency: VolFrequency,
    pub values: Vec<(NaiveDate, f64)>,
    pub estimator: Estimator,
}

/// A dated input series.
#[derive(Debug, Clone, Copy)]
pub struct Dated<'a> {
    pub dates: &'a [NaiveDate],
    pub values: &'a [f64],
}

impl<'a> Dated<'a> {
    pub fn new(dates: &'a [NaiveDate], values: &'a [f64]) -> Result<Self, VolError> {
        if dates.len() != values.len() {
            return Err(VolError::LengthMismatch);
        }
        Ok(Dated { dates, values })
    }
}

/// Rolling sample SD (divisor `n - 1`) over complete windows only; the value
/// at position `t` covers `t - window + 1 ..= t`.
pub fn rolling_sd_values(values: &[f64], window: usize) -> Result<Vec<f64>, VolError> {
    if window < 2 {
        return Err(VolError::BadWindow(window));
    }
    if values.len() < window {
        return Err(VolError::SeriesTooShort { len: values.len(), required: window });
    }
    Ok(values.windows(window).map(stats::sample_sd).collect())
}

pub fn rolling_sd(
    country_id: &str,
    variable: VolVariable,
    series: Dated<'_>,
    window: usize,
) -> Result<VolSeries, VolError> {
    let sds = rolling_sd_values(series.values, window)?;
    Ok(VolSeries {
        country_id: country_id.to_string(),
        variable,
        frequency: VolFrequency::Weekly,
        values: series.dates[window - 1..].iter().copied().zip(sds).collect(),
        estimator: Estimator::RollingSD,
    })
}

/// One SD per non-overlapping calendar quarter, stamped at quarter end.
pub fn quarterly_sd(country_id: &str, variable: VolVariable, series: Dated<'_>) -> Result<VolSeries, VolError> {
    let mut buckets: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for (d, v) in series.dates.iter().zip(series.values) {
        buckets.entry(quarter_end(*d)).or_default().push(*v);
    }
    let mut values = Vec::with_capacity(buckets.len());
    for (q, xs) in buckets {
        if xs.len() < 2 {
            return Err(VolError::SparseQuarter(quarter_label(q)));
        }
        values.push((q, stats::sample_sd(&xs)));
    }
    Ok(VolSeries {
        country_id: country_id.to_string(),
        variable,
        frequency: VolFrequency::Quarterly,
        values,
        estimator: Estimator::RollingSD,
    })
}

/// Conditional least-squares fit of `dx_t = c + phi dx_{t-1} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Arima110 {
    pub intercept: f64,
    pub phi: f64,
    /// Residuals aligned with levels index `2..n`.
    pub residuals: Vec<f64>,
}

pub const ARIMA_MIN_LEN: usize = 20;

pub fn fit_arima110(levels: &[f64]) -> Result<Arima110, VolError> {
    if levels.len() < ARIMA_MIN_LEN {
        return Err(VolError::SeriesTooShort { len: levels.len(), required: ARIMA_MIN_LEN });
    }
    let dx: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let y = &dx[1..];
    let lag = &dx[..dx.len() - 1];
    let span = |xs: &[f64]| xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - xs.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if span(&dx) == 0.0 {
        // Constant differences are fitted exactly by the intercept alone.
        return Ok(Arima110 { intercept: dx[0], phi: 0.0, residuals: vec![0.0; y.len()] });
    }
    if span(lag) == 0.0 {
        return Err(VolError::DegenerateFit("lagged differences have zero variance".into()));
    }
    let x = nalgebra::DMatrix::from_fn(y.len(), 2, |i, j| if j == 0 { 1.0 } else { lag[i] });
    let yv = nalgebra::DVector::from_column_slice(y);
    let fit = linalg::least_squares(&x, &yv).map_err(|e| VolError::DegenerateFit(e.to_string()))?;
    Ok(Arima110 { intercept: fit.beta[0], phi: fit.beta[1], residuals: fit.residuals.iter().copied().collect() })
}

/// Rolling SD of ARIMA(1,1,0) residuals. The residual for levels index `t`
/// is stamped with `dates[t]`.
pub fn arima_resid_vol(
    country_id: &str,
    variable: VolVariable,
    series: Dated<'_>,
    window: usize,
) -> Result<(VolSeries, Arima110), VolError> {
    let fit = fit_arima110(series.values)?;
    let resid_dates = &series.dates[2..];
    let mut vol = rolling_sd(country_id, variable, Dated { dates: resid_dates, values: &fit.residuals }, window)?;
    vol.estimator = Estimator::ArimaResidSD;
    Ok((vol, fit))
}
