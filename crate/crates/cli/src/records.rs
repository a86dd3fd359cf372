//! Row types of the CSV / JSON files written by the stages.

use std::path::Path;

use fxres_core::resilience::ThresholdDirection;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub regime_group: String,
    pub country: String,
    pub cluster: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub regime_group: String,
    pub cluster: u8,
    pub factor: String,
    pub median: f64,
    pub strong: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFitRow {
    pub regime_group: String,
    pub n_countries: usize,
    pub wcss: f64,
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfRow {
    pub cluster: String,
    pub shock_type: String,
    pub horizon: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignIrfRow {
    pub cluster: String,
    pub horizon: usize,
    /// CF-shock-size weighted mean of member median paths.
    pub weighted: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAcceptanceRow {
    pub cluster: String,
    pub country: String,
    pub accepted: usize,
    pub attempted: usize,
    pub acceptance_rate: f64,
    pub cf_shock_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingRow {
    pub cluster: String,
    pub country: String,
    pub shock: String,
    pub loading: f64,
    pub common_idio_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCsvRow {
    pub regression: String,
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub regression: String,
    pub test: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// What downstream stages need from one fitted regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub regression: String,
    pub factor: Option<String>,
    pub gamma1: f64,
    pub gamma2: Option<f64>,
    /// Covariance of `(gamma1, gamma2)`, row-major; `1 x 1` without an interaction.
    pub v_gamma: Vec<Vec<f64>>,
    pub factor_mean: Option<f64>,
    pub factor_min: Option<f64>,
    pub factor_max: Option<f64>,
    pub controls: Vec<String>,
    pub dropped_controls: Vec<String>,
    pub n_countries: usize,
    pub n_periods: usize,
    pub shrinkage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCsvRow {
    pub factor: String,
    pub theta: f64,
    pub threshold: f64,
    pub se: f64,
    pub direction: ThresholdDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalEffectRow {
    pub factor: String,
    pub mf_grid: f64,
    pub effect: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceRow {
    pub country: String,
    pub score: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub country: String,
    pub factor: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingRow {
    pub country: String,
    pub year: i32,
    pub supporting_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRow {
    pub country: String,
    pub period_a: String,
    pub period_b: String,
    pub change_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub country: String,
    pub class: String,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let io = |e: csv::Error| PipelineError::stage("output", format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let err = |e: csv::Error| PipelineError::stage("input", format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage("output", e))?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::stage("input", format!("{}: {e}", path.display())))
}
