//! Machine-readable run report assembled from the stage outputs on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::manifest::StageRecord;
use crate::records::*;
use crate::stages::{files, Pipeline, Stage, PIPELINE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub regression: String,
    pub factor: Option<String>,
    pub controls: Vec<String>,
    pub dropped_controls: Vec<String>,
    pub n_countries: usize,
    pub n_periods: usize,
    pub coefficients: Vec<CoefficientCsvRow>,
    pub wald: Vec<WaldRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub software: String,
    pub seed: Option<u64>,
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub clusters: Vec<ClusterRow>,
    #[serde(default)]
    pub cluster_profiles: Vec<ProfileRow>,
    #[serde(default)]
    pub sign_acceptance: Vec<SignAcceptanceRow>,
    #[serde(default)]
    pub regressions: Vec<RegressionReport>,
    #[serde(default)]
    pub thresholds: Vec<ThresholdCsvRow>,
    #[serde(default)]
    pub resilience: Vec<ResilienceRow>,
    #[serde(default)]
    pub contributions: Vec<ContributionRow>,
    #[serde(default)]
    pub supporting_factors: Vec<SupportingRow>,
    #[serde(default)]
    pub market_resilience: Vec<MarketRow>,
    /// CSV files holding series meant for plotting.
    #[serde(default)]
    pub figures: Vec<String>,
}

const FIGURES: [&str; 5] = [files::IRF, files::IRF_CUMULATIVE, files::SIGN_IRF, files::TOTAL_EFFECT, files::VOL_WEEKLY];

fn optional<T: serde::de::DeserializeOwned>(path: PathBuf, inputs: &mut Vec<PathBuf>) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows = read_csv(&path)?;
    inputs.push(path);
    Ok(rows)
}

pub(crate) fn emit(p: &Pipeline, inputs: &mut Vec<PathBuf>, outputs: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let dir = p.dir();
    let done: Vec<Stage> = PIPELINE.iter().copied().filter(|s| p.manifest.completed(s.name(), dir)).collect();
    if done.is_empty() {
        return Err(PipelineError::NoOutputs);
    }
    let has = |s: Stage| done.contains(&s);
    let at = |f: &str| dir.join(f);

    let mut report = Report {
        software: p.manifest.software.clone(),
        seed: p.manifest.seed,
        stages: p.manifest.stages.iter().filter(|s| s.name != Stage::Report.name()).cloned().collect(),
        clusters: Vec::new(),
        cluster_profiles: Vec::new(),
        sign_acceptance: Vec::new(),
        regressions: Vec::new(),
        thresholds: Vec::new(),
        resilience: Vec::new(),
        contributions: Vec::new(),
        supporting_factors: Vec::new(),
        market_resilience: Vec::new(),
        figures: FIGURES.iter().filter(|f| at(f).exists()).map(|f| f.to_string()).collect(),
    };
    if has(Stage::Cluster) {
        report.clusters = optional(at(files::CLUSTERS), inputs)?;
        report.cluster_profiles = optional(at(files::CLUSTER_PROFILES), inputs)?;
    }
    if has(Stage::Spvar) {
        report.sign_acceptance = optional(at(files::SIGN_ACCEPTANCE), inputs)?;
    }
    if has(Stage::Regress) {
        let fits_path = at(files::FITS);
        let fits: Vec<FitSummary> = read_json(&fits_path)?;
        inputs.push(fits_path);
        let coefs: Vec<CoefficientCsvRow> = optional(at(files::COEFFICIENTS), inputs)?;
        let wald: Vec<WaldRow> = optional(at(files::WALD), inputs)?;
        report.regressions = fits
            .into_iter()
            .map(|f| RegressionReport {
                coefficients: coefs.iter().filter(|c| c.regression == f.regression).cloned().collect(),
                wald: wald.iter().filter(|w| w.regression == f.regression).cloned().collect(),
                regression: f.regression,
                factor: f.factor,
                controls: f.controls,
                dropped_controls: f.dropped_controls,
                n_countries: f.n_countries,
                n_periods: f.n_periods,
            })
            .collect();
    }
    if has(Stage::Threshold) {
        report.thresholds = optional(at(files::THRESHOLDS), inputs)?;
    }
    if has(Stage::Resilience) {
        report.resilience = optional(at(files::RESILIENCE), inputs)?;
        report.contributions = optional(at(files::CONTRIBUTIONS), inputs)?;
    }
    if has(Stage::Casestudy) {
        report.supporting_factors = optional(at(files::SUPPORTING), inputs)?;
        report.market_resilience = optional(at(files::MARKET), inputs)?;
    }
    let out = at(files::REPORT);
    write_json(&out, &report)?;
    outputs.push(out);
    Ok(())
}

pub fn load(dir: &Path) -> Result<Report, PipelineError> {
    read_json(&dir.join(files::REPORT))
}
