//! Plain-text `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use fxres_core::fgls::{CrossSection, FglsOptions};
use fxres_core::synth::DatasetSpec;
use fxres_core::Execution;

use crate::error::PipelineError;

pub const OUTPUT_DIR_ENV: &str = "FXRES_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolEstimator {
    Rolling,
    Arima,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub weekly_input: Option<PathBuf>,
    pub quarterly_input: Option<PathBuf>,
    pub classes_input: Option<PathBuf>,
    pub sample_start: Option<NaiveDate>,
    pub sample_end: Option<NaiveDate>,
    pub winsor_lower: f64,
    pub winsor_upper: f64,
    pub vol_window: usize,
    pub vol_estimator: VolEstimator,
    pub spvar_lags: usize,
    pub irf_horizon: usize,
    pub sign_draws: usize,
    pub sign_max_horizon: usize,
    pub sign_posterior: bool,
    pub cluster_restarts: usize,
    pub split_by_regime: bool,
    pub fgls: FglsOptions,
    pub time_effects: bool,
    pub country_effects: bool,
    pub thetas: Vec<f64>,
    pub resilience_start: Option<NaiveDate>,
    pub resilience_end: Option<NaiveDate>,
    pub ci_level: f64,
    pub casestudy_year: Option<i32>,
    pub casestudy_theta: f64,
    pub execution: Execution,
    pub record_timings: bool,
    pub synth: DatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output_dir: PathBuf::from("fxres-out"),
            weekly_input: None,
            quarterly_input: None,
            classes_input: None,
            sample_start: None,
            sample_end: None,
            winsor_lower: 1.0,
            winsor_upper: 99.0,
            vol_window: 4,
            vol_estimator: VolEstimator::Rolling,
            spvar_lags: fxres_core::spvar::DEFAULT_LAGS,
            irf_horizon: fxres_core::spvar::DEFAULT_HORIZON,
            sign_draws: 1000,
            sign_max_horizon: 0,
            sign_posterior: false,
            cluster_restarts: 50,
            split_by_regime: true,
            fgls: FglsOptions::default(),
            time_effects: true,
            country_effects: true,
            thetas: vec![0.0, 0.05],
            resilience_start: None,
            resilience_end: None,
            ci_level: 0.9,
            casestudy_year: None,
            casestudy_theta: 0.05,
            execution: Execution::default(),
            record_timings: false,
            synth: DatasetSpec::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid boolean `{value}` for `{key}`")),
    }
}

fn parse_date(key: &str, value: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| format!("invalid date `{value}` for `{key}` (expected YYYY-MM-DD)"))
}

fn fmt_f64(v: f64) -> String {
    fxres_core::panel::format_value(v)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn opt_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| PipelineError::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), i + 1).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        if !(0.0..100.0).contains(&cfg.winsor_lower) || cfg.winsor_upper <= cfg.winsor_lower || cfg.winsor_upper > 100.0 {
            return Err(PipelineError::Config { line: 0, message: "winsor bounds must satisfy 0 <= lower < upper <= 100".into() });
        }
        if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
            return Err(PipelineError::Config { line: 0, message: "ci_level must lie in (0, 1)".into() });
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text)
    }

    /// Apply `FXRES_OUTPUT_DIR` when it is set and non-empty.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        let date = || if value.is_empty() { Ok(None) } else { parse_date(key, value).map(Some) };
        match key {
            "seed" => self.seed = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "output_dir" => self.output_dir = PathBuf::from(value),
            "weekly_input" => self.weekly_input = path(),
            "quarterly_input" => self.quarterly_input = path(),
            "classes_input" => self.classes_input = path(),
            "sample_start" => self.sample_start = date()?,
            "sample_end" => self.sample_end = date()?,
            "winsor_lower" => self.winsor_lower = parse(key, value)?,
            "winsor_upper" => self.winsor_upper = parse(key, value)?,
            "vol_window" => {
                self.vol_window = parse(key, value)?;
                if self.vol_window < 2 {
                    return Err("vol_window must be at least 2".into());
                }
            }
            "vol_estimator" => {
                self.vol_estimator = match value {
                    "rolling" => VolEstimator::Rolling,
                    "arima" => VolEstimator::Arima,
                    _ => return Err(format!("vol_estimator must be `rolling` or `arima`, got `{value}`")),
                }
            }
            "spvar_lags" => self.spvar_lags = parse(key, value)?,
            "irf_horizon" => self.irf_horizon = parse(key, value)?,
            "sign_draws" => self.sign_draws = parse(key, value)?,
            "sign_max_horizon" => self.sign_max_horizon = parse(key, value)?,
            "sign_posterior" => self.sign_posterior = parse_bool(key, value)?,
            "cluster_restarts" => self.cluster_restarts = parse(key, value)?,
            "split_by_regime" => self.split_by_regime = parse_bool(key, value)?,
            "fgls_panel_ar1" => self.fgls.panel_ar1 = parse_bool(key, value)?,
            "fgls_cross_section" => {
                self.fgls.cross_section = match value {
                    "full" => CrossSection::Full,
                    "heteroskedastic" => CrossSection::Heteroskedastic,
                    "identity" => CrossSection::Identity,
                    _ => return Err(format!("fgls_cross_section must be full, heteroskedastic or identity, got `{value}`")),
                }
            }
            "fgls_min_shrinkage" => self.fgls.min_shrinkage = parse(key, value)?,
            "time_effects" => self.time_effects = parse_bool(key, value)?,
            "country_effects" => self.country_effects = parse_bool(key, value)?,
            "theta" => {
                self.thetas = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_, _>>()?;
                if self.thetas.is_empty() {
                    return Err("theta needs at least one value".into());
                }
            }
            "resilience_start" => self.resilience_start = date()?,
            "resilience_end" => self.resilience_end = date()?,
            "ci_level" => self.ci_level = parse(key, value)?,
            "casestudy_year" => self.casestudy_year = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "casestudy_theta" => self.casestudy_theta = parse(key, value)?,
            "execution" => {
                self.execution = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(format!("execution must be `parallel` or `sequential`, got `{value}`")),
                }
            }
            "record_timings" => self.record_timings = parse_bool(key, value)?,
            "synth_countries" => self.synth.n_countries = parse(key, value)?,
            "synth_quarters" => self.synth.n_quarters = parse(key, value)?,
            "synth_free_float_share" => self.synth.free_float_share = parse(key, value)?,
            "synth_gamma0" => self.synth.gamma0 = parse(key, value)?,
            "synth_gamma1" => self.synth.gamma1 = parse(key, value)?,
            "synth_gamma2" => self.synth.gamma2 = parse(key, value)?,
            "synth_rho" => self.synth.rho = parse(key, value)?,
            "synth_cs_correlation" => self.synth.cs_correlation = parse(key, value)?,
            "synth_noise_sd" => self.synth.noise_sd = parse(key, value)?,
            "synth_common_loading" => self.synth.common_loading = parse(key, value)?,
            "synth_allow_unstable" => self.synth.allow_unstable = parse_bool(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Canonical key/value echo for the manifest. The output directory is
    /// left out so that identical runs in different locations agree.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let s = &self.synth;
        let pairs: Vec<(&str, String)> = vec![
            ("seed", opt(&self.seed)),
            ("weekly_input", opt_path(&self.weekly_input)),
            ("quarterly_input", opt_path(&self.quarterly_input)),
            ("classes_input", opt_path(&self.classes_input)),
            ("sample_start", opt(&self.sample_start)),
            ("sample_end", opt(&self.sample_end)),
            ("winsor_lower", fmt_f64(self.winsor_lower)),
            ("winsor_upper", fmt_f64(self.winsor_upper)),
            ("vol_window", self.vol_window.to_string()),
            ("vol_estimator", match self.vol_estimator { VolEstimator::Rolling => "rolling", VolEstimator::Arima => "arima" }.into()),
            ("spvar_lags", self.spvar_lags.to_string()),
            ("irf_horizon", self.irf_horizon.to_string()),
            ("sign_draws", self.sign_draws.to_string()),
            ("sign_max_horizon", self.sign_max_horizon.to_string()),
            ("sign_posterior", self.sign_posterior.to_string()),
            ("cluster_restarts", self.cluster_restarts.to_string()),
            ("split_by_regime", self.split_by_regime.to_string()),
            ("fgls_panel_ar1", self.fgls.panel_ar1.to_string()),
            (
                "fgls_cross_section",
                match self.fgls.cross_section {
                    CrossSection::Full => "full",
                    CrossSection::Heteroskedastic => "heteroskedastic",
                    CrossSection::Identity => "identity",
                }
                .into(),
            ),
            ("fgls_min_shrinkage", fmt_f64(self.fgls.min_shrinkage)),
            ("time_effects", self.time_effects.to_string()),
            ("country_effects", self.country_effects.to_string()),
            ("theta", self.thetas.iter().map(|t| fmt_f64(*t)).collect::<Vec<_>>().join(",")),
            ("resilience_start", opt(&self.resilience_start)),
            ("resilience_end", opt(&self.resilience_end)),
            ("ci_level", fmt_f64(self.ci_level)),
            ("casestudy_year", opt(&self.casestudy_year)),
            ("casestudy_theta", fmt_f64(self.casestudy_theta)),
            ("record_timings", self.record_timings.to_string()),
            ("synth_countries", s.n_countries.to_string()),
            ("synth_quarters", s.n_quarters.to_string()),
            ("synth_free_float_share", fmt_f64(s.free_float_share)),
            ("synth_gamma0", fmt_f64(s.gamma0)),
            ("synth_gamma1", fmt_f64(s.gamma1)),
            ("synth_gamma2", fmt_f64(s.gamma2)),
            ("synth_rho", fmt_f64(s.rho)),
            ("synth_cs_correlation", fmt_f64(s.cs_correlation)),
            ("synth_noise_sd", fmt_f64(s.noise_sd)),
            ("synth_common_loading", fmt_f64(s.common_loading)),
            ("synth_allow_unstable", s.allow_unstable.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn sample(&self) -> Option<(NaiveDate, NaiveDate)> {
        match (self.sample_start, self.sample_end) {
            (None, None) => None,
            (a, b) => Some((a.unwrap_or(NaiveDate::MIN), b.unwrap_or(NaiveDate::MAX))),
        }
    }
}
