//! Stage execution over an output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use fxres_core::clustering::{cluster_countries, cluster_profile, default_directions, ClusterOptions};
use fxres_core::fgls::{
    build_design, fgls_fit, interaction_name, joint_zero_restriction, total_effect_restriction, wald_test, FglsFit,
    RegressionSpec,
};
use fxres_core::panel::{
    derive_country_meta, load_panel_csv, minmax_normalize, winsorize_variables, zscore_normalize, BalanceStrategy, CsvSchema,
    EconomyClass, Frequency, PanelTable,
};
use fxres_core::resilience::{
    factor_matrix, linear_grid, market_based_resilience, pc1mf, pca_first_component, resilience_ranking,
    supporting_counts_in_year, threshold_row, total_effect_curve, PcaLoadings, ResilienceError, ThresholdQuery, PC1MF,
};
use fxres_core::spvar::{
    aggregate_irf_quantiles, cumulative_irf, pedroni_decompose, shock_weighted_aggregate, uhlig_sign_irf, CountryEndog,
    ShockType, SignOptions, SignSpec, SpvarError, VarxOptions, CF, FX,
};
use fxres_core::stats::QuantileMethod;
use fxres_core::synth::dataset;
use fxres_core::vars;
use fxres_core::volatility::{arima_resid_vol, quarterly_sd, rolling_sd, Dated, VolSeries, VolVariable};

use crate::config::{RunConfig, VolEstimator};
use crate::error::PipelineError;
use crate::manifest::{digest, RunManifest, StageRecord};
use crate::records::*;
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Volatility,
    Cluster,
    Spvar,
    Regress,
    Threshold,
    Resilience,
    Casestudy,
    Report,
}

/// The analysis stages in pipeline order.
pub const PIPELINE: [Stage; 7] = [
    Stage::Volatility,
    Stage::Cluster,
    Stage::Spvar,
    Stage::Regress,
    Stage::Threshold,
    Stage::Resilience,
    Stage::Casestudy,
];

pub const ORDER: [&str; 9] = ["synth", "volatility", "cluster", "spvar", "regress", "threshold", "resilience", "casestudy", "report"];

impl Stage {
    pub fn name(self) -> &'static str {
        ORDER[self as usize]
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Stage::Synth | Stage::Cluster | Stage::Spvar)
    }

    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Synth | Stage::Volatility | Stage::Cluster | Stage::Report => &[],
            Stage::Spvar => &[Stage::Volatility, Stage::Cluster],
            Stage::Regress => &[Stage::Volatility],
            Stage::Threshold | Stage::Resilience => &[Stage::Regress],
            Stage::Casestudy => &[Stage::Threshold],
        }
    }
}

pub mod files {
    pub const DATA_DIR: &str = "data";
    pub const WEEKLY: &str = "data/weekly.csv";
    pub const QUARTERLY: &str = "data/quarterly.csv";
    pub const CLASSES: &str = "data/classes.csv";
    pub const TRUTH: &str = "data/truth.json";
    pub const VOL_WEEKLY: &str = "volatility_weekly.csv";
    pub const VOL_QUARTERLY: &str = "volatility_quarterly.csv";
    pub const CLUSTERS: &str = "clusters.csv";
    pub const CLUSTER_PROFILES: &str = "cluster_profiles.csv";
    pub const CLUSTER_FITS: &str = "cluster_fits.csv";
    pub const IRF: &str = "irf.csv";
    pub const IRF_CUMULATIVE: &str = "irf_cumulative.csv";
    pub const SIGN_IRF: &str = "sign_irf.csv";
    pub const SIGN_ACCEPTANCE: &str = "sign_acceptance.csv";
    pub const LOADINGS: &str = "loadings.csv";
    pub const REGRESSION_PANEL: &str = "regression_panel.csv";
    pub const COMPOSITE_FACTORS: &str = "composite_factors.csv";
    pub const PCA: &str = "pca.json";
    pub const FITS: &str = "fits.json";
    pub const COEFFICIENTS: &str = "coefficients.csv";
    pub const WALD: &str = "wald.csv";
    pub const THRESHOLDS: &str = "thresholds.csv";
    pub const TOTAL_EFFECT: &str = "total_effect.csv";
    pub const RESILIENCE: &str = "resilience.csv";
    pub const CONTRIBUTIONS: &str = "contributions.csv";
    pub const SUPPORTING: &str = "supporting_factors.csv";
    pub const MARKET: &str = "market_resilience.csv";
    pub const REPORT: &str = "report.json";
}

pub const BASELINE: &str = "baseline";
const ORDERING: [&str; 2] = [vars::VOL_CF, vars::VOL_FX];
const TOTAL_EFFECT_GRID: usize = 21;

/// Files read and written by one stage run.
struct Io<'a> {
    dir: &'a Path,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Io<'a> {
    fn input(&mut self, p: PathBuf) -> PathBuf {
        if !self.inputs.contains(&p) {
            self.inputs.push(p.clone());
        }
        p
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        p
    }
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub manifest: RunManifest,
}

type Result<T> = std::result::Result<T, PipelineError>;

fn ctx<E: Into<crate::error::BoxError>>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::stage(stage.name(), e)
}

fn load(stage: Stage, path: &Path, frequency: Frequency) -> Result<PanelTable> {
    load_panel_csv(path, &CsvSchema::new(frequency)).map_err(|e| PipelineError::stage(stage.name(), format!("{}: {e}", path.display())))
}

fn sample(panel: &PanelTable, window: Option<(NaiveDate, NaiveDate)>) -> PanelTable {
    match window {
        Some((a, b)) => panel.date_range(a, b),
        None => panel.clone(),
    }
}

impl Pipeline {
    pub fn open(cfg: RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::io(&cfg.output_dir, e))?;
        let mut manifest = RunManifest::load(&cfg.output_dir)?.unwrap_or_else(|| RunManifest::new(cfg.seed, cfg.echo()));
        manifest.seed = cfg.seed;
        manifest.config = cfg.echo();
        manifest.software = crate::manifest::software_version();
        Ok(Pipeline { cfg, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    fn require(&self, stage: Stage, dep: Stage) -> Result<()> {
        if self.manifest.completed(dep.name(), self.dir()) {
            Ok(())
        } else {
            Err(PipelineError::MissingDependency { stage: stage.name(), requires: dep.name() })
        }
    }

    /// A configured input path, or the file the `synth` stage writes.
    fn input_path(&self, stage: Stage, configured: &Option<PathBuf>, synth_file: &str) -> Result<PathBuf> {
        match configured {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => Err(PipelineError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"))),
            None => {
                let p = self.dir().join(synth_file);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(PipelineError::MissingDependency { stage: stage.name(), requires: Stage::Synth.name() })
                }
            }
        }
    }

    fn seed(&self, stage: Stage) -> Result<u64> {
        self.cfg.seed.ok_or(PipelineError::MissingSeed { stage: stage.name() })
    }

    pub fn run(&mut self, stage: Stage) -> Result<StageRecord> {
        for dep in stage.requires() {
            self.require(stage, *dep)?;
        }
        if stage.stochastic() {
            self.seed(stage)?;
        }
        log::info!("running stage {}", stage.name());
        let started = Instant::now();
        let dir = self.cfg.output_dir.clone();
        let mut io = Io { dir: &dir, inputs: Vec::new(), outputs: Vec::new() };
        match stage {
            Stage::Synth => self.synth(&mut io)?,
            Stage::Volatility => self.volatility(&mut io)?,
            Stage::Cluster => self.cluster(&mut io)?,
            Stage::Spvar => self.spvar(&mut io)?,
            Stage::Regress => self.regress(&mut io)?,
            Stage::Threshold => self.threshold(&mut io)?,
            Stage::Resilience => self.resilience(&mut io)?,
            Stage::Casestudy => self.casestudy(&mut io)?,
            Stage::Report => report::emit(self, &mut io.inputs, &mut io.outputs)?,
        }
        let rec = StageRecord {
            name: stage.name().into(),
            seed: if stage.stochastic() { self.cfg.seed } else { None },
            inputs: io.inputs.iter().map(|p| digest(p, &dir)).collect::<Result<_>>()?,
            outputs: io.outputs.iter().map(|p| digest(p, &dir)).collect::<Result<_>>()?,
            elapsed_ms: self.cfg.record_timings.then(|| started.elapsed().as_millis() as u64),
        };
        self.manifest.record(rec.clone(), &ORDER);
        self.manifest.save(&dir)?;
        Ok(rec)
    }

    /// Every analysis stage in order, then the report.
    pub fn run_all(&mut self) -> Result<Vec<StageRecord>> {
        let mut out = Vec::new();
        for s in PIPELINE.iter().copied().chain([Stage::Report]) {
            out.push(self.run(s)?);
        }
        Ok(out)
    }

    fn synth(&self, io: &mut Io<'_>) -> Result<()> {
        let seed = self.seed(Stage::Synth)?;
        let ds = dataset(&self.cfg.synth, seed).map_err(ctx(Stage::Synth))?;
        let data = self.dir().join(files::DATA_DIR);
        std::fs::create_dir_all(&data).map_err(|e| PipelineError::io(&data, e))?;
        ds.weekly.save_csv(&io.output(files::WEEKLY)).map_err(ctx(Stage::Synth))?;
        ds.quarterly.save_csv(&io.output(files::QUARTERLY)).map_err(ctx(Stage::Synth))?;
        let classes: Vec<ClassRow> =
            ds.truth.economy_class.iter().map(|(c, k)| ClassRow { country: c.clone(), class: k.clone() }).collect();
        write_csv(&io.output(files::CLASSES), &classes)?;
        write_json(&io.output(files::TRUTH), &ds.truth)
    }

    fn volatility(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Volatility;
        let path = io.input(self.input_path(st, &self.cfg.weekly_input, files::WEEKLY)?);
        let weekly = sample(&load(st, &path, Frequency::Weekly)?, self.cfg.sample());
        let countries = weekly.countries();
        if countries.is_empty() {
            return Err(PipelineError::stage(st.name(), "weekly input has no observations in the sample window"));
        }
        let window = self.cfg.vol_window;
        let estimator = self.cfg.vol_estimator;
        let per_country = self.cfg.execution.map_slice(&countries, |c| -> std::result::Result<_, String> {
            let series = |var: &str| -> std::result::Result<(Vec<NaiveDate>, Vec<f64>), String> {
                let s = weekly.series(c, var);
                if s.is_empty() {
                    return Err(format!("country {c} has no {var} series"));
                }
                Ok(s.into_iter().unzip())
            };
            let mut weekly_rows = Vec::new();
            let mut quarterly_rows = Vec::new();
            for (input, var) in [(vars::CAPITAL_FLOW, VolVariable::VolCF), (vars::FX_INDEX, VolVariable::VolFX)] {
                let (dates, values) = series(input)?;
                let dated = Dated::new(&dates, &values).map_err(|e| e.to_string())?;
                let (w, q): (VolSeries, VolSeries) = match estimator {
                    VolEstimator::Rolling => (
                        rolling_sd(c, var, dated, window).map_err(|e| format!("{c} {input}: {e}"))?,
                        quarterly_sd(c, var, dated).map_err(|e| format!("{c} {input}: {e}"))?,
                    ),
                    VolEstimator::Arima => {
                        let (w, fit) = arima_resid_vol(c, var, dated, window).map_err(|e| format!("{c} {input}: {e}"))?;
                        let resid = Dated::new(&dates[2..], &fit.residuals).map_err(|e| e.to_string())?;
                        (w, quarterly_sd(c, var, resid).map_err(|e| format!("{c} {input}: {e}"))?)
                    }
                };
                weekly_rows.extend(w.values.iter().map(|(d, v)| (c.clone(), *d, var.name().to_string(), *v)));
                quarterly_rows.extend(q.values.iter().map(|(d, v)| (c.clone(), *d, var.name().to_string(), *v)));
            }
            let vol_dates: BTreeSet<NaiveDate> = weekly_rows.iter().map(|r| r.1).collect();
            for var in vars::VAR_EXOGENOUS {
                for (d, v) in weekly.series(c, var) {
                    if vol_dates.contains(&d) {
                        weekly_rows.push((c.clone(), d, var.to_string(), v));
                    }
                }
            }
            for var in [vars::EQUITY_RETURN, vars::CAPITAL_FLOW, vars::VIX] {
                let mut buckets: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
                for (d, v) in weekly.series(c, var) {
                    buckets.entry(fxres_core::panel::quarter_end(d)).or_default().push(v);
                }
                quarterly_rows.extend(buckets.into_iter().map(|(q, xs)| (c.clone(), q, var.to_string(), fxres_core::stats::mean(&xs))));
            }
            Ok((weekly_rows, quarterly_rows))
        });
        let mut w_rows = Vec::new();
        let mut q_rows = Vec::new();
        for r in per_country {
            let (w, q) = r.map_err(ctx(st))?;
            w_rows.extend(w);
            q_rows.extend(q);
        }
        let w = PanelTable::from_observations(Frequency::Weekly, w_rows).map_err(ctx(st))?;
        let q = PanelTable::from_observations(Frequency::Quarterly, q_rows).map_err(ctx(st))?;
        w.save_csv(&io.output(files::VOL_WEEKLY)).map_err(ctx(st))?;
        q.save_csv(&io.output(files::VOL_QUARTERLY)).map_err(ctx(st))?;
        Ok(())
    }

    fn classes(&self, st: Stage, io: &mut Io<'_>) -> Result<BTreeMap<String, EconomyClass>> {
        let path = io.input(self.input_path(st, &self.cfg.classes_input, files::CLASSES)?);
        read_csv::<ClassRow>(&path)?
            .into_iter()
            .map(|r| Ok((r.country, r.class.parse::<EconomyClass>().map_err(ctx(st))?)))
            .collect()
    }

    fn cluster(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Cluster;
        let path = io.input(self.input_path(st, &self.cfg.quarterly_input, files::QUARTERLY)?);
        let q = sample(&load(st, &path, Frequency::Quarterly)?, self.cfg.sample());
        let classes = self.classes(st, io)?;
        let factors = vars::CLUSTER_FACTORS;
        let w = winsorize_variables(&q, &factors, self.cfg.winsor_lower, self.cfg.winsor_upper, QuantileMethod::Linear)
            .map_err(ctx(st))?;
        let z = zscore_normalize(&w, &factors).map_err(ctx(st))?;
        let meta = derive_country_meta(&q, &classes, vars::FX_REGIME, vars::CAPITAL_CONTROL).map_err(ctx(st))?;
        let directions = default_directions();
        let opts = ClusterOptions {
            factors: &factors,
            directions: directions.clone(),
            split_by_regime: self.cfg.split_by_regime,
            seed: self.seed(st)?,
            restarts: self.cfg.cluster_restarts,
            exec: self.cfg.execution,
        };
        let groups = cluster_countries(&z, &meta, &opts).map_err(ctx(st))?;
        let mut rows = Vec::new();
        let mut profiles = Vec::new();
        let mut fits = Vec::new();
        for g in &groups {
            let name = g.regime_group.name().to_string();
            rows.extend(g.assignments.iter().map(|(c, l)| ClusterRow { regime_group: name.clone(), country: c.clone(), cluster: *l }));
            let prof = cluster_profile(&w, &g.assignments, &factors, &directions);
            for (label, medians) in &prof.medians {
                for f in factors {
                    if let Some(m) = medians.get(f) {
                        profiles.push(ProfileRow {
                            regime_group: name.clone(),
                            cluster: *label,
                            factor: f.to_string(),
                            median: *m,
                            strong: *label == prof.strong_cluster,
                        });
                    }
                }
            }
            fits.push(ClusterFitRow { regime_group: name, n_countries: g.assignments.len(), wcss: g.wcss, restarts: g.restarts, seed: g.seed });
        }
        write_csv(&io.output(files::CLUSTERS), &rows)?;
        write_csv(&io.output(files::CLUSTER_PROFILES), &profiles)?;
        write_csv(&io.output(files::CLUSTER_FITS), &fits)
    }

    fn spvar(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Spvar;
        let seed = self.seed(st)?;
        let vol = load(st, &io.input(self.dir().join(files::VOL_WEEKLY)), Frequency::Weekly)?;
        let clusters: Vec<ClusterRow> = read_csv(&io.input(self.dir().join(files::CLUSTERS)))?;
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in clusters {
            groups.entry(format!("{}-{}", r.regime_group, r.cluster)).or_default().push(r.country);
        }
        let h = self.cfg.irf_horizon;
        let var_opts = VarxOptions { lags: self.cfg.spvar_lags, demean: true };
        let sign_spec = SignSpec { max_horizon: self.cfg.sign_max_horizon, ..SignSpec::capital_flow_fx() };
        let sign_opts = SignOptions { draws: self.cfg.sign_draws, seed, horizon: h, posterior: self.cfg.sign_posterior, exec: self.cfg.execution };
        let needed: Vec<&str> = ORDERING.iter().chain(vars::VAR_EXOGENOUS.iter()).copied().collect();

        let mut irf_rows = Vec::new();
        let mut cum_rows = Vec::new();
        let mut sign_rows = Vec::new();
        let mut acceptance = Vec::new();
        let mut loadings = Vec::new();
        for (label, mut members) in groups {
            members.sort();
            if members.len() < 3 {
                log::warn!("spvar: cluster {label} has {} members, need at least 3; skipped", members.len());
                continue;
            }
            let common: BTreeSet<NaiveDate> = {
                let mut it = members.iter().flat_map(|c| needed.iter().map(move |v| (c, v))).map(|(c, v)| {
                    vol.series(c, v).into_iter().map(|(d, _)| d).collect::<BTreeSet<_>>()
                });
                let first = it.next().unwrap_or_default();
                it.fold(first, |acc, s| acc.intersection(&s).copied().collect())
            };
            let dates: Vec<NaiveDate> = common.into_iter().collect();
            let panel: Vec<CountryEndog> = members
                .iter()
                .map(|c| {
                    let get = |v: &str, d: &NaiveDate| vol.get(c, *d, v).expect("date in common span");
                    CountryEndog {
                        country_id: c.clone(),
                        endog: DMatrix::from_fn(dates.len(), 2, |t, j| get(ORDERING[j], &dates[t])),
                        exog: Some(DMatrix::from_fn(dates.len(), 3, |t, j| get(vars::VAR_EXOGENOUS[j], &dates[t]))),
                    }
                })
                .collect();
            let dec = pedroni_decompose(&panel, var_opts, &ORDERING, self.cfg.execution)
                .map_err(|e| PipelineError::stage(st.name(), format!("cluster {label}: {e}")))?;
            let mut paths: BTreeMap<ShockType, Vec<Vec<f64>>> = BTreeMap::new();
            for c in &members {
                let d = dec.irf_for(c, CF, h).map_err(ctx(st))?;
                for t in ShockType::ALL {
                    let m = d.path(t);
                    paths.entry(t).or_default().push((0..=h).map(|k| m[(k, FX)]).collect());
                }
                let cs = dec.country(c).map_err(ctx(st))?;
                for (k, name) in ORDERING.iter().enumerate() {
                    loadings.push(LoadingRow {
                        cluster: label.clone(),
                        country: c.clone(),
                        shock: name.to_string(),
                        loading: cs.loadings[k],
                        common_idio_correlation: cs.common_idio_correlation[k],
                    });
                }
            }
            for t in ShockType::ALL {
                let p = &paths[&t];
                let bands = aggregate_irf_quantiles(p).map_err(ctx(st))?;
                let cum: Vec<Vec<f64>> = p.iter().map(|x| cumulative_irf(x)).collect();
                let cbands = aggregate_irf_quantiles(&cum).map_err(ctx(st))?;
                for k in 0..=h {
                    let row = |b: &fxres_core::spvar::QuantileBands| IrfRow {
                        cluster: label.clone(),
                        shock_type: t.name().into(),
                        horizon: k,
                        median: b.median[k],
                        p25: b.p25[k],
                        p75: b.p75[k],
                    };
                    irf_rows.push(row(&bands));
                    cum_rows.push(row(&cbands));
                }
            }

            let draws = self.cfg.execution.map_slice(&dec.countries, |cs| uhlig_sign_irf(&cs.model, &sign_spec, &sign_opts));
            let mut medians = Vec::new();
            let mut weights = Vec::new();
            for (cs, res) in dec.countries.iter().zip(draws) {
                match res {
                    Ok(r) => {
                        acceptance.push(SignAcceptanceRow {
                            cluster: label.clone(),
                            country: cs.country_id.clone(),
                            accepted: r.accepted.len(),
                            attempted: r.attempted,
                            acceptance_rate: r.acceptance_rate,
                            cf_shock_size: r.cf_shock_size,
                        });
                        medians.push(r.median);
                        weights.push(r.cf_shock_size.max(0.0));
                    }
                    Err(SpvarError::NoAcceptedDraws { draws }) => {
                        log::warn!("spvar: no sign-restricted draw accepted for {} in {draws} draws", cs.country_id);
                        acceptance.push(SignAcceptanceRow {
                            cluster: label.clone(),
                            country: cs.country_id.clone(),
                            accepted: 0,
                            attempted: draws,
                            acceptance_rate: 0.0,
                            cf_shock_size: 0.0,
                        });
                    }
                    Err(e) => return Err(PipelineError::stage(st.name(), format!("{}: {e}", cs.country_id))),
                }
            }
            if medians.is_empty() {
                continue;
            }
            let weighted = shock_weighted_aggregate(&medians, &weights).map_err(ctx(st))?;
            let bands = if medians.len() >= 2 {
                aggregate_irf_quantiles(&medians).map_err(ctx(st))?
            } else {
                fxres_core::spvar::QuantileBands { median: medians[0].clone(), p25: medians[0].clone(), p75: medians[0].clone() }
            };
            for k in 0..=h {
                sign_rows.push(SignIrfRow {
                    cluster: label.clone(),
                    horizon: k,
                    weighted: weighted[k],
                    median: bands.median[k],
                    p25: bands.p25[k],
                    p75: bands.p75[k],
                });
            }
        }
        if irf_rows.is_empty() {
            return Err(PipelineError::stage(st.name(), "no cluster has the three members needed for the decomposition"));
        }
        write_csv(&io.output(files::IRF), &irf_rows)?;
        write_csv(&io.output(files::IRF_CUMULATIVE), &cum_rows)?;
        write_csv(&io.output(files::SIGN_IRF), &sign_rows)?;
        write_csv(&io.output(files::SIGN_ACCEPTANCE), &acceptance)?;
        write_csv(&io.output(files::LOADINGS), &loadings)
    }

    fn regress(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Regress;
        let path = io.input(self.input_path(st, &self.cfg.quarterly_input, files::QUARTERLY)?);
        let fundamentals = load(st, &path, Frequency::Quarterly)?;
        let vol = load(st, &io.input(self.dir().join(files::VOL_QUARTERLY)), Frequency::Quarterly)?;
        let base: Vec<&str> = [vars::VOL_FX, vars::VOL_CF]
            .into_iter()
            .chain(vars::MODERATING_FACTORS)
            .chain(vars::CONTROLS)
            .collect();
        let merged = fundamentals
            .select_variables(&base)
            .merge(&vol.select_variables(&base))
            .map_err(ctx(st))?;
        let merged = sample(&merged, self.cfg.sample());
        let complete: BTreeSet<String> =
            merged.countries().into_iter().filter(|c| base.iter().all(|v| !merged.series(c, v).is_empty())).collect();
        let dropped: Vec<String> = merged.countries().into_iter().filter(|c| !complete.contains(c)).collect();
        if !dropped.is_empty() {
            log::warn!("regress: dropping countries with a missing variable: {}", dropped.join(", "));
        }
        let panel = merged.filter(|k| complete.contains(&k.country)).balance(BalanceStrategy::DropPeriods);
        if panel.countries().len() < 2 || panel.dates().len() < 3 {
            return Err(PipelineError::stage(st.name(), "too few complete country-quarters for the regressions"));
        }
        let winsor: Vec<&str> = [vars::VOL_FX, vars::VOL_CF].into_iter().chain(vars::MODERATING_FACTORS).collect();
        let mut panel = winsorize_variables(&panel, &winsor, self.cfg.winsor_lower, self.cfg.winsor_upper, QuantileMethod::Linear)
            .map_err(ctx(st))?;

        let composite = minmax_normalize(&panel.select_variables(&vars::COMPOSITE_FACTORS), &vars::COMPOSITE_FACTORS).map_err(ctx(st))?;
        let pca = pca_first_component(&factor_matrix(&composite, &vars::COMPOSITE_FACTORS).map_err(ctx(st))?, &vars::COMPOSITE_FACTORS)
            .map_err(ctx(st))?;
        panel = panel.merge(&pc1mf(&composite, &pca).map_err(ctx(st))?).map_err(ctx(st))?;

        let (controls, absorbed) = usable_controls(&panel, self.cfg.time_effects, self.cfg.country_effects);
        if !absorbed.is_empty() {
            log::warn!("regress: controls absorbed by the fixed effects and left out: {}", absorbed.join(", "));
        }
        let control_refs: Vec<&str> = controls.iter().map(String::as_str).collect();
        let mut specs: Vec<(String, Option<String>, RegressionSpec)> = Vec::new();
        let mut baseline = RegressionSpec::moderated(vars::VOL_CF, &control_refs);
        baseline.interactions.clear();
        baseline.factors.clear();
        specs.push((BASELINE.into(), None, baseline));
        for f in vars::MODERATING_FACTORS.iter().chain([&PC1MF]) {
            specs.push((f.to_string(), Some(f.to_string()), RegressionSpec::moderated(f, &control_refs)));
        }

        let mut coef_rows = Vec::new();
        let mut wald_rows = Vec::new();
        let mut fits = Vec::new();
        for (name, factor, mut spec) in specs {
            spec.time_effects = self.cfg.time_effects;
            spec.country_effects = self.cfg.country_effects;
            let design = build_design(&panel, &spec).map_err(|e| PipelineError::stage(st.name(), format!("regression {name}: {e}")))?;
            let fit = fgls_fit(&design, self.cfg.fgls).map_err(|e| PipelineError::stage(st.name(), format!("regression {name}: {e}")))?;
            for r in fit.summary() {
                coef_rows.push(CoefficientCsvRow {
                    regression: name.clone(),
                    name: r.name,
                    estimate: r.estimate,
                    std_error: r.std_error,
                    p_value: r.p_value,
                    stars: r.stars,
                });
            }
            let summary = summarize(&name, factor.as_deref(), &fit, &design, &controls, &absorbed).map_err(ctx(st))?;
            wald_rows.extend(wald_rows_for(&name, factor.as_deref(), &fit, summary.factor_mean).map_err(ctx(st))?);
            fits.push(summary);
        }
        panel.save_csv(&io.output(files::REGRESSION_PANEL)).map_err(ctx(st))?;
        composite.save_csv(&io.output(files::COMPOSITE_FACTORS)).map_err(ctx(st))?;
        write_json(&io.output(files::PCA), &pca)?;
        write_json(&io.output(files::FITS), &fits)?;
        write_csv(&io.output(files::COEFFICIENTS), &coef_rows)?;
        write_csv(&io.output(files::WALD), &wald_rows)
    }

    fn fits(&self, io: &mut Io<'_>) -> Result<Vec<FitSummary>> {
        read_json(&io.input(self.dir().join(files::FITS)))
    }

    fn threshold(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Threshold;
        let fits = self.fits(io)?;
        let mut rows = Vec::new();
        let mut curve = Vec::new();
        for f in fits.iter().filter(|f| f.factor.is_some()) {
            let factor = f.factor.as_deref().expect("filtered");
            let (g2, v) = gamma_block(f).map_err(ctx(st))?;
            for &theta in &self.cfg.thetas {
                match threshold_row(factor, &ThresholdQuery::new(f.gamma1, g2, v.clone(), theta)) {
                    Ok(r) => rows.push(ThresholdCsvRow { factor: r.factor, theta: r.theta, threshold: r.threshold, se: r.se, direction: r.direction }),
                    Err(ResilienceError::ZeroGamma2) => log::warn!("threshold: interaction coefficient for {factor} is zero; no threshold"),
                    Err(e) => return Err(PipelineError::stage(st.name(), format!("{factor}: {e}"))),
                }
            }
            let (lo, hi) = (f.factor_min.unwrap_or(0.0), f.factor_max.unwrap_or(1.0));
            for p in total_effect_curve(f.gamma1, g2, &v, &linear_grid(lo, hi, TOTAL_EFFECT_GRID), self.cfg.ci_level).map_err(ctx(st))? {
                curve.push(TotalEffectRow { factor: factor.into(), mf_grid: p.mf, effect: p.effect, ci_lo: p.ci_lo, ci_hi: p.ci_hi });
            }
        }
        write_csv(&io.output(files::THRESHOLDS), &rows)?;
        write_csv(&io.output(files::TOTAL_EFFECT), &curve)
    }

    fn resilience(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Resilience;
        let fits = self.fits(io)?;
        let f = fits
            .iter()
            .find(|f| f.factor.as_deref() == Some(PC1MF))
            .ok_or_else(|| PipelineError::stage(st.name(), "no composite-factor regression in fits.json"))?;
        let (g2, v) = gamma_block(f).map_err(ctx(st))?;
        let pca: PcaLoadings = read_json(&io.input(self.dir().join(files::PCA)))?;
        let panel = load(st, &io.input(self.dir().join(files::COMPOSITE_FACTORS)), Frequency::Quarterly)?;
        let dates = panel.dates();
        let period = (
            self.cfg.resilience_start.unwrap_or(dates[0]),
            self.cfg.resilience_end.unwrap_or(*dates.last().expect("non-empty")),
        );
        let ranking = resilience_ranking(f.gamma1, g2, &v, &panel, &pca, period, self.cfg.ci_level).map_err(ctx(st))?;
        let rows: Vec<ResilienceRow> = ranking
            .iter()
            .map(|s| ResilienceRow { country: s.country_id.clone(), score: s.score, ci_lo: s.ci_lo, ci_hi: s.ci_hi, rank: s.rank })
            .collect();
        let shares: Vec<ContributionRow> = ranking
            .iter()
            .flat_map(|s| s.contributions.iter().map(|(f, v)| ContributionRow { country: s.country_id.clone(), factor: f.clone(), share: *v }))
            .collect();
        write_csv(&io.output(files::RESILIENCE), &rows)?;
        write_csv(&io.output(files::CONTRIBUTIONS), &shares)
    }

    fn casestudy(&self, io: &mut Io<'_>) -> Result<()> {
        let st = Stage::Casestudy;
        let rows: Vec<ThresholdCsvRow> = read_csv(&io.input(self.dir().join(files::THRESHOLDS)))?;
        let theta = self.cfg.casestudy_theta;
        let mut thresholds = Vec::new();
        let mut directions = Vec::new();
        for f in vars::COMPOSITE_FACTORS {
            let r = rows.iter().find(|r| r.factor == f && (r.theta - theta).abs() < 1e-12).ok_or_else(|| {
                PipelineError::stage(st.name(), format!("no threshold for {f} at theta {theta}; add it to the `theta` list"))
            })?;
            thresholds.push(r.threshold);
            directions.push(r.direction);
        }
        let panel = load(st, &io.input(self.dir().join(files::REGRESSION_PANEL)), Frequency::Quarterly)?;
        let last_year = panel.dates().last().map(|d| d.year()).ok_or_else(|| PipelineError::stage(st.name(), "empty regression panel"))?;
        let year = self.cfg.casestudy_year.unwrap_or(last_year);
        let counts = supporting_counts_in_year(&panel, &vars::COMPOSITE_FACTORS, &thresholds, &directions, year);
        if counts.is_empty() {
            return Err(PipelineError::stage(st.name(), format!("no data in case-study year {year}")));
        }
        let supporting: Vec<SupportingRow> =
            counts.into_iter().map(|(c, n)| SupportingRow { country: c, year, supporting_count: n }).collect();

        let year_span = |y: i32| (NaiveDate::from_ymd_opt(y, 1, 1).expect("valid"), NaiveDate::from_ymd_opt(y, 12, 31).expect("valid"));
        let (a, b) = (year_span(year - 1), year_span(year));
        let mut market = Vec::new();
        for c in panel.countries() {
            let fx = panel.series(&c, vars::VOL_FX);
            let cf = panel.series(&c, vars::VOL_CF);
            match market_based_resilience(&fx, &cf, a, b) {
                Ok(change) => market.push(MarketRow { country: c, period_a: (year - 1).to_string(), period_b: year.to_string(), change_pct: change }),
                Err(e) => log::warn!("casestudy: no market-based measure for {c}: {e}"),
            }
        }
        write_csv(&io.output(files::SUPPORTING), &supporting)?;
        write_csv(&io.output(files::MARKET), &market)
    }
}

/// Controls that survive the fixed effects. With time effects a control
/// that is identical across countries in every period is absorbed; with
/// country effects one that is constant over time for every country is.
pub fn usable_controls(panel: &PanelTable, time_effects: bool, country_effects: bool) -> (Vec<String>, Vec<String>) {
    let countries = panel.countries();
    let dates = panel.dates();
    let mut keep = Vec::new();
    let mut absorbed = Vec::new();
    for c in vars::CONTROLS {
        let varies = |vals: Vec<f64>| vals.windows(2).any(|w| w[0] != w[1]);
        let across_countries = dates.iter().any(|d| varies(countries.iter().filter_map(|k| panel.get(k, *d, c)).collect()));
        let over_time = countries.iter().any(|k| varies(panel.series_values(k, c)));
        let gone = (time_effects && !across_countries) || (country_effects && !over_time) || !(across_countries || over_time);
        if gone {
            absorbed.push(c.to_string());
        } else {
            keep.push(c.to_string());
        }
    }
    (keep, absorbed)
}

fn summarize(
    name: &str,
    factor: Option<&str>,
    fit: &FglsFit,
    design: &fxres_core::fgls::Design,
    controls: &[String],
    absorbed: &[String],
) -> std::result::Result<FitSummary, fxres_core::fgls::FglsError> {
    let shock = vars::VOL_CF;
    let (gamma2, v_gamma, mean, min, max) = match factor {
        Some(f) => {
            let inter = interaction_name(shock, f);
            let v = fit.covariance_of(&[shock, &inter])?;
            let col = design.column(f).expect("factor column");
            let xs = design.x.column(col);
            (
                Some(fit.coef(&inter)?),
                vec![vec![v[(0, 0)], v[(0, 1)]], vec![v[(1, 0)], v[(1, 1)]]],
                Some(xs.mean()),
                Some(xs.min()),
                Some(xs.max()),
            )
        }
        None => (None, vec![vec![fit.covariance_of(&[shock])?[(0, 0)]]], None, None, None),
    };
    Ok(FitSummary {
        regression: name.into(),
        factor: factor.map(str::to_string),
        gamma1: fit.coef(shock)?,
        gamma2,
        v_gamma,
        factor_mean: mean,
        factor_min: min,
        factor_max: max,
        controls: controls.to_vec(),
        dropped_controls: absorbed.to_vec(),
        n_countries: fit.n_countries(),
        n_periods: fit.n_periods(),
        shrinkage: fit.shrinkage,
    })
}

fn wald_rows_for(
    name: &str,
    factor: Option<&str>,
    fit: &FglsFit,
    mean: Option<f64>,
) -> std::result::Result<Vec<WaldRow>, fxres_core::fgls::FglsError> {
    let shock = vars::VOL_CF;
    let row = |test: &str, (r, v): (DMatrix<f64>, nalgebra::DVector<f64>)| -> std::result::Result<WaldRow, fxres_core::fgls::FglsError> {
        let t = wald_test(fit, &r, &v)?;
        Ok(WaldRow { regression: name.into(), test: test.into(), statistic: t.statistic, df: t.df, p_value: t.p_value })
    };
    match factor {
        Some(f) => {
            let inter = interaction_name(shock, f);
            Ok(vec![
                row("total_effect_at_mean", total_effect_restriction(fit, shock, &inter, mean.unwrap_or(0.0))?)?,
                row("shock_and_interaction_zero", joint_zero_restriction(fit, &[shock, &inter])?)?,
            ])
        }
        None => Ok(vec![row("shock_zero", joint_zero_restriction(fit, &[shock])?)?]),
    }
}

fn gamma_block(f: &FitSummary) -> std::result::Result<(f64, DMatrix<f64>), String> {
    let g2 = f.gamma2.ok_or_else(|| format!("regression {} has no interaction", f.regression))?;
    if f.v_gamma.len() != 2 || f.v_gamma.iter().any(|r| r.len() != 2) {
        return Err(format!("regression {}: covariance block is not 2 x 2", f.regression));
    }
    Ok((g2, DMatrix::from_fn(2, 2, |i, j| f.v_gamma[i][j])))
}
