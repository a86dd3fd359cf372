//! Monte Carlo replications of the interaction regression.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::fgls::{self, build_design, fgls_fit, FglsOptions, RegressionSpec};
use crate::resilience::{threshold, threshold_se, ThresholdQuery};
use crate::rng;
use crate::stats;
use crate::synth::{interaction_sample, InteractionDgp, SynthError};

const Y: &str = "Y";
const SHOCK: &str = "C";
const FACTOR: &str = "M";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub gamma1: f64,
    pub gamma2: f64,
    pub threshold: f64,
    pub threshold_se: f64,
    /// p-value of the total-effect Wald test at the sample-mean factor.
    pub total_effect_p: f64,
    /// p-value of `gamma1 + gamma2 * m_true = 0` at a supplied evaluation point.
    pub point_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replications: Vec<Replication>,
    pub failures: usize,
    pub mean_gamma1: f64,
    pub mean_gamma2: f64,
    pub mean_threshold_se: f64,
    pub sd_threshold: f64,
}

impl McSummary {
    pub fn rejection_rate(&self, alpha: f64, point: bool) -> f64 {
        let hits = self
            .replications
            .iter()
            .filter(|r| if point { r.point_p < alpha } else { r.total_effect_p < alpha })
            .count();
        hits as f64 / self.replications.len() as f64
    }
}

/// One replication: draw, fit with two-way effects, derive threshold and tests.
pub fn replicate(dgp: &InteractionDgp, seed: u64, rep: usize, theta: f64, point: f64, opts: FglsOptions) -> Result<Replication, String> {
    let mut r = rng::sub_rng(seed, &["mc".into(), rep.into()]);
    let sample = interaction_sample(dgp, &mut r).map_err(|e: SynthError| e.to_string())?;
    let panel = sample.to_panel(Y, SHOCK, FACTOR).map_err(|e| e.to_string())?;
    let mut spec = RegressionSpec::moderated(FACTOR, &[]);
    spec.dependent = Y.into();
    spec.shock = SHOCK.into();
    let inter = spec.interaction_name(FACTOR);
    let design = build_design(&panel, &spec).map_err(|e| e.to_string())?;
    let fit = fgls_fit(&design, opts).map_err(|e| e.to_string())?;
    let q = ThresholdQuery::from_fit(&fit, SHOCK, &inter, theta).map_err(|e| e.to_string())?;
    let (t, _) = threshold(&q).map_err(|e| e.to_string())?;
    let se = threshold_se(&q).map_err(|e| e.to_string())?;
    let mf = design.column_mean(FACTOR).expect("factor column");
    let (rm, vm) = fgls::total_effect_restriction(&fit, SHOCK, &inter, mf).map_err(|e| e.to_string())?;
    let total_effect_p = fgls::wald_test(&fit, &rm, &vm).map_err(|e| e.to_string())?.p_value;
    let (rp, vp) = fgls::total_effect_restriction(&fit, SHOCK, &inter, point).map_err(|e| e.to_string())?;
    let point_p = fgls::wald_test(&fit, &rp, &vp).map_err(|e| e.to_string())?.p_value;
    Ok(Replication { gamma1: q.gamma1, gamma2: q.gamma2, threshold: t, threshold_se: se, total_effect_p, point_p })
}

/// `reps` independent replications; replication `r` draws from its own
/// derived stream, so results do not depend on `exec`.
pub fn interaction_monte_carlo(
    dgp: &InteractionDgp,
    reps: usize,
    seed: u64,
    theta: f64,
    point: f64,
    opts: FglsOptions,
    exec: Execution,
) -> McSummary {
    let outcomes = exec.map(reps, |r| replicate(dgp, seed, r, theta, point, opts));
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let replications: Vec<Replication> = outcomes.into_iter().filter_map(Result::ok).collect();
    let col = |f: fn(&Replication) -> f64| replications.iter().map(f).collect::<Vec<_>>();
    McSummary {
        mean_gamma1: stats::mean(&col(|r| r.gamma1)),
        mean_gamma2: stats::mean(&col(|r| r.gamma2)),
        mean_threshold_se: stats::mean(&col(|r| r.threshold_se)),
        sd_threshold: stats::sample_sd(&col(|r| r.threshold)),
        replications,
        failures,
    }
}
