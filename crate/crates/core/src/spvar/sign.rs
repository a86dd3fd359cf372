use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{irf_matrices, SpvarError, VarxModel, CF, FX};
use crate::exec::Execution;
use crate::linalg;
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

/// Response of variable `response` to structural shock `shock` must have
/// sign `sign` at every restricted horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignRestriction {
    pub shock: usize,
    pub response: usize,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignSpec {
    pub restrictions: Vec<SignRestriction>,
    /// Restrictions hold for `h = 0..=max_horizon`.
    pub max_horizon: usize,
}

impl SignSpec {
    /// CF-vol shock: CF response positive, FX unrestricted.
    /// FX-vol shock: both responses positive. Imposed on impact.
    pub fn capital_flow_fx() -> Self {
        SignSpec {
            restrictions: vec![
                SignRestriction { shock: CF, response: CF, sign: Sign::Positive },
                SignRestriction { shock: FX, response: CF, sign: Sign::Positive },
                SignRestriction { shock: FX, response: FX, sign: Sign::Positive },
            ],
            max_horizon: 0,
        }
    }

    fn column_ok(&self, irf: &[DMatrix<f64>], shock: usize, flip: f64) -> bool {
        self.restrictions.iter().filter(|r| r.shock == shock).all(|r| {
            (0..=self.max_horizon.min(irf.len() - 1)).all(|h| {
                let v = flip * irf[h][(r.response, shock)];
                match r.sign {
                    Sign::Positive => v > 0.0,
                    Sign::Negative => v < 0.0,
                }
            })
        })
    }

    /// Whether every restriction holds for the given responses.
    pub fn satisfied_by(&self, irf: &[DMatrix<f64>]) -> bool {
        let n = irf[0].ncols();
        (0..n).all(|j| self.column_ok(irf, j, 1.0))
    }
}

#[derive(Debug, Clone)]
pub struct SignOptions {
    pub draws: usize,
    pub seed: u64,
    pub horizon: usize,
    /// Redraw reduced-form parameters from their Normal-inverse-Wishart
    /// posterior on each draw; otherwise rotate around the point estimate.
    pub posterior: bool,
    pub exec: Execution,
}

impl Default for SignOptions {
    fn default() -> Self {
        SignOptions { draws: 1000, seed: 0, horizon: super::DEFAULT_HORIZON, posterior: false, exec: Execution::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedDraw {
    pub draw: usize,
    /// Rotated impact matrix.
    pub impact: DMatrix<f64>,
    /// `Phi_0 .. Phi_H` under the accepted rotation.
    pub irf: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignIrfResult {
    pub accepted: Vec<AcceptedDraw>,
    pub attempted: usize,
    pub acceptance_rate: f64,
    /// Pointwise median of the FX response to the CF shock.
    pub median: Vec<f64>,
    /// Median minus / plus one pointwise standard deviation.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Median impact of the CF shock on CF volatility (the shock size).
    pub cf_shock_size: f64,
}

impl SignIrfResult {
    pub fn response_path(draw: &AcceptedDraw, response: usize, shock: usize) -> Vec<f64> {
        draw.irf.iter().map(|m| m[(response, shock)]).collect()
    }
}

fn posterior_draw<R: Rng + ?Sized>(model: &VarxModel, rng: &mut R) -> Option<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let n = model.n_vars();
    let k = model.n_regressors();
    let t = model.n_obs();
    let dof = t.checked_sub(k)?;
    if dof < n {
        return None;
    }
    // Sigma ~ IW(S, dof) via a Bartlett draw of W ~ Wishart(S^{-1}, dof).
    let s = model.residuals.transpose() * &model.residuals;
    let s_inv = linalg::spd_inverse(&s).ok()?;
    let l = linalg::cholesky_lower(&s_inv).ok()?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new((dof - i) as f64).ok()?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = &l * a;
    let w = &la * la.transpose();
    let sigma = linalg::spd_inverse(&w).ok()?;
    // vec(B) | Sigma ~ N(vec(B_hat), Sigma kron (X'X)^{-1})
    let px = linalg::cholesky_lower(&model.xtx_inv).ok()?;
    let ps = linalg::cholesky_lower(&sigma).ok()?;
    let z = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = &model.beta + px * z * ps.transpose();
    let (_, coefs, _) = VarxModel::unstack(&beta, n, model.lags);
    Some((coefs, sigma))
}

/// Rotation draws `B0 Q` with Haar-distributed `Q`, keeping those whose
/// responses satisfy `spec`. A column whose negation satisfies its
/// restrictions is flipped. Draw `d` uses its own seeded stream.
pub fn uhlig_sign_irf(model: &VarxModel, spec: &SignSpec, opts: &SignOptions) -> Result<SignIrfResult, SpvarError> {
    let n = model.n_vars();
    let b0_hat = linalg::cholesky_lower(&model.sigma).map_err(|_| SpvarError::NotPositiveDefinite)?;
    let tries = opts.exec.map(opts.draws, |d| -> Option<AcceptedDraw> {
        let mut r = rng::sub_rng(opts.seed, &["sign".into(), model.country_id.as_str().into(), d.into()]);
        let (coefs, b0) = if opts.posterior {
            let (c, s) = posterior_draw(model, &mut r)?;
            (c, linalg::cholesky_lower(&s).ok()?)
        } else {
            (model.coefficients.clone(), b0_hat.clone())
        };
        let q = linalg::haar_orthogonal(n, &mut r);
        let mut impact = b0 * q;
        let probe = irf_matrices(&coefs, &impact, spec.max_horizon.min(opts.horizon));
        for j in 0..n {
            if spec.column_ok(&probe, j, 1.0) {
                continue;
            }
            if spec.column_ok(&probe, j, -1.0) {
                impact.column_mut(j).neg_mut();
            } else {
                return None;
            }
        }
        let irf = irf_matrices(&coefs, &impact, opts.horizon);
        Some(AcceptedDraw { draw: d, impact, irf })
    });
    let accepted: Vec<AcceptedDraw> = tries.into_iter().flatten().collect();
    if accepted.is_empty() {
        return Err(SpvarError::NoAcceptedDraws { draws: opts.draws });
    }
    let mut median = Vec::with_capacity(opts.horizon + 1);
    let mut lower = Vec::with_capacity(opts.horizon + 1);
    let mut upper = Vec::with_capacity(opts.horizon + 1);
    for h in 0..=opts.horizon {
        let col: Vec<f64> = accepted.iter().map(|a| a.irf[h][(FX, CF)]).collect();
        let med = stats::median(&col);
        let sd = if col.len() > 1 { stats::sample_sd(&col) } else { 0.0 };
        median.push(med);
        lower.push(med - sd);
        upper.push(med + sd);
    }
    let cf_shock_size = stats::median(&accepted.iter().map(|a| a.impact[(CF, CF)]).collect::<Vec<_>>());
    Ok(SignIrfResult {
        attempted: opts.draws,
        acceptance_rate: accepted.len() as f64 / opts.draws as f64,
        accepted,
        median,
        lower,
        upper,
        cf_shock_size,
    })
}
