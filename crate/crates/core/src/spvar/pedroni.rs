use nalgebra::{DMatrix, DVector};

use super::{cholesky_identify, estimate_varx, irf_matrices, SpvarError, StructuralId, VarxModel, VarxOptions};
use crate::exec::Execution;
use crate::stats;

/// Endogenous (`T x n`) and optional exogenous (`T x m`) data of one member.
#[derive(Debug, Clone)]
pub struct CountryEndog {
    pub country_id: String,
    pub endog: DMatrix<f64>,
    pub exog: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShockType {
    Composite,
    Global,
    Idiosyncratic,
}

impl ShockType {
    pub const ALL: [ShockType; 3] = [ShockType::Composite, ShockType::Global, ShockType::Idiosyncratic];

    pub fn name(self) -> &'static str {
        match self {
            ShockType::Composite => "composite",
            ShockType::Global => "global",
            ShockType::Idiosyncratic => "idiosyncratic",
        }
    }
}

/// One member's composite structural shocks split into a loading on the
/// same-labelled common shock plus an idiosyncratic remainder.
#[derive(Debug, Clone)]
pub struct CountryShocks {
    pub country_id: String,
    pub model: VarxModel,
    pub id: StructuralId,
    /// `T_eff x n`
    pub composite: DMatrix<f64>,
    /// Diagonal of the loading matrix.
    pub loadings: DVector<f64>,
    /// `T_eff x n`
    pub idiosyncratic: DMatrix<f64>,
    /// Sample correlation between common and idiosyncratic shock, per shock.
    pub common_idio_correlation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ShockDecomposition {
    pub common_model: VarxModel,
    pub common_id: StructuralId,
    /// `T_eff x n` structural shocks of the cross-sectional-average VAR.
    pub common: DMatrix<f64>,
    pub countries: Vec<CountryShocks>,
}

impl ShockDecomposition {
    pub fn country(&self, country_id: &str) -> Result<&CountryShocks, SpvarError> {
        self.countries
            .iter()
            .find(|c| c.country_id == country_id)
            .ok_or_else(|| SpvarError::MissingDecomposition(country_id.to_string()))
    }

    /// Decomposed responses for one member.
    pub fn irf_for(&self, country_id: &str, shock: usize, horizon: usize) -> Result<DecomposedIrf, SpvarError> {
        Ok(decomposed_irf(self.country(country_id)?, &self.common, shock, horizon))
    }
}

/// Common / idiosyncratic decomposition of members' structural shocks.
///
/// 1. cross-sectional average of the endogenous (and exogenous) series;
/// 2. VARX + recursive identification on the averages gives common shocks;
/// 3. the same on each member gives composite shocks;
/// 4. loading `l_k` = no-intercept LS slope of composite shock `k` on common shock `k`;
/// 5. idiosyncratic = composite - loading * common.
pub fn pedroni_decompose(
    panel: &[CountryEndog],
    opts: VarxOptions,
    ordering: &[&str],
    exec: Execution,
) -> Result<ShockDecomposition, SpvarError> {
    if panel.len() < 3 {
        return Err(SpvarError::TooFewCountries { got: panel.len(), required: 3 });
    }
    let (t, n) = panel[0].endog.shape();
    let m = panel[0].exog.as_ref().map(|x| x.ncols());
    if panel.iter().any(|c| c.endog.shape() != (t, n) || c.exog.as_ref().map(|x| x.ncols()) != m) {
        return Err(SpvarError::SpanMismatch);
    }
    let inv_n = 1.0 / panel.len() as f64;
    let avg_endog = panel.iter().fold(DMatrix::zeros(t, n), |acc, c| acc + &c.endog) * inv_n;
    let avg_exog = match m {
        Some(m) => {
            let mut acc = DMatrix::zeros(t, m);
            for c in panel {
                let x = c.exog.as_ref().expect("checked");
                if x.nrows() != t {
                    return Err(SpvarError::ExogLength { got: x.nrows(), expected: t });
                }
                acc += x;
            }
            Some(acc * inv_n)
        }
        None => None,
    };
    let common_model = estimate_varx("cross-section average", &avg_endog, avg_exog.as_ref(), opts)?;
    let common_id = cholesky_identify(&common_model.sigma, ordering)?;
    let common = common_id.structural_shocks(&common_model.residuals);

    let fits = exec.map_slice(panel, |c| -> Result<CountryShocks, SpvarError> {
        let model = estimate_varx(&c.country_id, &c.endog, c.exog.as_ref(), opts)?;
        let id = cholesky_identify(&model.sigma, ordering)?;
        let composite = id.structural_shocks(&model.residuals);
        let mut loadings = DVector::zeros(n);
        let mut idiosyncratic = composite.clone();
        let mut corr = Vec::with_capacity(n);
        for k in 0..n {
            let g = common.column(k);
            let e = composite.column(k);
            let lambda = g.dot(&e) / g.norm_squared();
            loadings[k] = lambda;
            let idio = e - g * lambda;
            corr.push(stats::correlation(g.as_slice(), idio.as_slice()));
            idiosyncratic.set_column(k, &idio);
        }
        Ok(CountryShocks {
            country_id: c.country_id.clone(),
            model,
            id,
            composite,
            loadings,
            idiosyncratic,
            common_idio_correlation: corr,
        })
    });
    let countries = fits.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ShockDecomposition { common_model, common_id, common, countries })
}

/// Composite, global and idiosyncratic response paths (`(H+1) x n`) to
/// structural shock `shock`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedIrf {
    pub composite: DMatrix<f64>,
    pub global: DMatrix<f64>,
    pub idiosyncratic: DMatrix<f64>,
    /// Scale factors applied to the composite path.
    pub global_scale: f64,
    pub idiosyncratic_scale: f64,
}

impl DecomposedIrf {
    pub fn path(&self, shock_type: ShockType) -> &DMatrix<f64> {
        match shock_type {
            ShockType::Composite => &self.composite,
            ShockType::Global => &self.global,
            ShockType::Idiosyncratic => &self.idiosyncratic,
        }
    }
}

fn rms(v: nalgebra::DVectorView<'_, f64>) -> f64 {
    (v.norm_squared() / v.len() as f64).sqrt()
}

/// The global path is the composite path scaled by `loading * rms(common) /
/// rms(composite)`; the idiosyncratic path by `rms(idio) / rms(composite)`.
/// The two squared scales add to one, the one-SD analogue of
/// `composite = loading * common + idio`.
pub fn decomposed_irf(country: &CountryShocks, common: &DMatrix<f64>, shock: usize, horizon: usize) -> DecomposedIrf {
    let phis = irf_matrices(&country.model.coefficients, &country.id.b0, horizon);
    let n = country.model.n_vars();
    let composite = DMatrix::from_fn(horizon + 1, n, |h, i| phis[h][(i, shock)]);
    let comp_rms = rms(country.composite.column(shock));
    let (global_scale, idiosyncratic_scale) = if comp_rms > 0.0 {
        (
            country.loadings[shock] * rms(common.column(shock)) / comp_rms,
            rms(country.idiosyncratic.column(shock)) / comp_rms,
        )
    } else {
        (0.0, 0.0)
    };
    DecomposedIrf {
        global: &composite * global_scale,
        idiosyncratic: &composite * idiosyncratic_scale,
        composite,
        global_scale,
        idiosyncratic_scale,
    }
}
