//! Structural panel VARX: per-country estimation, recursive identification,
//! common / idiosyncratic shock decomposition, impulse responses, and
//! sign-restricted rotation draws.

use thiserror::Error;

mod identify;
mod irf;
mod pedroni;
mod sign;
mod varx;

pub use identify::{cholesky_identify, StructuralId};
pub use irf::{
    aggregate_irf_quantiles, companion_matrix, cumulative_irf, irf, irf_matrices, is_stable, shock_weighted_aggregate,
    spectral_radius, QuantileBands, ResponsePath,
};
pub use pedroni::{decomposed_irf, pedroni_decompose, CountryEndog, CountryShocks, DecomposedIrf, ShockDecomposition, ShockType};
pub use sign::{uhlig_sign_irf, AcceptedDraw, Sign, SignOptions, SignRestriction, SignSpec, SignIrfResult};
pub use varx::{estimate_varx, VarxModel, VarxOptions};

use crate::linalg::LinalgError;

/// Position of capital-flow volatility in the endogenous vector.
pub const CF: usize = 0;
/// Position of FX volatility in the endogenous vector.
pub const FX: usize = 1;

pub const DEFAULT_LAGS: usize = 4;
pub const DEFAULT_HORIZON: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpvarError {
    #[error("series too short: {len} observations, need more than {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("singular VARX design: {0}")]
    SingularDesign(LinalgError),
    #[error("residual covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("need at least {required} countries, got {got}")]
    TooFewCountries { got: usize, required: usize },
    #[error("countries do not share a common time span")]
    SpanMismatch,
    #[error("no decomposition available for country {0}")]
    MissingDecomposition(String),
    #[error("paths have different horizons")]
    HorizonMismatch,
    #[error("weights are all zero")]
    ZeroWeights,
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("no rotation satisfied the sign restrictions in {draws} draws")]
    NoAcceptedDraws { draws: usize },
    #[error("exogenous block has {got} rows, expected {expected}")]
    ExogLength { got: usize, expected: usize },
}
