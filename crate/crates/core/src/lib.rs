//! Econometrics for capital-flow volatility and exchange-rate volatility.
//!
//! The crate covers the full estimation chain: volatility measures, K-means
//! grouping of countries by fundamentals, structural panel VARs with a
//! common/idiosyncratic shock split and sign-restricted robustness draws,
//! panel diagnostics (LLC, Dumitrescu-Hurlin), two-way fixed-effects FGLS
//! with interaction terms, and threshold / resilience scoring.
//!
//! Data-parallel loops (Monte Carlo replications, K-means restarts, rotation
//! draws, per-country fits) go through [`exec::Execution`]. With the
//! `parallel` feature (on by default) they run on rayon; without it, or with
//! [`exec::Execution::Sequential`], they run in order. Both paths give
//! identical results because every task derives its own seed from its index.

pub mod clustering;
pub mod diagnostics;
pub mod exec;
pub mod fgls;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod resilience;
pub mod rng;
pub mod spvar;
pub mod stats;
pub mod synth;
pub mod vars;
pub mod volatility;

pub use exec::Execution;
pub use panel::{Frequency, PanelTable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
