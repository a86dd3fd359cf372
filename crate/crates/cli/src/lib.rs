//! Staged pipeline behind the `fxres` command.

pub mod config;
pub mod error;
pub mod manifest;
pub mod records;
pub mod report;
pub mod stages;

pub use config::RunConfig;
pub use error::PipelineError;
pub use stages::{Pipeline, Stage};
