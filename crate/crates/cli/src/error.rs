use std::path::Path;

use thiserror::Error;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("stage `{stage}` is stochastic and needs a seed (set `seed` in the config or pass --seed)")]
    MissingSeed { stage: &'static str },
    #[error("stage `{stage}` requires stage `{requires}` to have run first")]
    MissingDependency { stage: &'static str, requires: &'static str },
    #[error("nothing to report: no stage has completed in this output directory")]
    NoOutputs,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("stage `{stage}`: {source}")]
    Stage { stage: &'static str, source: BoxError },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }

    pub fn stage(stage: &'static str, source: impl Into<BoxError>) -> Self {
        PipelineError::Stage { stage, source: source.into() }
    }
}
