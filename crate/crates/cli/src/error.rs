use std::path::PathBuf;

use ctxqa_core::bench::BenchError;
use ctxqa_core::eval::EvalError;
use ctxqa_core::gateway::GatewayError;
use ctxqa_core::record::RecordError;
use ctxqa_core::tuneset::TuneError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input data, configuration or arguments.
    #[error("{0}")]
    Data(String),
    #[error("endpoint error: {0}")]
    Endpoint(#[from] GatewayError),
    /// Every request of a batch failed.
    #[error("endpoint outage: {0}")]
    Outage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Endpoint(_) | CliError::Outage(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io(source) => CliError::Io { path: PathBuf::from("<output>"), source },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Record(r) => r.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::TotalOutage(g) => CliError::Endpoint(g),
            other => CliError::Data(other.to_string()),
        }
    }
}
