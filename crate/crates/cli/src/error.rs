use std::fmt;

use q2d_core::corpus_io::CorpusError;
use q2d_core::dense_retrieval::DenseError;
use q2d_core::evaluation::EvalError;
use q2d_core::pipeline::PipelineError;
use q2d_core::query_expansion::ExpansionError;
use q2d_core::sparse_retrieval::IndexError;
use q2d_core::training_objectives::ObjectiveError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, settings or mode/path combinations (exit 2).
    Usage(String),
    /// Missing, malformed or inconsistent input files (exit 3).
    Data(anyhow::Error),
    /// Completion or embedding provider failures (exit 4).
    Provider(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Provider(_) => 4,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        CliError::Data(err.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Provider(e) => write!(f, "provider error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e)
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Invalid(m) => CliError::Usage(m),
            other => CliError::data(other),
        }
    }
}

impl From<DenseError> for CliError {
    fn from(e: DenseError) -> Self {
        match e {
            DenseError::Provider(_) => CliError::Provider(e.into()),
            other => CliError::data(other),
        }
    }
}

impl From<ExpansionError> for CliError {
    fn from(e: ExpansionError) -> Self {
        match e {
            ExpansionError::Provider { .. } | ExpansionError::EmptyCompletion => {
                CliError::Provider(e.into())
            }
            ExpansionError::PoolTooSmall { .. }
            | ExpansionError::Template(_)
            | ExpansionError::Params(_) => CliError::Usage(e.to_string()),
            other => CliError::data(other),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Usage(m),
            PipelineError::Expansion(e) => e.into(),
            PipelineError::Index(e) => e.into(),
            PipelineError::Dense(e) => e.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownMetric(_) | EvalError::Invalid(_) => CliError::Usage(e.to_string()),
            EvalError::Pipeline { .. } => CliError::data(e),
        }
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::Diverged(_) => CliError::data(e),
            other => CliError::Usage(other.to_string()),
        }
    }
}
