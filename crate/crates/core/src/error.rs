use thiserror::Error;

/// Every failure the solvers and parsers can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("log-likelihood is not finite at iteration {iteration} ({value})")]
    NonFinite { iteration: usize, value: f64 },

    #[error("all {} restarts failed: {}", .0.len(), format_failures(.0))]
    AllRestartsFailed(Vec<(usize, String)>),

    #[error("individual {individual} has {heterozygous} heterozygous loci, more than the limit of {limit}")]
    Capacity {
        individual: String,
        heterozygous: usize,
        limit: usize,
    },

    #[error("covariance of component {component} is singular")]
    SingularCovariance { component: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn format_failures(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .map(|(i, m)| format!("restart {i}: {m}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
