use thiserror::Error;

/// Errors surfaced by the library. The CLI maps `Input`/`Domain` to exit code 2
/// and everything else to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmdError {
    #[error("input error: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid partition left a part with nonzero supply after {attempts} shifts")]
    PartitionRetriesExhausted { attempts: usize },
    #[error("sampler stalled after {attempts} rejection attempts (budget {budget})")]
    SamplerStall { attempts: u64, budget: u64 },
    /// A complement pair beat the envelope, so the retrieved prefix set
    /// missed a pair at level at most `t`.
    #[error("close-pairs prefix at level {t} missed pair ({i}, {j})")]
    PrefixMiss { t: i64, i: usize, j: usize },
    #[error("internal error: {0}")]
    Internal(String),
}

impl EmdError {
    pub fn input(msg: impl Into<String>) -> Self {
        EmdError::Input(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        EmdError::Domain(msg.into())
    }

    /// True for errors caused by the caller's data rather than by a run.
    pub fn is_input(&self) -> bool {
        matches!(self, EmdError::Input(_) | EmdError::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, EmdError>;
