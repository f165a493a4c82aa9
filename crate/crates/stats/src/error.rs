use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample too small: need at least {needed} observations, got {got}")]
    TooSmall { needed: usize, got: usize },

    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },

    #[error("group {0} is empty")]
    EmptyGroup(usize),

    #[error("observations must be finite")]
    NonFinite,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
