use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("channel matrix is rank deficient (rank {rank} < {links} links)")]
    RankDeficient { rank: usize, links: usize },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("iteration did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
