use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("config constraint violated: {0}")]
    Constraint(&'static str),
    #[error("unsupported layout: {0} cells (only the 7-cell hexagon, or a single isolated cell, is supported)")]
    UnsupportedLayout(usize),
    #[error("covariance factorization failed even with diagonal loading {0:e}")]
    Factorization(f64),
    #[error("port {port} out of range for {num_ports} ports")]
    PortOutOfRange { port: usize, num_ports: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("fairness index undefined: all values are zero")]
    AllZero,
    #[error("policy table: {0}")]
    Policy(String),
    #[error("run for seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
