use thiserror::Error;

/// Errors shared across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested experiment sits in the wrong existence regime.
    #[error("regime refusal: {reason} (h={h}, d={d}, d/p={d_over_p}, margin={margin})")]
    RegimeRefusal {
        h: f64,
        d: usize,
        d_over_p: f64,
        margin: f64,
        reason: String,
    },

    /// Spatial grid cannot resolve the requested operation.
    #[error("grid too coarse: cell width {dx} exceeds {required} required for {context}")]
    GridTooCoarse {
        dx: f64,
        required: f64,
        context: String,
    },

    /// A numerical procedure failed to converge or produced non-finite output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code contract: 2 regime refusal, 3 numerical failure,
    /// 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::RegimeRefusal { .. } => 2,
            Error::Numerical(_) | Error::GridTooCoarse { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
