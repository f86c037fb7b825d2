use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid dilation weights: {0}")]
    Weights(String),

    #[error(
        "field X{field} is not homogeneous of degree 1: coefficient of d/dx{coordinate} has monomial {monomial:?} of weighted degree {found}, expected {expected}"
    )]
    NotHomogeneous {
        field: usize,
        coordinate: usize,
        monomial: Vec<u32>,
        found: u32,
        expected: u32,
    },

    #[error("Hormander rank at the origin is {rank}, expected {n}")]
    RankDeficient { rank: usize, n: usize },

    #[error("fields are linearly dependent or fewer than two ({0})")]
    DependentFields(String),

    #[error("Lie algebra did not close within {max_step} steps")]
    ClosureFailed { max_step: u32 },

    #[error("invalid group: {0}")]
    Group(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time {t} exceeds the admissible horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("property `{property}` violated at {witness}")]
    Violation { property: String, witness: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn violation(property: impl Into<String>, witness: impl Into<String>) -> Self {
        Error::Violation {
            property: property.into(),
            witness: witness.into(),
        }
    }

    /// Process exit code for this error class: 2 config, 3 numerical, 4 property violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Weights(_)
            | Error::NotHomogeneous { .. }
            | Error::RankDeficient { .. }
            | Error::DependentFields(_)
            | Error::Group(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            Error::ClosureFailed { .. } | Error::Numerical(_) | Error::HorizonExceeded { .. } => 3,
            Error::Violation { .. } => 4,
        }
    }
}
