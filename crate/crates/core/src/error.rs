use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |O - O^dag| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U^dag U - 1| = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("state is not pure (purity = {purity})")]
    NotPure { purity: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("index {index} out of range for {len} factors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("environment basis is not orthonormal and complete: {0}")]
    IncompleteBasis(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("branch {branch} has zero rate; displacement statistics undefined")]
    ZeroRate { branch: usize },

    #[error("representation too coarse: {0}")]
    Unresolved(String),

    #[error("field mass {mass} below the required minimum {minimum}")]
    MassDeficit { mass: f64, minimum: f64 },

    #[error("closed moment hierarchy unavailable for potential `{0}`")]
    UnsupportedPotential(String),

    #[error("model is not in Lindblad form: {0}")]
    NotLindbladForm(String),

    #[error("mismatched output times: {0}")]
    MismatchedTimes(String),

    #[error("numerical contract violated: {0}")]
    NumericalContract(String),

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    /// Process exit code: 2 for invalid input, 3 for a violated numerical
    /// contract, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Experiment { source, .. } => source.exit_code(),
            Error::NumericalContract(_) | Error::Unresolved(_) | Error::MassDeficit { .. } | Error::ZeroRate { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }

    pub fn in_experiment(self, experiment: &str) -> Self {
        Error::Experiment { experiment: experiment.to_string(), source: Box::new(self) }
    }
}
