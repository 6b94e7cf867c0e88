use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("topology mismatch: expected `{expected}`, found `{found}`")]
    TopologyMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("degenerate {feature} aperture: driver aperture {aperture:e} is below {epsilon:e}")]
    DegenerateAperture {
        feature: String,
        aperture: f64,
        epsilon: f64,
    },

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("foreground mask is empty")]
    EmptyForeground,

    #[error("negative edit gain {gain} for {feature}")]
    NegativeGain { feature: String, gain: f64 },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Image { path: String, message: String },
}

impl Error {
    pub fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    /// Process exit status for the batch CLI: 2 input/validation, 3 fitting
    /// degeneracy, 4 degenerate retarget aperture, 1 internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Frame { source, .. } => source.exit_code(),
            Error::DegenerateAlignment(_) | Error::Solve(_) => 3,
            Error::DegenerateAperture { .. } => 4,
            Error::InvariantViolation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn topology(expected: &str, found: &str) -> Self {
        Error::TopologyMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
