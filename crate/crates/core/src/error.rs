use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

fn at_step(step: &Option<usize>) -> String {
    match step {
        Some(i) => format!(" at step {i}"),
        None => String::new(),
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite filter input{}", at_step(.step))]
    NonFiniteInput { step: Option<usize> },

    #[error("degenerate forecast variance{}", at_step(.step))]
    DegenerateForecast { step: Option<usize> },

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition {
        from: crate::tempo_model::ExpandedNode,
        to: crate::tempo_model::ExpandedNode,
    },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("particle collapse at step {step}")]
    ParticleCollapse { step: usize },

    #[error("no resampling needed: {count} weights fit in a beam of {beam}")]
    NoResamplingNeeded { count: usize, beam: usize },

    #[error("empty particle set")]
    EmptyParticleSet,

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {path}{}: {msg}", .row.map(|r| format!(" row {r}")).unwrap_or_default())]
    Parse {
        path: String,
        row: Option<usize>,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a step index to filter errors raised by a single step.
    pub(crate) fn at(self, step: usize) -> Self {
        match self {
            Error::NonFiniteInput { .. } => Error::NonFiniteInput { step: Some(step) },
            Error::DegenerateForecast { .. } => Error::DegenerateForecast { step: Some(step) },
            other => other,
        }
    }

    /// Short category name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::LengthMismatch { .. } | Error::DimensionMismatch(_) | Error::InvalidInput(_) => "data",
            Error::InvalidParameters(_) => "parameters",
            Error::NonFiniteInput { .. }
            | Error::DegenerateForecast { .. }
            | Error::IllegalTransition { .. }
            | Error::ParticleCollapse { .. }
            | Error::NoResamplingNeeded { .. }
            | Error::EmptyParticleSet
            | Error::FitFailed(_) => "model",
        }
    }

    /// Process exit code for the command-line tool. `2` is reserved for
    /// usage errors.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "io" => 3,
            "parse" => 4,
            "data" => 5,
            "parameters" => 6,
            _ => 7,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
