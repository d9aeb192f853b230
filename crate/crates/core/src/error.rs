use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("document {doc} has length {length}, at least 3 words are required")]
    InsufficientLength { doc: usize, length: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank deficiency: requested {requested} components but singular value {index} is {value:e} (largest {largest:e}, tolerance {tolerance:e})")]
    RankDeficient {
        requested: usize,
        index: usize,
        value: f64,
        largest: f64,
        tolerance: f64,
    },

    #[error("component {component} is unrecoverable: eigenvalue {lambda:e} is below tolerance {tolerance:e}")]
    UnrecoverableComponent {
        component: usize,
        lambda: f64,
        tolerance: f64,
    },

    #[error("degenerate spectrum: eigenvalue gap {gap:e} below safeguard {threshold:e}; use finite-difference gradients instead")]
    DegenerateSpectrum { gap: f64, threshold: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::RankDeficient { .. }
            | Error::UnrecoverableComponent { .. }
            | Error::DegenerateSpectrum { .. }
            | Error::Numeric(_)
            | Error::DegenerateData(_) => true,
            Error::AtIteration { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
