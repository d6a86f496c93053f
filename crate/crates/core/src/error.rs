use thiserror::Error;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("insufficient pool rows: need {needed} {class} rows, pool has {available}")]
    Capacity {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("matrix has a zero spectrum")]
    ZeroSpectrum,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("power iteration did not converge (residual {residual:e}, eigenvalue {eigenvalue:e})")]
    NotConverged { residual: f64, eigenvalue: f64 },

    #[error("empty bag {0}")]
    EmptyBag(usize),

    #[error("empty {side} confident selection")]
    EmptySelection { side: &'static str },

    #[error("embeddings unavailable for a linear scorer")]
    EmbeddingUnavailable,

    #[error("no threshold keeps the component tail above {min_tail}")]
    UnstableTail { min_tail: f64 },

    #[error("empty hold-out split for {0}")]
    EmptyHoldout(&'static str),

    #[error("unstable mutual-model inversion: product of proportions {product}")]
    UnstableInversion { product: f64 },

    #[error("singular transition: denominator vanishes on [0, 1]")]
    SingularTransition,

    #[error("pair priors are equal ({0}); two-bag risk is undefined")]
    EqualPairPriors(f64),

    #[error("bag {bag}: {source}")]
    Bag { bag: usize, source: Box<Error> },

    #[error("no pair survived estimation")]
    NoSurvivingPairs,

    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn in_bag(self, bag: usize) -> Self {
        Error::Bag {
            bag,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
