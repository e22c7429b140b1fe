use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid response {value} for {kind} model")]
    InvalidResponse { kind: &'static str, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("non-finite objective at the initial point")]
    NonFiniteObjective,

    #[error("Hessian singular even after maximum damping escalation")]
    SingularHessian,

    #[error("anchor fit has not converged")]
    AnchorNotConverged,

    #[error("underdetermined linearized problem: d = {d} exceeds n = {n}")]
    Underdetermined { n: usize, d: usize },

    #[error("empty objective")]
    EmptyObjective,

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("LOO refit failed at index {0}")]
    LooRefitFailed(usize),

    #[error("ALO breakdown at index {0}")]
    AloBreakdown(usize),

    #[error("ALO Hessian is not positive definite")]
    SingularAloHessian,

    #[error("singular projected Gram matrix")]
    SingularProjectedGram,

    #[error("projection dimension k = {k} outside 1..={d}")]
    ProjectionDimension { k: usize, d: usize },

    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),

    #[error("truncated CIFAR file: {len} bytes is not a multiple of 3073")]
    TruncatedCifar { len: usize },

    #[error("label byte {label} > 9 in record {record}")]
    BadCifarLabel { record: usize, label: u8 },

    #[error("identical classes")]
    IdenticalClasses,

    #[error("class subset is empty")]
    EmptySubset,

    #[error("top-k size {k} exceeds the {available} available train indices")]
    TopKTooLarge { k: usize, available: usize },

    #[error("tables do not cover the same (train, test) grid")]
    GridMismatch,

    #[error("non-positive median at axis value {0}; log undefined")]
    NonPositiveMedian(f64),

    #[error("scaling fit needs {0}")]
    ScalingInput(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
