//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by score storage, training, and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {msg}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate cell for (example {example}, run {run})")]
    DuplicateCell { example: usize, run: usize },

    #[error("missing cell for (example {example}, run {run})")]
    MissingCell { example: usize, run: usize },

    #[error("non-finite value at (example {example}, run {run})")]
    NonFinite { example: usize, run: usize },

    #[error("example id gap: expected id {expected}")]
    IdGap { expected: usize },

    #[error("missing metadata sidecar {path}")]
    MissingSidecar { path: PathBuf },

    #[error("metadata sidecar {path}: {msg}")]
    BadSidecar { path: PathBuf, msg: String },

    #[error("empty run subset")]
    EmptyRunSubset,

    #[error("run index {index} out of range (matrix has {n_runs} runs)")]
    RunIndexOutOfRange { index: usize, n_runs: usize },

    #[error("shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("invalid configuration: {msg}")]
    InvalidConfig { msg: String },

    #[error("run {run} (seed {seed}) diverged at epoch {epoch}: mean loss {mean_loss}")]
    Diverged {
        run: usize,
        seed: i64,
        epoch: usize,
        mean_loss: f64,
    },

    #[error("run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("score {kind} failed: {source}")]
    ScoreFailed {
        kind: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no checkpoint capture at epoch {requested} (trace checkpoint epoch: {actual:?})")]
    MissingCheckpoint {
        requested: usize,
        actual: Option<usize>,
    },

    #[error("{found} input-gradient snapshots present, at least 2 required")]
    InsufficientSnapshots { found: usize },

    #[error("correlation undefined for constant input")]
    ConstantInput,

    #[error("need at least {required} runs, found {found}")]
    InsufficientRuns { required: usize, found: usize },

    #[error("2k = {two_k} run subsets requested but only {n_runs} runs available")]
    SubsetTooLarge { two_k: usize, n_runs: usize },

    #[error("bin size {bin_size} exceeds {n_examples} examples")]
    BinTooLarge { bin_size: usize, n_examples: usize },

    #[error("at least {required} score kinds required, found {found}")]
    TooFewKinds { required: usize, found: usize },

    #[error("fingerprint labels contain a single class")]
    SingleClassLabels,

    #[error("selection size k={k} exceeds {n} examples")]
    SelectionTooLarge { k: usize, n: usize },

    #[error("evaluation runs overlap training runs (shared seeds: {seeds:?})")]
    TrainEvalOverlap { seeds: Vec<i64> },

    #[error("model has zero trainable parameters in {layer}")]
    ZeroSizeLayer { layer: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
