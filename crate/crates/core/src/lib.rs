//! Laboratory for per-example difficulty scores over replicated training
//! runs: an instrumented desk-scale trainer, the score catalog, and the
//! variance / correlation / inductive-bias analyses built on top.

pub mod error;
pub mod matrix;
pub mod scores;
pub mod stability;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::{
    import_external_scores, load_matrix, mean_over_runs, rank_examples, save_matrix, ExampleId,
    Polarity, ScoreKind, ScoreMatrix, ScoreVector,
};
pub use trainer::{
    build_model, run_replicates, run_replicates_with, run_training, synthetic_blobs, BlobSpec,
    Dataset, ExperimentConfig, InputGradSource, InputShape, LabelSet, ModelConfig, ModelFamily,
    TraceStore,
};
