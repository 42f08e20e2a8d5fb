//! Staged training and the continual tool stream.
//!
//! Training runs in three stages over the same parameter set: projector
//! alignment on general data, prompt routing (codebook and query encoder
//! only), and joint refinement. A plain fine-tune stage covers the baseline
//! recipes. On top of the stages sits the continual harness: tools arrive in
//! groups, a strategy decides what trains when, and the accuracy matrix
//! records how earlier groups fare after each new one.
//!
//! Every run is a pure function of its [`RunConfig`]: batches, splits,
//! initialization, and reservoir choices all derive from the configured seed,
//! so identical configs produce bit-identical artifacts. [`save_checkpoint`]
//! and [`load_checkpoint`] freeze and restore a run mid-schedule without
//! perturbing that equivalence.

mod checkpoint;
mod config;
mod continual;
mod stage;

pub use checkpoint::{
    load_checkpoint, load_matching, save_checkpoint, Checkpoint, CheckpointError, FORMAT_VERSION,
    MAGIC,
};
pub use config::{desk_preset, paper_preset, RunConfig, StagePlan};
pub use continual::{
    build_stream, build_stream_presplit, chunk_groups, evaluate_accuracy, load_groups,
    predict_calls, run_continual, validate_groups, ContinualOutcome, GroupData, GroupSpec,
    Reservoir, Strategy, Stream,
};
pub use stage::{
    init_pipeline, instance_backward, instance_loss, param_group, run_stage, run_stage_span,
    BatchSource, ParamGroup, Pipeline, Stage, StepLosses, StepRecord, ALIGNMENT, FINETUNE,
    REFINEMENT, ROUTING,
};

/// Everything that can go wrong while configuring or running training.
#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("bad config: {message}")]
    Config { message: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("loss diverged to {loss} at step {step} of the {stage} stage")]
    Diverged {
        stage: &'static str,
        step: usize,
        loss: f64,
    },
    #[error("nothing to train on: {what} is empty")]
    EmptyPool { what: String },
    #[error("unknown strategy {given:?} (expected joint, sequential, rehearsal:<n>, or colt)")]
    UnknownStrategy { given: String },
    #[error("bad group layout: {message}")]
    Groups { message: String },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Codebook(#[from] crate::codebook::CodebookError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
