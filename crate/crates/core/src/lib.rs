//! Continual tool-usage learning for a compact instruction-following model.
//!
//! The crate trains a small prompt-conditioned decoder to emit tool calls for
//! video-style instructions, while new tools arrive as a stream. Its centre
//! piece is a learnable tool codebook: a row per prompt vector, top-K cosine
//! selection against an instruction query, vector-quantization losses tying
//! selected rows to the query distribution, and straight-through gradients so
//! selection stays differentiable end to end.
//!
//! Modules:
//! - [`numerics`]: tensors, losses, AdamW, schedules, gradient oracle.
//! - [`dataset`]: conversation schema, validation, synthesis, splits.
//! - [`codebook`]: the prompt table with top-K selection and VQ losses.
//! - [`model`]: vocabulary, projector, query encoder, decoder.
//! - [`metrics`]: accuracy matrix, average accuracy / forgetting, reports.
//! - [`trainer`]: staged training, continual strategies, checkpoints.

pub mod codebook;
pub mod dataset;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod trainer;
