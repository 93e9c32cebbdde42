//! Event-based masked autoencoding for irregular time series.
//!
//! Irregular series are stored as `(time, value, feature)` triplets. Pretraining
//! masks observations whose per-feature rate of change crosses a threshold,
//! substitutes trainable mask tokens for one embedding component, and trains a
//! transformer encoder to reconstruct the original embeddings in latent space
//! alongside an auxiliary forecasting head. The pretrained encoder is then
//! fine-tuned for binary classification.
//!
//! Modules:
//!
//! - [`series`]: triplet data model, JSON-lines I/O, normalization, splits, synthetic data
//! - [`masking`]: rate of change, event-based mask selection, mask kinds, statistics
//! - [`numerics`]: dense tensors, reverse-mode tape, Adam, finite-difference checker
//! - [`model`]: embeddings, mask tokens, encoder, aggregation and heads, checkpoints
//! - [`training`]: losses, forecast targets, pretraining and fine-tuning loops
//! - [`eval`]: ROC-AUC, PR-AUC, min(Re,Pr), run configuration, ablation and sweep drivers

// Casts are identities only in the default 64-bit build; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::unnecessary_cast, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod masking;
pub mod model;
pub mod numerics;
pub mod series;
pub mod training;

pub use error::{EmitError, Result};
pub use numerics::Real;
