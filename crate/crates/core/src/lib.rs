//! Knowledge-wise evaluation for multilingual machine unlearning.
//!
//! The central object is an [`EvalMatrix`]: one observation per
//! (instance, language) cell, holding a semantic-equivalence bit and/or a
//! length-normalised answer probability. From it the [`metrics`] module
//! derives per-instance forgetting scores, the ROC/PR separability scores
//! between forget and retain instances, and cross-lingual persistence
//! scores.
//!
//! Supporting modules:
//! - [`judges`]: translate-then-judge semantic equivalence with a verdict cache.
//! - [`unlearn`]: value calculators for unlearning objectives and pruning importance.
//! - [`datagen`]: synthetic profile sampling, skew diagnostics, QA templating and
//!   back-translation verification.
//! - [`simulator`]: synthetic evaluation matrices with known ground truth.
//! - [`report`]: table, histogram and sweep renderings.

pub mod datagen;
pub mod dataset;
pub mod judges;
pub mod metrics;
pub mod report;
pub mod simulator;
pub mod unlearn;

pub use dataset::{
    DataError, DatasetSpec, EvalMatrix, EvalRecord, Language, Manifest, Role, Split,
};
pub use metrics::{ForgettingScores, MetricError, ScoreMode};
