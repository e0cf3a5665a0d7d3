//! Evaluation harness for 3-way multiple-choice video question answering.
//!
//! The pipeline mirrors an inference-side competition setup: deterministic
//! dataset splits, per-video frame plans, a fixed prompt template,
//! option-order test-time augmentation, concurrent dispatch to
//! chat-completion backends, answer parsing back into canonical option
//! space, weighted majority voting (including the published 31-set
//! composition), and top-1 scoring.
//!
//! Data-parallel inner loops (batch planning, per-question tallies, pairwise
//! agreement) run on rayon under the default `parallel` feature and fall
//! back to plain iterators without it; both paths produce identical results
//! and each has a `*_seq` twin for benchmarking.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod inference;
mod par;
pub mod pipeline;
pub mod protocol;
pub mod sampling;
pub mod scoring;
pub mod tta;

pub use error::{Error, Result};
