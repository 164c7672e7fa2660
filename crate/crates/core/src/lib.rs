//! Reward-driven fine-tuning of small encoder-decoder transformers.
//!
//! The crate bundles a reverse-mode autodiff engine, a pre-LN transformer with
//! cached incremental decoding, synthetic transduction corpora, sentence and
//! corpus BLEU, policy-gradient and minimum-risk training, and diagnostics for
//! output-distribution peakiness, gold-token rank mobility and beam-size
//! sweeps.

pub mod autodiff;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod model;
pub mod rewards;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
