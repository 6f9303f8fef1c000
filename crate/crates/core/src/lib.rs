//! Cycle-consistent spectral conversion as a post-filter for TTS vocoders.
//!
//! A source-to-target converter `f` (synthetic → natural mel-cepstrum) is
//! trained jointly with a target-to-source converter `g` through a
//! cycle-consistency term. The self-conversion `f(g(Y))` of natural
//! features yields pseudo-converted features that stay frame-locked to the
//! natural waveform (vocoder training data), while `f(X)` of synthetic
//! features yields enhanced features (vocoder test input).
//!
//! Module map:
//! - [`features`]: feature types, analysis/synthesis, `CVF1` files, normalization
//! - [`model`]: the two conversion networks, the loss, gradients, checkpoints
//! - [`train`]: pairing and the training loop
//! - [`pipeline`]: pseudo/enhanced feature generation and vocoder scenarios
//! - [`ttsim`]: deterministic degradation standing in for a low-cost TTS
//! - [`eval`]: MCD and the MCD-plane embedding
//! - [`config`], [`experiment`]: run configuration and the end-to-end driver

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod train;
pub mod ttsim;
pub mod wav;

pub use error::{Error, Result};
pub use features::UtteranceFeatures;
pub use model::{CycleVcModel, LossBreakdown};
