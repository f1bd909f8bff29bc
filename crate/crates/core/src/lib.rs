//! Spectral gradient bands for InfoNCE.
//!
//! The crate computes lower and upper bands on per-anchor InfoNCE gradient
//! norms from batch spectrum statistics, along with the estimators that feed
//! them (top eigenvalue, effective rank, isotropy deviation), spectrum-aware
//! batch selection, in-batch whitening, and a Monte-Carlo harness that checks
//! the bands on synthetic data.

pub mod band;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod infonce;
pub mod linalg;
pub mod rng;
pub mod selection;
pub mod spectrum;
pub mod whitening;

pub use band::{BandConfig, BandEstimate, SamplingTermMode};
pub use embedding::{
    attach_positives, synth_correlated_negatives, synth_spectral_batch, CorrelationSpec, EmbeddingBatch,
    SpectralSampler, SpectrumSpec,
};
pub use error::{Error, Result};
pub use infonce::{anchor_stats, batch_grad_stats, AnchorStats, BatchGradStats};
pub use spectrum::{SecondMoment, SpectralSummary};
