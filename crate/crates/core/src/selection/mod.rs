//! Spectrum-aware batch selection.
//!
//! [`pool`] chooses one batch out of a pool of candidate batches by effective
//! rank. [`greedy`] grows a batch element by element, each step adding the
//! probed candidate with the smallest Rayleigh score against the batch so far.

pub mod greedy;
pub mod pool;

pub use greedy::{centroid_score, greedy_build, random_subset, GreedyOptions, GreedyResult, GreedyStep, SelectionState};
pub use pool::{pick_batch, update_target_rank, PercentileWindow, PolicyKind, PoolPick, PoolPolicy};
