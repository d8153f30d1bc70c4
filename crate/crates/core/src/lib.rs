//! Oscillatory data-volume scheduling for selected-data training.
//!
//! The crate derives a periodic selection-ratio schedule that respects a
//! cumulative forward-pass budget, selects per-epoch subsets (loss-based hard
//! mining or uniform random), trains small models with plain SGD, and
//! estimates the subsampling-induced curvature term
//! `R(p, θ) = η²/(2N) · (1 − p)/p · Tr(H C)` so it can be checked against
//! Monte-Carlo one-step expectations.

pub mod config;
pub mod data;
pub mod error;
pub mod ledger;
pub mod models;
pub mod regprobe;
pub mod rng;
pub mod schedule;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
