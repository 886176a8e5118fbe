//! Calibrated ranking for implicit-feedback recommenders.
//!
//! - [`dataset`]: interaction logs, id maps, per-user splits, negative sampling
//! - [`ranker`]: matrix-factorization backbone (BPR / pointwise SGD)
//! - [`calibration`]: score-to-probability calibrators, propensity-weighted
//!   fitting, ECE and reliability tables
//! - [`distill`]: bidirectional teacher/student distillation
//! - [`perk`]: exact expected utilities and per-user cutoff selection
//! - [`metrics`]: realized top-K metrics and evaluation

pub mod calibration;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod math;
pub mod metrics;
pub mod perk;
pub mod ranker;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
