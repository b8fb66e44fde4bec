//! Honest causal forest for multi-valued treatments.
//!
//! The crate covers the whole estimation pipeline: turning platform logs into
//! estimation samples, growing honest multi-arm causal forests, deriving
//! individual, group and average effects from the forest's weighted
//! representation, heterogeneity tests, IATE clustering and a placebo design.
//! A synthetic data-generating process with closed-form effects backs the
//! validation suite.

pub mod arm;
pub mod binning;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimate;
pub mod forest;
pub mod hetero;
pub mod pipeline;
pub mod placebo;
pub mod report;
pub mod stats;

pub mod cli;

pub use arm::{Arm, Contrast, N_ARMS};
pub use error::{Error, Result};
pub use ndarray;
