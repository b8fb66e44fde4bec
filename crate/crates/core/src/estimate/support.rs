//! Common-support screening with an out-of-bag arm-probability forest.

use serde::{Deserialize, Serialize};

use crate::arm::N_ARMS;
use crate::data::EstimationSample;
use crate::error::{invalid_arg, Error, Result};
use crate::forest::{oob_forest, Objective, OobSpec, SUPPORT_STREAM};

/// Largest share of the sample that may fail the support check before the
/// run is aborted.
pub const MAX_DROP_SHARE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupportParams {
    pub n_trees: usize,
    /// Minimum leaf size; `None` picks max(20, n/200).
    pub min_leaf: Option<usize>,
    pub seed: u64,
}

impl Default for SupportParams {
    fn default() -> Self {
        SupportParams {
            n_trees: 100,
            min_leaf: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub threshold: f64,
    pub n_before: usize,
    pub n_kept: usize,
    /// Dropped rows by their observed arm.
    pub dropped_per_arm: [usize; N_ARMS],
    /// Smallest estimated arm probability among kept rows.
    pub min_kept_probability: f64,
}

impl SupportReport {
    pub fn n_dropped(&self) -> usize {
        self.n_before - self.n_kept
    }
}

/// Rows whose estimated probability of every arm reaches `threshold`.
///
/// Probabilities come from a classification forest over the arm labels,
/// each row predicted only by trees that did not see it.
pub fn common_support_check(
    sample: &EstimationSample,
    threshold: f64,
    params: &SupportParams,
) -> Result<(Vec<usize>, SupportReport)> {
    if !(threshold > 0.0 && threshold <= 0.2) {
        return Err(invalid_arg!("support threshold {threshold} outside (0, 0.2]"));
    }
    if params.n_trees == 0 {
        return Err(invalid_arg!("support forest needs at least one tree"));
    }
    let n = sample.len();
    let min_leaf = params.min_leaf.unwrap_or((n / 200).max(20)).max(1);
    let spec = OobSpec {
        n_trees: params.n_trees,
        min_leaf,
        mtry: (sample.n_features() as f64).sqrt().ceil() as usize,
        fraction: 0.5,
        seed: params.seed,
        stream: SUPPORT_STREAM,
    };
    let rows: Vec<usize> = (0..n).collect();
    let target: Vec<f64> = sample.d.iter().map(|&a| a as f64).collect();
    let probs = oob_forest(sample, &rows, &rows, &target, Objective::Classification { min_leaf }, spec);

    let mut kept = Vec::with_capacity(n);
    let mut dropped_per_arm = [0usize; N_ARMS];
    let mut min_kept = 1.0f64;
    for (i, p) in probs.iter().enumerate() {
        // A row that every tree saw has no honest probability estimate; keep it.
        let lowest = p.map_or(1.0, |p| p.iter().cloned().fold(1.0, f64::min));
        if lowest < threshold {
            dropped_per_arm[sample.d[i] as usize] += 1;
        } else {
            kept.push(i);
            min_kept = min_kept.min(lowest);
        }
    }
    let report = SupportReport {
        threshold,
        n_before: n,
        n_kept: kept.len(),
        dropped_per_arm,
        min_kept_probability: min_kept,
    };
    if report.n_dropped() as f64 > MAX_DROP_SHARE * n as f64 {
        return Err(Error::Support(format!(
            "{} of {n} observations below arm probability {threshold} (per arm {:?}); the design lacks overlap",
            report.n_dropped(),
            dropped_per_arm
        )));
    }
    if report.n_dropped() > 0 {
        log::info!("common support: dropped {} of {n} rows", report.n_dropped());
    }
    Ok((kept, report))
}
