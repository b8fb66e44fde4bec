//! Common support → honest forest → effects, as one call.

use serde::{Deserialize, Serialize};

use crate::arm::Contrast;
use crate::binning::Binning;
use crate::data::EstimationSample;
use crate::error::Result;
use crate::estimate::{common_support_check, AggregationOptions, EffectTable, Effects, GateTable, SupportParams, SupportReport};
use crate::forest::{Forest, ForestParams};

/// Name of the GATE over the treatment variable itself (the ATET by arm).
pub const TREATMENT_GATE: &str = "recipient_sport_freq";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub forest: ForestParams,
    pub aggregation: AggregationOptions,
    /// Minimum estimated arm probability; `None` skips the check.
    pub support_threshold: Option<f64>,
    pub support: SupportParams,
    pub binning: Binning,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            forest: ForestParams::default(),
            aggregation: AggregationOptions::default(),
            support_threshold: Some(0.01),
            support: SupportParams::default(),
            binning: Binning::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub support: Option<SupportReport>,
    /// Rows of the input sample that passed the support check.
    pub kept: Vec<usize>,
    /// The estimation sample after trimming.
    pub sample: EstimationSample,
    pub forest: Forest,
    pub effects: Effects,
    pub ate: EffectTable,
}

pub fn run(sample: &EstimationSample, config: &PipelineConfig) -> Result<PipelineResult> {
    let (kept, support) = match config.support_threshold {
        Some(t) => {
            let params = SupportParams {
                seed: config.forest.seed,
                ..config.support
            };
            let (kept, report) = common_support_check(sample, t, &params)?;
            (kept, Some(report))
        }
        None => ((0..sample.len()).collect(), None),
    };
    let trimmed = if kept.len() == sample.len() {
        sample.clone()
    } else {
        sample.select(&kept)
    };
    let forest = Forest::fit(&trimmed, &config.forest)?;
    let weights = forest.compute_weights(trimmed.x.view())?;
    let effects = Effects::new(weights, forest.estimation_outcomes(&trimmed.y)?, trimmed.d.clone(), config.aggregation)?;
    let ate = effects.ate();
    Ok(PipelineResult {
        support,
        kept,
        sample: trimmed,
        forest,
        effects,
        ate,
    })
}

impl PipelineResult {
    /// GATEs of `contrast` for every heterogeneity column plus the
    /// treatment variable.
    pub fn gates(&self, contrast: Contrast, binning: Binning) -> Result<Vec<GateTable>> {
        let mut out = Vec::new();
        for (name, j) in self.sample.heterogeneity_columns() {
            let values = self.sample.column(j).to_vec();
            out.push(self.effects.gates(&name, &values, binning, contrast)?);
        }
        let d: Vec<f64> = self.sample.d.iter().map(|&a| a as f64).collect();
        out.push(self.effects.gates(TREATMENT_GATE, &d, Binning::Discrete, contrast)?);
        Ok(out)
    }

    /// GATEs over a single named column.
    pub fn gate(&self, variable: &str, contrast: Contrast, binning: Binning) -> Result<GateTable> {
        if variable == TREATMENT_GATE {
            let d: Vec<f64> = self.sample.d.iter().map(|&a| a as f64).collect();
            return self.effects.gates(variable, &d, Binning::Discrete, contrast);
        }
        let j = self
            .sample
            .meta
            .index_of(variable)
            .ok_or_else(|| crate::error::invalid_arg!("unknown heterogeneity variable {variable:?}"))?;
        if !self.sample.z_indices.contains(&j) {
            return Err(crate::error::invalid_arg!("{variable:?} is not a declared heterogeneity variable"));
        }
        let values = self.sample.column(j).to_vec();
        self.effects.gates(variable, &values, binning, contrast)
    }
}
