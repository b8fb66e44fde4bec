//! Honest multi-arm causal forest.
//!
//! The sample is split into a training half, on which trees are grown, and
//! an honest half, whose observations populate the leaves and carry all
//! effect estimates. Each tree sees an arm-stratified subsample (without
//! replacement) of the training half. Before splitting, training outcomes
//! are centered by an out-of-bag regression forest.

mod tree;
mod weights;

use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::N_ARMS;
use crate::data::{EstimationSample, FeatureMetadata};
use crate::error::{invalid_arg, Error, Result};

pub use tree::{Node, Objective, SplitRule, Topology};
pub use weights::{compute_weights, WeightMatrix, WeightRow};

pub(crate) use tree::{grow, GrowData};


pub(crate) const SPLIT_STREAM: u64 = 1 << 48;
const CENTERING_STREAM: u64 = 1 << 40;
pub(crate) const SUPPORT_STREAM: u64 = 2 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Share of the training half drawn (without replacement) per tree.
    pub subsample_fraction: f64,
    /// Minimum training observations of every arm in each child.
    pub min_leaf_per_arm: usize,
    /// Candidate features per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    pub honesty: bool,
    pub seed: u64,
    /// Center outcomes with a regression forest grown on the training half:
    /// out-of-bag for splitting, and for the honest outcomes the effects
    /// are read from.
    pub centering: bool,
    pub centering_trees: usize,
    /// Weight of the shared-arm error penalty in the split score.
    pub mce_lambda: f64,
    /// Multiplier on the arm-share imbalance term of the split score, in
    /// units of the split-target variance. `None` scales it with the
    /// per-tree subsample size; `Some(0.0)` switches it off.
    pub propensity_penalty: Option<f64>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            subsample_fraction: 0.5,
            min_leaf_per_arm: 5,
            mtry: None,
            honesty: true,
            seed: 0,
            centering: true,
            centering_trees: 100,
            mce_lambda: 1.0,
            propensity_penalty: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid_arg!("n_trees must be at least 1"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(invalid_arg!(
                "subsample_fraction {} outside (0, 1]",
                self.subsample_fraction
            ));
        }
        if self.min_leaf_per_arm < 2 {
            return Err(invalid_arg!("min_leaf_per_arm must be at least 2"));
        }
        if self.mtry == Some(0) {
            return Err(invalid_arg!("mtry must be positive"));
        }
        if self.centering && self.centering_trees == 0 {
            return Err(invalid_arg!("centering needs at least one tree"));
        }
        if !(self.mce_lambda >= 0.0) {
            return Err(invalid_arg!("mce_lambda must be non-negative"));
        }
        if let Some(m) = self.propensity_penalty {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(invalid_arg!("propensity_penalty must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p.max(1))
    }

    /// Imbalance multiplier for trees grown on `n_sub` rows:
    /// 2·n_sub^0.9/n_sub·√(K(K−1)/2) unless set explicitly.
    pub fn propensity_multiplier(&self, n_sub: usize) -> f64 {
        self.propensity_penalty.unwrap_or_else(|| {
            let n = n_sub.max(1) as f64;
            let pairs = (N_ARMS * (N_ARMS - 1) / 2) as f64;
            2.0 * n.powf(0.9) / n * pairs.sqrt()
        })
    }
}

fn per_arm(rows: &[usize], d: &[u8]) -> [Vec<usize>; N_ARMS] {
    let mut out: [Vec<usize>; N_ARMS] = Default::default();
    for &i in rows {
        out[d[i] as usize].push(i);
    }
    out
}

/// Arm-stratified random halving into (train, honest).
///
/// Each arm is shuffled and halved; odd leftovers alternate between the two
/// halves, starting with train, so overall sizes differ by at most one.
pub fn honest_split(d: &[u8], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let all: Vec<usize> = (0..d.len()).collect();
    let arms = per_arm(&all, d);
    for (a, rows) in arms.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "arm {a} has {} observations; the honest split needs at least 2",
                rows.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut train = Vec::with_capacity(d.len() / 2 + 1);
    let mut honest = Vec::with_capacity(d.len() / 2 + 1);
    let mut extra_to_train = true;
    for mut rows in arms {
        rows.shuffle(&mut rng);
        let half = rows.len() / 2;
        let mut cut = half;
        if rows.len() % 2 == 1 {
            if extra_to_train {
                cut += 1;
            }
            extra_to_train = !extra_to_train;
        }
        train.extend_from_slice(&rows[..cut]);
        honest.extend_from_slice(&rows[cut..]);
    }
    train.sort_unstable();
    honest.sort_unstable();
    Ok((train, honest))
}

/// Per-arm draw without replacement of `fraction` of `rows`, at least one
/// observation per non-empty arm. Output sorted.
fn stratified_subsample(rows: &[usize], d: &[u8], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity((rows.len() as f64 * fraction) as usize + N_ARMS);
    for arm_rows in per_arm(rows, d) {
        if arm_rows.is_empty() {
            continue;
        }
        let k = ((arm_rows.len() as f64 * fraction).round() as usize).clamp(1, arm_rows.len());
        let picked = rand::seq::index::sample(rng, arm_rows.len(), k);
        out.extend(picked.iter().map(|p| arm_rows[p]));
    }
    out.sort_unstable();
    out
}

fn unordered_flags(meta: &FeatureMetadata) -> Vec<bool> {
    (0..meta.len()).map(|j| meta.is_unordered(j)).collect()
}

/// Settings of an auxiliary out-of-bag forest.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OobSpec {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub mtry: usize,
    pub fraction: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Out-of-bag leaf values, at each of `predict`, of a regression or
/// classification forest grown on `rows`. Regression leaves hold the target
/// mean in slot 0, classification leaves the arm frequencies. `None` where
/// a row was in every tree's subsample.
pub(crate) fn oob_forest(
    sample: &EstimationSample,
    rows: &[usize],
    predict: &[usize],
    target: &[f64],
    objective: Objective,
    spec: OobSpec,
) -> Vec<Option<[f64; N_ARMS]>> {
    let unordered = unordered_flags(&sample.meta);
    let data = GrowData {
        x: sample.x.view(),
        unordered: &unordered,
        target,
        arm: &sample.d,
    };
    let trees: Vec<(Topology, Vec<[f64; N_ARMS]>, Vec<usize>)> = (0..spec.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(spec.stream + t as u64);
            let sub = stratified_subsample(rows, &sample.d, spec.fraction, &mut rng);
            let (topo, leaves) = grow(&data, sub.clone(), objective, spec.mtry, &mut rng);
            let values = leaves
                .iter()
                .map(|members| {
                    let n = members.len() as f64;
                    match objective {
                        Objective::Classification { .. } => {
                            let mut v = [0.0; N_ARMS];
                            for &i in members {
                                v[sample.d[i] as usize] += 1.0 / n;
                            }
                            v
                        }
                        _ => {
                            let mut v = [0.0; N_ARMS];
                            v[0] = members.iter().map(|&i| target[i]).sum::<f64>() / n;
                            v
                        }
                    }
                })
                .collect();
            (topo, values, sub)
        })
        .collect();
    predict
        .par_iter()
        .map(|&i| {
            let mut acc = [0.0; N_ARMS];
            let mut k = 0usize;
            for (topo, values, sub) in &trees {
                if sub.binary_search(&i).is_ok() {
                    continue;
                }
                let v = values[topo.leaf_of(sample.x.row(i))];
                for d in 0..N_ARMS {
                    acc[d] += v[d];
                }
                k += 1;
            }
            (k > 0).then(|| acc.map(|a| a / k as f64))
        })
        .collect()
}

/// Honest causal tree: topology grown on training data, leaves populated
/// with honest observations per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTree {
    pub topology: Topology,
    /// Per leaf, per arm, honest sample rows.
    pub leaf_members: Vec<[Vec<u32>; N_ARMS]>,
}

impl CausalTree {
    pub fn leaf_of(&self, x: ArrayView1<'_, f64>) -> usize {
        self.topology.leaf_of(x)
    }

    /// Honest arm-m mean minus arm-l mean in `leaf`.
    pub fn leaf_effect(&self, leaf: usize, y: &[f64], m: usize, l: usize) -> Result<f64> {
        let members = self
            .leaf_members
            .get(leaf)
            .ok_or_else(|| invalid_arg!("leaf {leaf} does not exist"))?;
        if m >= N_ARMS || l >= N_ARMS || m == l {
            return Err(invalid_arg!("invalid contrast ({m}, {l})"));
        }
        let mean = |a: usize| -> Result<f64> {
            let rows = &members[a];
            if rows.is_empty() {
                return Err(Error::Support(format!("arm {a} has no honest observations in leaf {leaf}")));
            }
            Ok(rows.iter().map(|&i| y[i as usize]).sum::<f64>() / rows.len() as f64)
        };
        Ok(mean(m)? - mean(l)?)
    }

    /// Whether every arm has honest observations in `leaf`.
    pub fn leaf_complete(&self, leaf: usize) -> bool {
        self.leaf_members[leaf].iter().all(|m| !m.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub n_rows: usize,
    pub meta: FeatureMetadata,
    pub train: Vec<usize>,
    pub honest: Vec<usize>,
    /// Arm of every sample row, needed to read weights by arm.
    pub arms: Vec<u8>,
    pub trees: Vec<CausalTree>,
    /// Outcome-regression fit of every row: out-of-bag on the training
    /// half, trained on the training half only. `None` without centering.
    #[serde(default)]
    pub outcome_fit: Option<Vec<f64>>,
}

impl Forest {
    /// Split, center, grow `n_trees` honest trees.
    pub fn fit(sample: &EstimationSample, params: &ForestParams) -> Result<Forest> {
        params.validate()?;
        let n = sample.len();
        let needed = 2 * N_ARMS * params.min_leaf_per_arm;
        if n < needed {
            return Err(Error::Data(format!(
                "{n} observations, the forest needs at least {needed}"
            )));
        }
        let (train, honest) = if params.honesty {
            honest_split(&sample.d, params.seed)?
        } else {
            ((0..n).collect(), (0..n).collect())
        };
        let p = sample.n_features();
        let mtry = params.mtry_for(p);
        let outcome_fit = params.centering.then(|| outcome_fit(sample, &train, params, mtry));
        let mut target = sample.y.clone();
        if let Some(fit) = &outcome_fit {
            for &i in &train {
                target[i] -= fit[i];
            }
        }
        let unordered = unordered_flags(&sample.meta);
        let data = GrowData {
            x: sample.x.view(),
            unordered: &unordered,
            target: &target,
            arm: &sample.d,
        };
        let objective = Objective::Causal {
            min_leaf_per_arm: params.min_leaf_per_arm,
            lambda: params.mce_lambda,
            share_penalty: share_penalty(&target, &train, params),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let sub = stratified_subsample(&train, &sample.d, params.subsample_fraction, &mut rng);
                let counts = per_arm(&sub, &sample.d).map(|r| r.len());
                if let Some(a) = counts.iter().position(|&c| c == 0) {
                    return Err(Error::Tree {
                        index: t,
                        source: Box::new(Error::Data(format!("subsample has no observation of arm {a}"))),
                    });
                }
                let (topology, _) = grow(&data, sub, objective, mtry, &mut rng);
                let mut leaf_members: Vec<[Vec<u32>; N_ARMS]> = vec![Default::default(); topology.n_leaves];
                for &i in &honest {
                    let leaf = topology.leaf_of(sample.x.row(i));
                    leaf_members[leaf][sample.d[i] as usize].push(i as u32);
                }
                Ok(CausalTree {
                    topology,
                    leaf_members,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        log::debug!(
            "grew {} trees, mean leaves {:.1}",
            trees.len(),
            trees.iter().map(|t| t.topology.n_leaves).sum::<usize>() as f64 / trees.len() as f64
        );
        Ok(Forest {
            params: params.clone(),
            n_rows: n,
            meta: sample.meta.clone(),
            train,
            honest,
            arms: sample.d.clone(),
            trees,
            outcome_fit,
        })
    }

    pub fn n_features(&self) -> usize {
        self.meta.len()
    }

    /// Outcomes to weight for effects: `y` minus the outcome fit, shifted
    /// by the mean fit over the honest half so potential outcomes stay on
    /// the outcome scale. Contrasts are unchanged by the shift.
    pub fn estimation_outcomes(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_rows {
            return Err(invalid_arg!("{} outcomes for a forest over {} rows", y.len(), self.n_rows));
        }
        let Some(fit) = &self.outcome_fit else {
            return Ok(y.to_vec());
        };
        let level = self.honest.iter().map(|&i| fit[i]).sum::<f64>() / self.honest.len() as f64;
        Ok(y.iter().zip(fit).map(|(v, f)| v - f + level).collect())
    }

    /// Forest-average of per-tree leaf effects at `x`, over trees whose leaf
    /// holds every arm. `None` if all trees abstain.
    pub fn predict_effect(&self, x: ArrayView1<'_, f64>, y: &[f64], m: usize, l: usize) -> Result<Option<f64>> {
        let mut acc = 0.0;
        let mut k = 0usize;
        for tree in &self.trees {
            let leaf = tree.leaf_of(x);
            if !tree.leaf_complete(leaf) {
                continue;
            }
            acc += tree.leaf_effect(leaf, y, m, l)?;
            k += 1;
        }
        Ok((k > 0).then(|| acc / k as f64))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Forest> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Forest> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Forest::from_json(&s)
    }

    pub fn compute_weights(&self, query: ArrayView2<'_, f64>) -> Result<WeightMatrix> {
        compute_weights(self, query)
    }
}

/// Weight on squared arm-share differences between children: the
/// multiplier times the variance of the split target over the training half.
fn share_penalty(target: &[f64], train: &[usize], params: &ForestParams) -> f64 {
    let n_sub = (train.len() as f64 * params.subsample_fraction).round() as usize;
    let mult = params.propensity_multiplier(n_sub);
    if mult == 0.0 || train.len() < 2 {
        return 0.0;
    }
    let n = train.len() as f64;
    let mean = train.iter().map(|&i| target[i]).sum::<f64>() / n;
    let var = train.iter().map(|&i| (target[i] - mean).powi(2)).sum::<f64>() / n;
    mult * var
}

/// Regression-forest fit of the outcome for every row, grown on the
/// training half: out-of-bag for training rows, all trees elsewhere.
/// Honest outcomes never enter the fit.
fn outcome_fit(sample: &EstimationSample, train: &[usize], params: &ForestParams, mtry: usize) -> Vec<f64> {
    let spec = OobSpec {
        n_trees: params.centering_trees,
        min_leaf: 2 * params.min_leaf_per_arm,
        mtry,
        fraction: 0.5,
        seed: params.seed,
        stream: CENTERING_STREAM,
    };
    let all: Vec<usize> = (0..sample.len()).collect();
    let fit = oob_forest(sample, train, &all, &sample.y, Objective::Regression { min_leaf: spec.min_leaf }, spec);
    let fallback = train.iter().map(|&i| sample.y[i]).sum::<f64>() / train.len() as f64;
    fit.into_iter().map(|f| f.map_or(fallback, |v| v[0])).collect()
}
