//! Synthetic data-generating process with closed-form potential outcomes.
//!
//! Covariate layout (ordered columns first, then unordered):
//!
//! | column | name        | distribution                         |
//! |--------|-------------|--------------------------------------|
//! | 0      | `age`       | uniform integer 18..=65              |
//! | 1      | `income`    | uniform integer 1..=6                |
//! | 2      | `education` | uniform integer 1..=5                |
//! | 3..    | `x{j}`      | N(0,1), every third one Bernoulli(½) |
//! | p_o..  | `c{k}`      | uniform categorical                  |
//!
//! Selection and outcomes both load on the confounder index
//! `h(x) = (2u - 1)/2 + clip(x3, -2, 2)/4 ∈ [-1, 1]` with `u = (income-1)/5`.
//! Treatment follows a multinomial logit `α_d + s·c_d·h(x)` with loadings
//! `c = (-1, -1/3, 1/3, 1)`; the intercepts are calibrated so population
//! shares hit the target shares. Potential outcomes are
//!
//! `p_d(x) = base_d + amplitude·(σ(prognostic·h(x)) - ½) + slope·(d/3)·u`
//!
//! clamped to [0.005, 0.995], so effects are homogeneous unless `slope ≠ 0`.

mod emit;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::{Contrast, N_ARMS};
use crate::data::{EstimationSample, FeatureKind, FeatureMetadata, FeatureRole, Gender};
use crate::error::{invalid_arg, Error, Result};

pub use emit::{emit_logs, SyntheticLogs};

pub const AGE_COL: usize = 0;
pub const INCOME_COL: usize = 1;
pub const EDUCATION_COL: usize = 2;
/// First standard-normal column; the second confounder.
pub const CONFOUNDER_COL: usize = 3;

const P_MIN: f64 = 0.005;
const P_MAX: f64 = 0.995;
const SELECTION_LOADINGS: [f64; N_ARMS] = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
/// Minimum arm probability the treatment model must guarantee.
pub const SUPPORT_FLOOR: f64 = 0.01;
const MC_SHARD: usize = 10_000;

/// Table 1 shares, male sample.
pub const MALE_SHARES: [f64; N_ARMS] = [0.07, 0.08, 0.29, 0.56];
/// Table 1 shares, female sample.
pub const FEMALE_SHARES: [f64; N_ARMS] = [0.12, 0.09, 0.29, 0.49];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    /// Arm-specific level of the conditional outcome probability.
    pub base: [f64; N_ARMS],
    /// Range of the prognostic (confounding) component.
    pub amplitude: f64,
    /// Logistic slope of the prognostic component in h(x).
    pub prognostic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub n: usize,
    pub p_ordered: usize,
    pub p_unordered: usize,
    pub n_categories: usize,
    pub arm_shares: [f64; N_ARMS],
    pub selection_strength: f64,
    pub outcome: OutcomeModel,
    /// Extra effect of arm d over arm 0 at top income, scaled by d/3.
    pub heterogeneity_slope: f64,
    /// All arms share arm 0's outcome function.
    pub placebo: bool,
    pub recipient_gender: Gender,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig::validation(0)
    }
}

impl DgpConfig {
    /// n = 4000, p = 20, male shares, confounded selection, mild income
    /// heterogeneity.
    pub fn validation(seed: u64) -> Self {
        DgpConfig {
            n: 4000,
            p_ordered: 18,
            p_unordered: 2,
            n_categories: 4,
            arm_shares: MALE_SHARES,
            selection_strength: 0.8,
            outcome: OutcomeModel {
                base: [0.05, 0.055, 0.065, 0.08],
                amplitude: 0.08,
                prognostic: 3.0,
            },
            heterogeneity_slope: 0.02,
            placebo: false,
            recipient_gender: Gender::Male,
            seed,
        }
    }

    /// Strong income gradient in every effect.
    pub fn income_slope(seed: u64) -> Self {
        DgpConfig {
            heterogeneity_slope: 0.4,
            ..DgpConfig::validation(seed)
        }
    }

    /// Homogeneous effects.
    pub fn flat(seed: u64) -> Self {
        DgpConfig {
            heterogeneity_slope: 0.0,
            ..DgpConfig::validation(seed)
        }
    }

    /// No treatment effect at all.
    pub fn placebo(seed: u64) -> Self {
        DgpConfig {
            placebo: true,
            ..DgpConfig::validation(seed)
        }
    }

    /// Full-dimensional smoke configuration.
    pub fn large_p_smoke(seed: u64) -> Self {
        DgpConfig {
            n: 2000,
            p_ordered: 1229,
            p_unordered: 18,
            ..DgpConfig::validation(seed)
        }
    }

    pub fn n_features(&self) -> usize {
        self.p_ordered + self.p_unordered
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(invalid_arg!("n = {} below the minimum of 100", self.n));
        }
        if self.p_ordered <= CONFOUNDER_COL {
            return Err(invalid_arg!("p_ordered must be at least {}", CONFOUNDER_COL + 1));
        }
        if self.p_unordered > 0 && self.n_categories < 2 {
            return Err(invalid_arg!("unordered columns need at least 2 categories"));
        }
        if self.arm_shares.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid_arg!("arm shares must be positive: {:?}", self.arm_shares));
        }
        let total: f64 = self.arm_shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid_arg!("arm shares sum to {total}, not 1"));
        }
        if !self.selection_strength.is_finite() || !self.heterogeneity_slope.is_finite() {
            return Err(invalid_arg!("non-finite DGP coefficient"));
        }
        let o = &self.outcome;
        if o.base.iter().any(|b| !(0.0..=1.0).contains(b)) || !(o.amplitude >= 0.0) || !o.prognostic.is_finite() {
            return Err(invalid_arg!("outcome model out of range: {o:?}"));
        }
        Ok(())
    }

    pub fn feature_metadata(&self) -> FeatureMetadata {
        let mut meta = FeatureMetadata::default();
        for j in 0..self.p_ordered {
            let name = match j {
                AGE_COL => "age".to_string(),
                INCOME_COL => "income".to_string(),
                EDUCATION_COL => "education".to_string(),
                _ => format!("x{j}"),
            };
            meta.push(name, FeatureKind::Ordered, FeatureRole::Recipient);
        }
        for k in 0..self.p_unordered {
            meta.push(format!("c{k}"), FeatureKind::Unordered, FeatureRole::Recipient);
        }
        meta
    }

    fn draw_row(&self, rng: &mut ChaCha8Rng, row: &mut [f64]) {
        for (j, slot) in row.iter_mut().enumerate().take(self.p_ordered) {
            *slot = match j {
                AGE_COL => rng.random_range(18..=65) as f64,
                INCOME_COL => rng.random_range(1..=6) as f64,
                EDUCATION_COL => rng.random_range(1..=5) as f64,
                _ if (j - CONFOUNDER_COL) % 3 == 2 => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => StandardNormal.sample(rng),
            };
        }
        for slot in row.iter_mut().skip(self.p_ordered) {
            *slot = rng.random_range(0..self.n_categories) as f64;
        }
    }

    /// `n` i.i.d. covariate rows.
    pub fn draw_covariates(&self, rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        let p = self.n_features();
        let mut x = Array2::zeros((n, p));
        for mut row in x.rows_mut() {
            self.draw_row(rng, row.as_slice_mut().expect("standard layout"));
        }
        x
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn income_unit(x: ArrayView1<'_, f64>) -> f64 {
    (x[INCOME_COL] - 1.0) / 5.0
}

/// Confounder index h(x) in [-1, 1].
pub fn confounder_index(x: ArrayView1<'_, f64>) -> f64 {
    (2.0 * income_unit(x) - 1.0) / 2.0 + x[CONFOUNDER_COL].clamp(-2.0, 2.0) / 4.0
}

fn softmax(logits: [f64; N_ARMS]) -> [f64; N_ARMS] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Closed-form truth of a generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpOracle {
    pub intercepts: [f64; N_ARMS],
    pub selection_strength: f64,
    pub base: [f64; N_ARMS],
    pub amplitude: f64,
    pub prognostic: f64,
    pub slope: f64,
    /// Smallest arm probability over the support of h(x).
    pub min_treatment_prob: f64,
}

impl DgpOracle {
    pub fn new(config: &DgpConfig) -> Result<Self> {
        config.validate()?;
        let intercepts = calibrate_intercepts(config.arm_shares, config.selection_strength)?;
        let (base, slope) = if config.placebo {
            ([config.outcome.base[0]; N_ARMS], 0.0)
        } else {
            (config.outcome.base, config.heterogeneity_slope)
        };
        let mut oracle = DgpOracle {
            intercepts,
            selection_strength: config.selection_strength,
            base,
            amplitude: config.outcome.amplitude,
            prognostic: config.outcome.prognostic,
            slope,
            min_treatment_prob: 0.0,
        };
        oracle.min_treatment_prob = (0..=2000)
            .map(|k| -1.0 + k as f64 / 1000.0)
            .flat_map(|h| oracle.treatment_probs_at(h))
            .fold(1.0, f64::min);
        if oracle.min_treatment_prob <= SUPPORT_FLOOR {
            return Err(invalid_arg!(
                "selection strength {} leaves an arm probability of {:.4} (floor {SUPPORT_FLOOR})",
                config.selection_strength,
                oracle.min_treatment_prob
            ));
        }
        Ok(oracle)
    }

    fn treatment_probs_at(&self, h: f64) -> [f64; N_ARMS] {
        softmax(std::array::from_fn(|d| {
            self.intercepts[d] + self.selection_strength * SELECTION_LOADINGS[d] * h
        }))
    }

    /// P(D = d | x) for every arm.
    pub fn treatment_probs(&self, x: ArrayView1<'_, f64>) -> [f64; N_ARMS] {
        self.treatment_probs_at(confounder_index(x))
    }

    /// p_d(x) = P(Y^d = 1 | X = x).
    pub fn outcome_prob(&self, arm: usize, x: ArrayView1<'_, f64>) -> f64 {
        let prog = self.amplitude * (sigmoid(self.prognostic * confounder_index(x)) - 0.5);
        let het = self.slope * (arm as f64 / 3.0) * income_unit(x);
        (self.base[arm] + prog + het).clamp(P_MIN, P_MAX)
    }

    /// p_m(x) - p_l(x).
    pub fn true_iate(&self, x: ArrayView1<'_, f64>, m: usize, l: usize) -> Result<f64> {
        let c = Contrast::new(m, l)?;
        Ok(self.outcome_prob(c.treated, x) - self.outcome_prob(c.control, x))
    }
}

/// Quadrature nodes `(h, mass)` for the exact distribution of h(x): income
/// uniform on 1..=6, x3 standard normal clipped at ±2 (atoms at the clip
/// points), Simpson's rule on the interior.
fn confounder_nodes() -> Vec<(f64, f64)> {
    const INTERVALS: usize = 400;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = 0.5 * statrs::function::erf::erfc(2.0 / std::f64::consts::SQRT_2);
    let step = 4.0 / INTERVALS as f64;
    let mut nodes = Vec::with_capacity(6 * (INTERVALS + 3));
    for income in 1..=6 {
        let u = (income as f64 - 1.0) / 5.0;
        let h_of = |z: f64| (2.0 * u - 1.0) / 2.0 + z / 4.0;
        for k in 0..=INTERVALS {
            let z = -2.0 + k as f64 * step;
            let simpson = if k == 0 || k == INTERVALS {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            nodes.push((h_of(z), simpson * step / 3.0 * phi(z) / 6.0));
        }
        nodes.push((h_of(-2.0), tail / 6.0));
        nodes.push((h_of(2.0), tail / 6.0));
    }
    // Remove the residual quadrature error so shares sum to one.
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    nodes.iter_mut().for_each(|n| n.1 /= total);
    nodes
}

/// Population arm shares under the treatment model.
fn population_shares(nodes: &[(f64, f64)], intercepts: &[f64; N_ARMS], strength: f64) -> [f64; N_ARMS] {
    let mut out = [0.0; N_ARMS];
    for &(h, mass) in nodes {
        let p = softmax(std::array::from_fn(|d| {
            intercepts[d] + strength * SELECTION_LOADINGS[d] * h
        }));
        for d in 0..N_ARMS {
            out[d] += mass * p[d];
        }
    }
    out
}

fn max_gap(shares: &[f64; N_ARMS], targets: &[f64; N_ARMS]) -> f64 {
    shares
        .iter()
        .zip(targets)
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max)
}

/// Intercepts (arm 0 pinned at 0) whose population shares match the
/// targets. A few multiplicative share updates bring the intercepts close;
/// coordinate-wise bisection per arm then finishes the job.
fn calibrate_intercepts(targets: [f64; N_ARMS], strength: f64) -> Result<[f64; N_ARMS]> {
    const TOL: f64 = 1e-11;
    let nodes = confounder_nodes();
    let mut alpha: [f64; N_ARMS] = std::array::from_fn(|d| (targets[d] / targets[0]).ln());
    for _ in 0..50 {
        let shares = population_shares(&nodes, &alpha, strength);
        if max_gap(&shares, &targets) < TOL {
            return Ok(alpha);
        }
        for d in 1..N_ARMS {
            alpha[d] += (targets[d] / shares[d]).ln() - (targets[0] / shares[0]).ln();
        }
    }
    for _sweep in 0..200 {
        for d in 1..N_ARMS {
            let (mut lo, mut hi) = (alpha[d] - 1.0, alpha[d] + 1.0);
            while population_shares(&nodes, &{ let mut a = alpha; a[d] = lo; a }, strength)[d] > targets[d] {
                lo -= 2.0 * (hi - lo);
                if lo < -50.0 {
                    break;
                }
            }
            while population_shares(&nodes, &{ let mut a = alpha; a[d] = hi; a }, strength)[d] < targets[d] {
                hi += 2.0 * (hi - lo);
                if hi > 50.0 {
                    break;
                }
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                alpha[d] = mid;
                if population_shares(&nodes, &alpha, strength)[d] < targets[d] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            alpha[d] = 0.5 * (lo + hi);
        }
        if max_gap(&population_shares(&nodes, &alpha, strength), &targets) < TOL {
            return Ok(alpha);
        }
    }
    let shares = population_shares(&nodes, &alpha, strength);
    Err(Error::Numerical(format!(
        "treatment intercept calibration did not converge; achieved shares {shares:?}, targets {targets:?}"
    )))
}

/// Draw a sample and its oracle.
pub fn generate(config: &DgpConfig) -> Result<(EstimationSample, DgpOracle)> {
    let oracle = DgpOracle::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let x = config.draw_covariates(&mut rng, config.n);
    let mut d = Vec::with_capacity(config.n);
    let mut y = Vec::with_capacity(config.n);
    for row in x.rows() {
        let probs = oracle.treatment_probs(row);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut arm = N_ARMS - 1;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = a;
                break;
            }
        }
        d.push(arm as u8);
        y.push(if rng.random::<f64>() < oracle.outcome_prob(arm, row) {
            1.0
        } else {
            0.0
        });
    }
    let z = vec![AGE_COL, INCOME_COL, EDUCATION_COL];
    let sample = EstimationSample::new(y, d, x, config.feature_metadata(), z)?;
    Ok((sample, oracle))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueGate {
    pub value: f64,
    pub gate: f64,
    pub mc_se: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueAggregate {
    pub contrast: Contrast,
    pub ate: f64,
    pub ate_mc_se: f64,
    pub gates: Vec<TrueGate>,
}

#[derive(Default, Clone)]
struct Moments {
    n: usize,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn mean_se(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sumsq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

/// Monte Carlo ATE and GATEs over fresh covariate draws. GATEs group by the
/// distinct values of `group_column` (a discrete column such as income).
///
/// Draws are split into fixed-size shards, each with its own ChaCha stream,
/// so the result does not depend on the thread count.
pub fn true_aggregate(
    oracle: &DgpOracle,
    config: &DgpConfig,
    contrast: Contrast,
    n_mc: usize,
    seed: u64,
    group_column: Option<usize>,
) -> Result<TrueAggregate> {
    if n_mc < 100_000 {
        return Err(invalid_arg!("n_mc = {n_mc} below the minimum of 100000"));
    }
    if let Some(c) = group_column {
        if c >= config.n_features() {
            return Err(invalid_arg!("group column {c} out of range"));
        }
    }
    let shards = n_mc.div_ceil(MC_SHARD);
    let partials: Vec<(Moments, BTreeMap<i64, Moments>)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let len = MC_SHARD.min(n_mc - s * MC_SHARD);
            let x = config.draw_covariates(&mut rng, len);
            let mut all = Moments::default();
            let mut groups: BTreeMap<i64, Moments> = BTreeMap::new();
            for row in x.rows() {
                let v = oracle.outcome_prob(contrast.treated, row) - oracle.outcome_prob(contrast.control, row);
                all.add(v);
                if let Some(c) = group_column {
                    groups.entry(row[c].round() as i64).or_default().add(v);
                }
            }
            (all, groups)
        })
        .collect();
    let mut all = Moments::default();
    let mut groups: BTreeMap<i64, Moments> = BTreeMap::new();
    for (a, g) in &partials {
        all.merge(a);
        for (k, m) in g {
            groups.entry(*k).or_default().merge(m);
        }
    }
    let (ate, ate_mc_se) = all.mean_se();
    let gates = groups
        .into_iter()
        .map(|(k, m)| {
            let (gate, mc_se) = m.mean_se();
            TrueGate {
                value: k as f64,
                gate,
                mc_se,
                draws: m.n,
            }
        })
        .collect();
    Ok(TrueAggregate {
        contrast,
        ate,
        ate_mc_se,
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn calibration_hits_population_shares() {
        let oracle = DgpOracle::new(&DgpConfig::validation(1)).unwrap();
        let shares = population_shares(&confounder_nodes(), &oracle.intercepts, oracle.selection_strength);
        for (s, t) in shares.iter().zip(MALE_SHARES) {
            assert!((s - t).abs() < 1e-11, "{shares:?}");
        }
        assert!(oracle.min_treatment_prob > SUPPORT_FLOOR);
    }

    #[test]
    fn too_strong_selection_is_rejected() {
        let cfg = DgpConfig {
            selection_strength: 4.0,
            ..DgpConfig::validation(0)
        };
        assert!(DgpOracle::new(&cfg).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = DgpConfig::validation(0);
        c.n = 50;
        assert!(c.validate().is_err());
        let mut c = DgpConfig::validation(0);
        c.arm_shares = [0.5, 0.5, 0.0, 0.0];
        assert!(c.validate().is_err());
        let mut c = DgpConfig::validation(0);
        c.arm_shares = [0.3, 0.3, 0.3, 0.3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn true_iate_matches_hand_evaluation() {
        let oracle = DgpOracle::new(&DgpConfig::validation(0)).unwrap();
        let mut x = vec![0.0; 20];
        x[INCOME_COL] = 5.0;
        x[CONFOUNDER_COL] = 0.7;
        let x = ndarray::Array1::from(x);
        // h = (2*0.8-1)/2 + 0.7/4 = 0.475
        let prog = 0.08 * (1.0 / (1.0 + (-3.0f64 * 0.475).exp()) - 0.5);
        let p3 = 0.08 + prog + 0.02 * 1.0 * 0.8;
        let p0 = 0.05 + prog;
        let got = oracle.true_iate(x.view(), 3, 0).unwrap();
        assert!((got - (p3 - p0)).abs() < 1e-15);
        assert!((got - 0.046).abs() < 1e-12);
        assert!(oracle.true_iate(x.view(), 2, 2).is_err());
        assert!(oracle.true_iate(x.view(), 4, 0).is_err());
    }

    #[test]
    fn placebo_oracle_is_null() {
        let oracle = DgpOracle::new(&DgpConfig::placebo(0)).unwrap();
        let x = array![40.0, 6.0, 2.0, 1.5, 0.0, 1.0];
        for c in Contrast::lower_triangle() {
            assert_eq!(oracle.true_iate(x.view(), c.treated, c.control).unwrap(), 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = DgpConfig {
            n: 300,
            ..DgpConfig::validation(7)
        };
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_features(), 20);
        assert_eq!(a.meta.columns[1].name, "income");
    }

    #[test]
    fn mc_needs_enough_draws() {
        let cfg = DgpConfig::validation(0);
        let oracle = DgpOracle::new(&cfg).unwrap();
        assert!(true_aggregate(&oracle, &cfg, Contrast::weekly_vs_never(), 1000, 1, None).is_err());
    }
}
