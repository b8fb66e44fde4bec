//! IATEs, GATEs and ATEs from the forest weights, with weight-based
//! standard errors.
//!
//! For prediction point x and arm d, `μ̂_d(x) = Σ_i w^d_i(x) y_i`. Its
//! variance is estimated by `Σ_i w^d_i(x)² (y_i − ŷ_i)²`, where ŷ_i is the
//! leave-one-out forest mean of observation i's own arm at its own
//! covariates. Contrasts add the two arm variances. Aggregates (ATE, GATE)
//! first average the weight rows with observation weights ω and then apply
//! the same formula.

mod support;

use serde::{Deserialize, Serialize};

use crate::arm::{Contrast, N_ARMS};
use crate::binning::{self, Binning};
use crate::error::{invalid_arg, Error, Result};
use crate::forest::WeightMatrix;
use crate::stats;

pub use support::{common_support_check, SupportParams, SupportReport};

/// Kish effective sample size below which a cell is flagged unreliable.
pub const MIN_ESS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationOptions {
    /// Weight observations by the inverse empirical share of their arm.
    pub share_weights: bool,
    /// Groups with fewer supported observations are merged.
    pub min_group_size: usize,
    /// Confidence level of the GATE deviation bands.
    pub ci_level: f64,
}

impl Default for AggregationOptions {
    fn default() -> Self {
        AggregationOptions {
            share_weights: true,
            min_group_size: 20,
            ci_level: 0.90,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    /// Kish effective sample size of the underlying weights (smallest arm).
    pub ess: f64,
    pub unreliable: bool,
}

impl Estimate {
    fn new(estimate: f64, var: f64, ess: f64) -> Self {
        let se = var.max(0.0).sqrt();
        Estimate {
            estimate,
            se,
            p_value: stats::p_value(estimate, se),
            ess,
            unreliable: ess < MIN_ESS,
        }
    }

    pub fn t_stat(&self) -> f64 {
        self.estimate / self.se
    }

    pub fn ci(&self, level: f64) -> (f64, f64) {
        let z = stats::z_crit(level);
        (self.estimate - z * self.se, self.estimate + z * self.se)
    }

    pub fn scaled(&self, f: f64) -> Estimate {
        Estimate {
            estimate: self.estimate * f,
            se: self.se * f.abs(),
            ..*self
        }
    }
}

/// Leave-one-out cohort mean residuals `y_i − ŷ_i` for every weight column.
///
/// `weights` must be evaluated at the sample itself (row i = observation
/// i). ŷ_i removes i's own contribution from its arm's weighted mean; rows
/// without support, or where i carries all of its arm's weight, fall back
/// to the arm mean over all weight columns.
pub fn cohort_residuals(weights: &WeightMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if weights.n_rows() != weights.n_cols || y.len() != weights.n_cols {
        return Err(invalid_arg!(
            "residuals need weights evaluated at the sample ({} rows, {} columns, {} outcomes)",
            weights.n_rows(),
            weights.n_cols,
            y.len()
        ));
    }
    let mut in_weights = vec![false; weights.n_cols];
    for row in &weights.rows {
        for &c in &row.cols {
            in_weights[c as usize] = true;
        }
    }
    let mut arm_sum = [0.0; N_ARMS];
    let mut arm_n = [0usize; N_ARMS];
    for (i, &used) in in_weights.iter().enumerate() {
        if used {
            let a = weights.col_arm[i] as usize;
            arm_sum[a] += y[i];
            arm_n[a] += 1;
        }
    }
    let arm_mean: [f64; N_ARMS] = std::array::from_fn(|a| arm_sum[a] / arm_n[a].max(1) as f64);
    Ok((0..weights.n_cols)
        .map(|i| {
            let a = weights.col_arm[i] as usize;
            if !in_weights[i] {
                return y[i] - arm_mean[a];
            }
            let row = &weights.rows[i];
            if !row.supported() {
                return y[i] - arm_mean[a];
            }
            let mu = weights.arm_means(i, y)[a];
            let wii = weights.get(i, i);
            let fitted = if 1.0 - wii > 1e-12 {
                (mu - wii * y[i]) / (1.0 - wii)
            } else {
                arm_mean[a]
            };
            y[i] - fitted
        })
        .collect())
}

/// Per prediction point: potential outcomes and all lower-triangle
/// contrasts with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IateResult {
    pub contrasts: Vec<Contrast>,
    pub supported: Vec<bool>,
    /// `[row][arm]`.
    pub potential: Vec<[f64; N_ARMS]>,
    pub potential_se: Vec<[f64; N_ARMS]>,
    /// `[row][contrast]`, in `contrasts` order; NaN where unsupported.
    pub effect: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// Smallest per-arm Kish effective sample size of the row's weights.
    pub ess: Vec<f64>,
}

impl IateResult {
    pub fn n_rows(&self) -> usize {
        self.supported.len()
    }

    pub fn n_unsupported(&self) -> usize {
        self.supported.iter().filter(|s| !**s).count()
    }

    pub fn contrast_index(&self, c: Contrast) -> Option<usize> {
        self.contrasts.iter().position(|&k| k == c)
    }

    /// Effect column for `c` (any orientation).
    pub fn column(&self, c: Contrast) -> Result<Vec<f64>> {
        let (k, sign) = match self.contrast_index(c) {
            Some(k) => (k, 1.0),
            None => (
                self.contrast_index(c.reversed())
                    .ok_or_else(|| invalid_arg!("contrast {} not estimated", c.label()))?,
                -1.0,
            ),
        };
        Ok(self.effect.iter().map(|r| sign * r[k]).collect())
    }
}

/// IATEs for every row of `weights` against outcomes `y`, using the
/// sample's cohort residuals for the variance.
pub fn estimate_iates(weights: &WeightMatrix, y: &[f64], residuals: &[f64]) -> Result<IateResult> {
    if y.len() != weights.n_cols || residuals.len() != weights.n_cols {
        return Err(invalid_arg!(
            "{} weight columns but {} outcomes and {} residuals",
            weights.n_cols,
            y.len(),
            residuals.len()
        ));
    }
    if weights.n_unsupported() == weights.n_rows() {
        return Err(Error::Support("no prediction point has support in every arm".into()));
    }
    let contrasts = Contrast::lower_triangle();
    let n = weights.n_rows();
    let mut out = IateResult {
        contrasts: contrasts.clone(),
        supported: Vec::with_capacity(n),
        potential: Vec::with_capacity(n),
        potential_se: Vec::with_capacity(n),
        effect: Vec::with_capacity(n),
        se: Vec::with_capacity(n),
        ess: Vec::with_capacity(n),
    };
    for (r, row) in weights.rows.iter().enumerate() {
        if !row.supported() {
            out.supported.push(false);
            out.potential.push([f64::NAN; N_ARMS]);
            out.potential_se.push([f64::NAN; N_ARMS]);
            out.effect.push(vec![f64::NAN; contrasts.len()]);
            out.se.push(vec![f64::NAN; contrasts.len()]);
            out.ess.push(0.0);
            continue;
        }
        let mu = weights.arm_means(r, y);
        let mut var = [0.0; N_ARMS];
        let mut sq = [0.0; N_ARMS];
        for (&c, &w) in row.cols.iter().zip(&row.w) {
            let a = weights.col_arm[c as usize] as usize;
            var[a] += w * w * residuals[c as usize] * residuals[c as usize];
            sq[a] += w * w;
        }
        out.supported.push(true);
        out.potential.push(mu);
        out.potential_se.push(var.map(f64::sqrt));
        out.effect
            .push(contrasts.iter().map(|c| mu[c.treated] - mu[c.control]).collect());
        out.se.push(
            contrasts
                .iter()
                .map(|c| (var[c.treated] + var[c.control]).sqrt())
                .collect(),
        );
        out.ess.push(sq.iter().map(|s| 1.0 / s).fold(f64::INFINITY, f64::min));
    }
    Ok(out)
}

/// Observation weights ω_r ∝ 1/share(d_r) over supported rows (or uniform
/// without share weighting), normalized to sum to one. Zero for
/// unsupported rows.
pub fn observation_weights(d: &[u8], supported: &[bool], share_weights: bool) -> Vec<f64> {
    let mut counts = [0usize; N_ARMS];
    for (&a, &s) in d.iter().zip(supported) {
        if s {
            counts[a as usize] += 1;
        }
    }
    let raw: Vec<f64> = d
        .iter()
        .zip(supported)
        .map(|(&a, &s)| match (s, share_weights) {
            (false, _) => 0.0,
            (true, false) => 1.0,
            (true, true) => 1.0 / counts[a as usize] as f64,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| if total > 0.0 { w / total } else { 0.0 }).collect()
}

/// Weight-averaged arm means over a set of prediction rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Supported rows in the set.
    pub rows: usize,
    /// Total observation weight of the set.
    pub mass: f64,
    pub mu: [f64; N_ARMS],
    pub var: [f64; N_ARMS],
    pub ess: [f64; N_ARMS],
    /// Averaged weight over every column.
    pub weights: Vec<f64>,
}

impl Aggregate {
    pub fn contrast(&self, c: Contrast) -> Estimate {
        Estimate::new(
            self.mu[c.treated] - self.mu[c.control],
            self.var[c.treated] + self.var[c.control],
            self.ess[c.treated].min(self.ess[c.control]),
        )
    }

    pub fn potential(&self, d: usize) -> Estimate {
        Estimate::new(self.mu[d], self.var[d], self.ess[d])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub contrast: Contrast,
    #[serde(flatten)]
    pub estimate: Estimate,
}

/// Potential outcomes (diagonal) and pairwise contrasts (lower triangle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub potential: Vec<Estimate>,
    pub contrasts: Vec<ContrastEstimate>,
    pub n_used: usize,
    pub n_unsupported: usize,
    pub share_weights: bool,
}

impl EffectTable {
    /// θ̂(m, l) for any ordered pair of distinct arms.
    pub fn effect(&self, m: usize, l: usize) -> Result<Estimate> {
        let c = Contrast::new(m, l)?;
        if let Some(e) = self.contrasts.iter().find(|e| e.contrast == c) {
            return Ok(e.estimate);
        }
        let e = self
            .contrasts
            .iter()
            .find(|e| e.contrast == c.reversed())
            .ok_or_else(|| invalid_arg!("contrast {} not in table", c.label()))?;
        Ok(Estimate {
            estimate: -e.estimate.estimate,
            ..e.estimate
        })
    }

    /// Every estimate and SE multiplied by `f` (100 for percentage points).
    pub fn scaled(&self, f: f64) -> EffectTable {
        EffectTable {
            potential: self.potential.iter().map(|e| e.scaled(f)).collect(),
            contrasts: self
                .contrasts
                .iter()
                .map(|c| ContrastEstimate {
                    contrast: c.contrast,
                    estimate: c.estimate.scaled(f),
                })
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    /// Supported observations in the group.
    pub size: usize,
    /// Share of the total observation weight.
    pub mass: f64,
    pub gate: Estimate,
    /// GATE − ATE, with the SE of the weight difference.
    pub deviation: Estimate,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTable {
    pub variable: String,
    pub contrast: Contrast,
    pub ate: Estimate,
    pub rows: Vec<GateRow>,
    pub merged_groups: usize,
    pub ci_level: f64,
}

impl GateTable {
    /// Σ_g mass_g · GATE_g, which equals the ATE.
    pub fn mass_weighted_mean(&self) -> f64 {
        self.rows.iter().map(|r| r.mass * r.gate.estimate).sum()
    }
}

/// IATEs plus everything needed to aggregate them.
#[derive(Debug, Clone)]
pub struct Effects {
    pub weights: WeightMatrix,
    pub y: Vec<f64>,
    /// Treatment of each prediction row.
    pub d: Vec<u8>,
    pub residuals: Vec<f64>,
    pub iates: IateResult,
    pub obs_weights: Vec<f64>,
    pub options: AggregationOptions,
}

impl Effects {
    /// `weights` must be evaluated at the sample (`d`, `y`) itself.
    pub fn new(weights: WeightMatrix, y: Vec<f64>, d: Vec<u8>, options: AggregationOptions) -> Result<Effects> {
        if d.len() != weights.n_rows() {
            return Err(invalid_arg!("{} treatments for {} prediction rows", d.len(), weights.n_rows()));
        }
        let residuals = cohort_residuals(&weights, &y)?;
        let iates = estimate_iates(&weights, &y, &residuals)?;
        let obs_weights = observation_weights(&d, &iates.supported, options.share_weights);
        Ok(Effects {
            weights,
            y,
            d,
            residuals,
            iates,
            obs_weights,
            options,
        })
    }

    /// Aggregate over `rows` with the observation weights renormalized
    /// within the set.
    pub fn aggregate(&self, rows: &[usize]) -> Aggregate {
        let mass: f64 = rows.iter().map(|&r| self.obs_weights[r]).sum();
        let mut w = vec![0.0; self.weights.n_cols];
        let mut used = 0;
        if mass > 0.0 {
            for &r in rows {
                let o = self.obs_weights[r] / mass;
                if o == 0.0 {
                    continue;
                }
                used += 1;
                let row = &self.weights.rows[r];
                for (&c, &v) in row.cols.iter().zip(&row.w) {
                    w[c as usize] += o * v;
                }
            }
        }
        let mut mu = [0.0; N_ARMS];
        let mut var = [0.0; N_ARMS];
        let mut sq = [0.0; N_ARMS];
        for (i, &v) in w.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let a = self.weights.col_arm[i] as usize;
            mu[a] += v * self.y[i];
            var[a] += v * v * self.residuals[i] * self.residuals[i];
            sq[a] += v * v;
        }
        Aggregate {
            rows: used,
            mass,
            mu,
            var,
            ess: sq.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 }),
            weights: w,
        }
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.weights.n_rows()).collect()
    }

    pub fn ate(&self) -> EffectTable {
        let agg = self.aggregate(&self.all_rows());
        EffectTable {
            potential: (0..N_ARMS).map(|d| agg.potential(d)).collect(),
            contrasts: Contrast::lower_triangle()
                .into_iter()
                .map(|c| ContrastEstimate {
                    contrast: c,
                    estimate: agg.contrast(c),
                })
                .collect(),
            n_used: agg.rows,
            n_unsupported: self.iates.n_unsupported(),
            share_weights: self.options.share_weights,
        }
    }

    /// GATEs of `contrast` over groups of `values` (one per prediction row).
    pub fn gates(&self, variable: &str, values: &[f64], binning: Binning, contrast: Contrast) -> Result<GateTable> {
        if values.len() != self.weights.n_rows() {
            return Err(invalid_arg!(
                "{} heterogeneity values for {} prediction rows",
                values.len(),
                self.weights.n_rows()
            ));
        }
        let supported = &self.iates.supported;
        let sup_values: Vec<f64> = values
            .iter()
            .zip(supported)
            .filter(|(_, s)| **s)
            .map(|(v, _)| *v)
            .collect();
        let mut bins = binning::assign(&sup_values, binning);
        let merged_groups = bins.merge_small(|b, g| b.assignment.iter().filter(|&&a| a == g).count(), self.options.min_group_size);
        if merged_groups > 0 {
            log::warn!("{variable}: merged {merged_groups} groups below {} observations", self.options.min_group_size);
        }
        // Map supported rows to their group.
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins.groups.len()];
        let mut k = 0;
        for (r, s) in supported.iter().enumerate() {
            if *s {
                members[bins.assignment[k]].push(r);
                k += 1;
            }
        }
        let overall = self.aggregate(&self.all_rows());
        let ate = overall.contrast(contrast);
        let z = stats::z_crit(self.options.ci_level);
        let rows = bins
            .groups
            .iter()
            .zip(&members)
            .map(|(g, rows)| {
                let agg = self.aggregate(rows);
                let gate = agg.contrast(contrast);
                let mut dvar = 0.0;
                for (i, (&gw, &aw)) in agg.weights.iter().zip(&overall.weights).enumerate() {
                    let a = self.weights.col_arm[i] as usize;
                    if a == contrast.treated || a == contrast.control {
                        let dw = gw - aw;
                        dvar += dw * dw * self.residuals[i] * self.residuals[i];
                    }
                }
                let deviation = Estimate::new(gate.estimate - ate.estimate, dvar, gate.ess);
                GateRow {
                    label: g.label(),
                    lo: g.lo,
                    hi: g.hi,
                    size: agg.rows,
                    mass: agg.mass,
                    gate,
                    ci_lo: deviation.estimate - z * deviation.se,
                    ci_hi: deviation.estimate + z * deviation.se,
                    deviation,
                }
            })
            .collect();
        Ok(GateTable {
            variable: variable.to_string(),
            contrast,
            ate,
            rows,
            merged_groups,
            ci_level: self.options.ci_level,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::WeightRow;

    /// Two prediction rows over four observations, one per arm, uniform
    /// weights where supported.
    fn toy() -> WeightMatrix {
        WeightMatrix {
            n_cols: 8,
            col_arm: vec![0, 0, 1, 1, 2, 2, 3, 3],
            rows: (0..8)
                .map(|r| {
                    if r == 7 {
                        WeightRow {
                            cols: vec![],
                            w: vec![],
                            trees: 0,
                        }
                    } else {
                        WeightRow {
                            cols: (0..8).collect(),
                            w: vec![0.5; 8],
                            trees: 1,
                        }
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn constant_outcome_gives_zero_effects() {
        let w = toy();
        let y = vec![1.0; 8];
        let res = cohort_residuals(&w, &y).unwrap();
        let iates = estimate_iates(&w, &y, &res).unwrap();
        for r in 0..7 {
            assert!(iates.effect[r].iter().all(|&e| e == 0.0));
        }
        assert!(!iates.supported[7]);
        assert_eq!(iates.n_unsupported(), 1);
    }

    #[test]
    fn uniform_weights_match_textbook_se() {
        // One row, arm 0 with n uniform weights, every residual against the
        // leave-one-out mean.
        let n = 10;
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let w = WeightMatrix {
            n_cols: n,
            col_arm: vec![0; n],
            rows: vec![WeightRow {
                cols: (0..n as u32).collect(),
                w: vec![1.0 / n as f64; n],
                trees: 1,
            }],
        };
        let loo: Vec<f64> = (0..n)
            .map(|i| {
                let m = (y.iter().sum::<f64>() - y[i]) / (n - 1) as f64;
                y[i] - m
            })
            .collect();
        let iates = estimate_iates(&w, &y, &loo).unwrap();
        // Σ (1/n)² (y_i − ȳ_{-i})² = (n/(n-1))² s²_ML / n; compare with s/√n.
        let ybar = 0.5;
        let s2: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / (n - 1) as f64;
        let textbook = (s2 / n as f64).sqrt();
        let got = iates.potential_se[0][0];
        assert!((got - textbook * (n as f64 / (n - 1) as f64).sqrt()).abs() < 1e-12, "{got} vs {textbook}");
    }

    #[test]
    fn point_mass_is_unreliable() {
        let w = WeightMatrix {
            n_cols: 4,
            col_arm: vec![0, 1, 2, 3],
            rows: vec![WeightRow {
                cols: vec![0, 1, 2, 3],
                w: vec![1.0; 4],
                trees: 1,
            }],
        };
        let y = [1.0, 0.0, 1.0, 0.0];
        let iates = estimate_iates(&w, &y, &[0.0; 4]).unwrap();
        assert_eq!(iates.se[0][0], 0.0);
        assert_eq!(iates.ess[0], 1.0);
    }

    #[test]
    fn observation_weights_balance_arms() {
        let d = [0, 0, 0, 1, 2, 3, 3, 3];
        let s = [true; 8];
        let w = observation_weights(&d, &s, true);
        let per_arm: Vec<f64> = (0..4)
            .map(|a| d.iter().zip(&w).filter(|(x, _)| **x == a).map(|(_, v)| v).sum())
            .collect();
        for v in per_arm {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let w = observation_weights(&d, &s, false);
        assert!(w.iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn table_reports_reverse_contrasts() {
        let mk = |e| Estimate::new(e, 0.01, 100.0);
        let table = EffectTable {
            potential: vec![mk(0.025), mk(0.03), mk(0.033), mk(0.0382)],
            contrasts: vec![ContrastEstimate {
                contrast: Contrast::new(3, 0).unwrap(),
                estimate: mk(0.0132),
            }],
            n_used: 1,
            n_unsupported: 0,
            share_weights: true,
        };
        assert_eq!(table.effect(0, 3).unwrap().estimate, -0.0132);
        assert!(table.effect(1, 1).is_err());
        assert!(table.effect(2, 1).is_err());
    }
}
