//! GATE equality tests, GATE-minus-ATE tests, IATE clustering and density
//! export.

mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::estimate::GateTable;
use crate::stats;

pub use kmeans::{cluster_profile, kmeanspp_cluster, kmeanspp_cluster_multi, ClusterStats, ClusterSummary, KMeans};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Groups left out because their SE was zero or not finite.
    pub dropped: Vec<String>,
}

/// Wald test that all group effects are equal.
///
/// With Δ_j = g_j − g_J (j < J) and independent groups, Cov(Δ) =
/// diag(v_1..v_{J−1}) + v_J·11'. The quadratic form is evaluated in closed
/// form (Sherman–Morrison).
pub fn wald_from(values: &[f64], ses: &[f64], labels: &[String]) -> Result<WaldResult> {
    if values.len() != ses.len() || values.len() != labels.len() {
        return Err(invalid_arg!("group vectors differ in length"));
    }
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for k in 0..values.len() {
        if ses[k] > 0.0 && ses[k].is_finite() && values[k].is_finite() {
            keep.push(k);
        } else {
            log::warn!("Wald test: dropping group {} with SE {}", labels[k], ses[k]);
            dropped.push(labels[k].clone());
        }
    }
    if keep.len() < 2 {
        return Err(invalid_arg!("Wald test needs at least two groups with positive SE"));
    }
    let last = *keep.last().expect("two or more");
    let v_last = ses[last] * ses[last];
    let mut quad = 0.0;
    let mut lin = 0.0;
    let mut prec = 0.0;
    for &k in &keep[..keep.len() - 1] {
        let v = ses[k] * ses[k];
        let delta = values[k] - values[last];
        quad += delta * delta / v;
        lin += delta / v;
        prec += 1.0 / v;
    }
    let statistic = (quad - v_last * lin * lin / (1.0 + v_last * prec)).max(0.0);
    let df = keep.len() - 1;
    Ok(WaldResult {
        statistic,
        df,
        p_value: stats::chi2_sf(statistic, df),
        dropped,
    })
}

pub fn wald_equality(gates: &GateTable) -> Result<WaldResult> {
    let values: Vec<f64> = gates.rows.iter().map(|r| r.gate.estimate).collect();
    let ses: Vec<f64> = gates.rows.iter().map(|r| r.gate.se).collect();
    let labels: Vec<String> = gates.rows.iter().map(|r| r.label.clone()).collect();
    wald_from(&values, &ses, &labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDeviation {
    pub label: String,
    pub delta: f64,
    pub se: f64,
    pub p_value: f64,
}

/// GATE − ATE per group with the SE of the aggregated-weight difference.
pub fn gate_minus_ate_tests(gates: &GateTable) -> Vec<GateDeviation> {
    gates
        .rows
        .iter()
        .map(|r| GateDeviation {
            label: r.label.clone(),
            delta: r.deviation.estimate,
            se: r.deviation.se,
            p_value: r.deviation.p_value,
        })
        .collect()
}

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·n^(−1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let sd = stats::std_dev(values);
    let iqr = stats::quantile(values, 0.75) - stats::quantile(values, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Epanechnikov kernel scaled to unit variance, support |u| ≤ √5.
fn epanechnikov(u: f64) -> f64 {
    let r5 = 5f64.sqrt();
    if u.abs() >= r5 {
        0.0
    } else {
        0.75 / r5 * (1.0 - u * u / 5.0)
    }
}

/// Kernel density of `values` on `points` equally spaced grid points
/// covering the data plus the kernel support.
pub fn iate_density(values: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 || points < 2 {
        return Err(invalid_arg!("density needs at least two values and two grid points"));
    }
    let mut h = silverman_bandwidth(&finite);
    if !(h > 0.0) {
        h = 1e-6;
    }
    let reach = 5f64.sqrt() * h;
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min) - reach;
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + reach;
    let n = finite.len() as f64;
    Ok((0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let f = finite.iter().map(|v| epanechnikov((x - v) / h)).sum::<f64>() / (n * h);
            (x, f)
        })
        .collect())
}
