//! k-means++ with Lloyd iterations and restarts.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

const MAX_ITER: usize = 300;
const SHIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// Cluster of every point; clusters are numbered by ascending mean.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
    pub iterations: usize,
    /// Objective after every assignment step of the winning restart.
    pub objective_trace: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = vec![point(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(point(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        // Guard against landing on an existing centroid through rounding.
        if d2[pick] == 0.0 {
            pick = (0..n)
                .max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a)))
                .expect("non-empty");
        }
        let c = point(pick).to_vec();
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(dist2(point(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(data: &[f64], dim: usize, mut centroids: Vec<Vec<f64>>) -> KMeans {
    let n = data.len() / dim;
    let k = centroids.len();
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut objective = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, cent)| (c, dist2(point(i), cent)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            *label = best;
            objective += d;
        }
        trace.push(objective);
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Empty cluster: restart it at the worst-fitting point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(point(a), &centroids[labels[a]])
                            .total_cmp(&dist2(point(b), &centroids[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty");
                point(far).to_vec()
            };
            shift = shift.max(dist2(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < SHIFT_TOL || iterations >= MAX_ITER {
            break;
        }
    }
    let inertia = (0..n).map(|i| dist2(point(i), &centroids[labels[i]])).sum();
    KMeans {
        labels,
        centroids,
        inertia,
        iterations,
        objective_trace: trace,
    }
}

fn run(data: &[f64], dim: usize, order_by: &[f64], k: usize, seed: u64, n_init: usize) -> Result<KMeans> {
    let n = data.len() / dim;
    if k == 0 {
        return Err(invalid_arg!("k must be at least 1"));
    }
    if n_init == 0 {
        return Err(invalid_arg!("n_init must be at least 1"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg!("clustering input contains non-finite values"));
    }
    let distinct: BTreeSet<Vec<u64>> = (0..n)
        .map(|i| data[i * dim..(i + 1) * dim].iter().map(|v| v.to_bits()).collect())
        .collect();
    if k > distinct.len() {
        return Err(invalid_arg!("k = {k} exceeds the {} distinct values", distinct.len()));
    }
    let runs: Vec<KMeans> = (0..n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(data, dim, seed_centroids(data, dim, k, &mut rng))
        })
        .collect();
    let mut best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("n_init >= 1");
    // Relabel by ascending cluster mean of `order_by`.
    let mut mean = vec![(0.0, 0usize); k];
    for (&l, &v) in best.labels.iter().zip(order_by) {
        mean[l].0 += v;
        mean[l].1 += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ma = mean[a].0 / mean[a].1.max(1) as f64;
        let mb = mean[b].0 / mean[b].1.max(1) as f64;
        ma.total_cmp(&mb).then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    best.labels.iter_mut().for_each(|l| *l = rank[*l]);
    best.centroids = order.iter().map(|&o| best.centroids[o].clone()).collect();
    Ok(best)
}

/// Cluster one-dimensional effects.
pub fn kmeanspp_cluster(values: &[f64], k: usize, seed: u64, n_init: usize) -> Result<KMeans> {
    run(values, 1, values, k, seed, n_init)
}

/// Cluster several effect columns jointly, optionally standardizing each.
/// Clusters are ordered by the mean of the first column.
pub fn kmeanspp_cluster_multi(
    columns: &[Vec<f64>],
    k: usize,
    seed: u64,
    n_init: usize,
    standardize: bool,
) -> Result<KMeans> {
    let dim = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if dim == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(invalid_arg!("columns must be non-empty and equally long"));
    }
    let scaled: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            if !standardize {
                return c.clone();
            }
            let m = crate::stats::mean(c);
            let s = crate::stats::std_dev(c);
            let s = if s > 0.0 { s } else { 1.0 };
            c.iter().map(|v| (v - m) / s).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        data.extend(scaled.iter().map(|c| c[i]));
    }
    run(&data, dim, &columns[0], k, seed, n_init)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// 1-based cluster number; 0 for the whole-sample column.
    pub cluster: usize,
    pub size: usize,
    pub share: f64,
    pub mean_effect: f64,
    pub descriptor_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub descriptors: Vec<String>,
    pub clusters: Vec<ClusterStats>,
    pub total: ClusterStats,
}

/// Per-cluster means of the effect and of descriptor columns that played no
/// part in forming the clusters.
pub fn cluster_profile(
    labels: &[usize],
    k: usize,
    effects: &[f64],
    descriptors: &[(String, Vec<f64>)],
) -> Result<ClusterSummary> {
    let n = labels.len();
    if effects.len() != n || descriptors.iter().any(|(_, v)| v.len() != n) {
        return Err(invalid_arg!("profile inputs differ in length"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(invalid_arg!("label {bad} outside 0..{k}"));
    }
    let stats_for = |cluster: usize, members: &[usize]| ClusterStats {
        cluster,
        size: members.len(),
        share: members.len() as f64 / n as f64,
        mean_effect: members.iter().map(|&i| effects[i]).sum::<f64>() / members.len() as f64,
        descriptor_means: descriptors
            .iter()
            .map(|(_, v)| members.iter().map(|&i| v[i]).sum::<f64>() / members.len() as f64)
            .collect(),
    };
    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            return Err(Error::Numerical(format!("cluster {} is empty", c + 1)));
        }
        clusters.push(stats_for(c + 1, &members));
    }
    let all: Vec<usize> = (0..n).collect();
    Ok(ClusterSummary {
        descriptors: descriptors.iter().map(|(name, _)| name.clone()).collect(),
        clusters,
        total: stats_for(0, &all),
    })
}
