//! Grouping a heterogeneity variable into GATE groups.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "bins")]
pub enum Binning {
    /// One group per distinct value.
    Discrete,
    /// Equal-frequency bins.
    Quantiles(usize),
    /// Discrete when there are at most `max_discrete` distinct values,
    /// otherwise `quantiles` equal-frequency bins.
    Auto { max_discrete: usize, quantiles: usize },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Auto {
            max_discrete: 10,
            quantiles: 25,
        }
    }
}

/// A contiguous value range `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub lo: f64,
    pub hi: f64,
}

fn short(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl Group {
    pub fn label(&self) -> String {
        if self.lo == self.hi {
            short(self.lo)
        } else {
            format!("[{}, {}]", short(self.lo), short(self.hi))
        }
    }

    /// Representative value for plotting.
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub groups: Vec<Group>,
    /// Group index of every input value.
    pub assignment: Vec<usize>,
}

impl Bins {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.groups.len()];
        for &g in &self.assignment {
            c[g] += 1;
        }
        c
    }

    /// Merge group `g` into its right neighbour (the last group merges left).
    pub fn merge_into_neighbour(&mut self, g: usize) {
        if self.groups.len() < 2 {
            return;
        }
        let (keep, gone) = if g + 1 < self.groups.len() { (g + 1, g) } else { (g - 1, g) };
        let lo = self.groups[keep].lo.min(self.groups[gone].lo);
        let hi = self.groups[keep].hi.max(self.groups[gone].hi);
        self.groups[keep] = Group { lo, hi };
        self.groups.remove(gone);
        for a in &mut self.assignment {
            if *a == gone {
                *a = keep;
            }
            if *a > gone {
                *a -= 1;
            }
        }
    }

    /// Repeatedly merge the first group whose `count` falls below `min`.
    /// Returns the number of merges performed.
    pub fn merge_small(&mut self, count: impl Fn(&Bins, usize) -> usize, min: usize) -> usize {
        let mut merges = 0;
        while self.groups.len() > 1 {
            match (0..self.groups.len()).find(|&g| count(self, g) < min) {
                Some(g) => {
                    self.merge_into_neighbour(g);
                    merges += 1;
                }
                None => break,
            }
        }
        merges
    }
}

pub fn assign(values: &[f64], binning: Binning) -> Bins {
    let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    let discrete = match binning {
        Binning::Discrete => true,
        Binning::Quantiles(_) => false,
        Binning::Auto { max_discrete, .. } => distinct.len() <= max_discrete,
    };
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    let groups: Vec<Group> = if discrete {
        sorted.iter().map(|&v| Group { lo: v, hi: v }).collect()
    } else {
        let q = match binning {
            Binning::Quantiles(q) => q,
            Binning::Auto { quantiles, .. } => quantiles,
            Binning::Discrete => unreachable!(),
        }
        .max(1);
        let mut all: Vec<f64> = values.to_vec();
        all.sort_by(|a, b| a.total_cmp(b));
        let mut edges: Vec<f64> = (1..q).map(|k| quantile_sorted(&all, k as f64 / q as f64)).collect();
        edges.dedup();
        // Group k holds values in (edge[k-1], edge[k]].
        let mut groups = Vec::new();
        let mut lo_idx = 0;
        for k in 0..=edges.len() {
            let hi_idx = if k < edges.len() {
                sorted.partition_point(|&v| v <= edges[k])
            } else {
                sorted.len()
            };
            if hi_idx > lo_idx {
                groups.push(Group {
                    lo: sorted[lo_idx],
                    hi: sorted[hi_idx - 1],
                });
            }
            lo_idx = hi_idx;
        }
        groups
    };
    let assignment = values
        .iter()
        .map(|&v| groups.partition_point(|g| g.hi < v))
        .collect();
    Bins { groups, assignment }
}
