//! Forest predictions as normalized weights over honest observations.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Forest;
use crate::arm::N_ARMS;
use crate::error::{invalid_arg, Result};

/// Weights of one prediction point. Columns are sample rows; the arm of a
/// column is read from [`WeightMatrix::col_arm`]. Within each arm the
/// weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub cols: Vec<u32>,
    pub w: Vec<f64>,
    /// Trees that contributed (held every arm in the reached leaf).
    pub trees: u32,
}

impl WeightRow {
    pub fn supported(&self) -> bool {
        self.trees > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub n_cols: usize,
    pub col_arm: Vec<u8>,
    pub rows: Vec<WeightRow>,
}

impl WeightMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_unsupported(&self) -> usize {
        self.rows.iter().filter(|r| !r.supported()).count()
    }

    /// Per-arm weight totals of row `r` (1 for every arm when supported).
    pub fn arm_sums(&self, r: usize) -> [f64; N_ARMS] {
        let row = &self.rows[r];
        let mut s = [0.0; N_ARMS];
        for (&c, &w) in row.cols.iter().zip(&row.w) {
            s[self.col_arm[c as usize] as usize] += w;
        }
        s
    }

    /// Per-arm weighted outcome `Σ_i w^d_i y_i` of row `r`.
    pub fn arm_means(&self, r: usize, y: &[f64]) -> [f64; N_ARMS] {
        let row = &self.rows[r];
        let mut s = [0.0; N_ARMS];
        for (&c, &w) in row.cols.iter().zip(&row.w) {
            s[self.col_arm[c as usize] as usize] += w * y[c as usize];
        }
        s
    }

    /// Weight of column `c` in row `r`, zero if absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.rows[r];
        match row.cols.binary_search(&(c as u32)) {
            Ok(k) => row.w[k],
            Err(_) => 0.0,
        }
    }
}

/// `w^d_i(x) = (1/S_x) Σ_s 1{i ∈ L_s(x), D_i = d} / #{j ∈ L_s(x): D_j = d}`
/// where the sum and `S_x` run over trees whose leaf at `x` holds honest
/// observations of every arm. A tree missing any arm abstains for the
/// whole row, so all contrasts of a row average over the same trees.
pub fn compute_weights(forest: &Forest, query: ArrayView2<'_, f64>) -> Result<WeightMatrix> {
    if query.ncols() != forest.n_features() {
        return Err(invalid_arg!(
            "query has {} columns, forest was trained on {}",
            query.ncols(),
            forest.n_features()
        ));
    }
    let n_cols = forest.n_rows;
    let rows: Vec<WeightRow> = (0..query.nrows())
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n_cols], Vec::<u32>::new()),
            |(buf, touched), r| {
                let x = query.row(r);
                let mut trees = 0u32;
                for tree in &forest.trees {
                    let leaf = tree.leaf_of(x);
                    if !tree.leaf_complete(leaf) {
                        continue;
                    }
                    trees += 1;
                    for members in &tree.leaf_members[leaf] {
                        let inv = 1.0 / members.len() as f64;
                        for &i in members {
                            let slot = &mut buf[i as usize];
                            if *slot == 0.0 {
                                touched.push(i);
                            }
                            *slot += inv;
                        }
                    }
                }
                touched.sort_unstable();
                let scale = if trees > 0 { 1.0 / trees as f64 } else { 0.0 };
                let w = touched.iter().map(|&i| buf[i as usize] * scale).collect();
                for &i in touched.iter() {
                    buf[i as usize] = 0.0;
                }
                let cols = std::mem::take(touched);
                WeightRow { cols, w, trees }
            },
        )
        .collect();
    Ok(WeightMatrix {
        n_cols,
        col_arm: forest.arms.clone(),
        rows,
    })
}
