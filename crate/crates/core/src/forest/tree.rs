//! Recursive partitioning shared by the causal, regression and
//! classification forests.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::N_ARMS;

/// How a split routes an observation: left iff the rule holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold`.
    Threshold(f64),
    /// `x` is one of these category codes; unseen codes go right.
    Categories(Vec<u32>),
}

impl SplitRule {
    pub fn goes_left(&self, v: f64) -> bool {
        match self {
            SplitRule::Threshold(t) => v <= *t,
            SplitRule::Categories(set) => v >= 0.0 && set.binary_search(&(v as u32)).is_ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

/// Tree topology; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub n_leaves: usize,
}

impl Topology {
    pub fn leaf_of(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { leaf } => return *leaf,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => k = if rule.goes_left(x[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Multi-arm effect heterogeneity with a variance and shared-arm
    /// penalty, plus a reward for separating rows by arm share.
    Causal {
        min_leaf_per_arm: usize,
        lambda: f64,
        share_penalty: f64,
    },
    /// Squared-error reduction of the target.
    Regression { min_leaf: usize },
    /// Gini reduction over the arm labels.
    Classification { min_leaf: usize },
}

/// Per-arm count, sum and sum of squares of the target.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ArmStats {
    pub n: [usize; N_ARMS],
    pub s: [f64; N_ARMS],
    pub ss: [f64; N_ARMS],
}

impl ArmStats {
    fn add(&mut self, arm: usize, v: f64) {
        self.n[arm] += 1;
        self.s[arm] += v;
        self.ss[arm] += v * v;
    }

    fn minus(&self, o: &ArmStats) -> ArmStats {
        ArmStats {
            n: std::array::from_fn(|d| self.n[d] - o.n[d]),
            s: std::array::from_fn(|d| self.s[d] - o.s[d]),
            ss: std::array::from_fn(|d| self.ss[d] - o.ss[d]),
        }
    }

    fn total(&self) -> usize {
        self.n.iter().sum()
    }

    fn sum(&self) -> f64 {
        self.s.iter().sum()
    }

    fn mean(&self, d: usize) -> f64 {
        self.s[d] / self.n[d] as f64
    }

    /// Variance of the arm mean, s²/n.
    fn mean_var(&self, d: usize) -> f64 {
        let n = self.n[d] as f64;
        if n < 2.0 {
            return 0.0;
        }
        let m = self.s[d] / n;
        ((self.ss[d] - n * m * m) / (n - 1.0)).max(0.0) / n
    }
}

/// Causal split score for a candidate partition of the node.
///
/// `n_L·n_R·[Σ_c (θ_c,L − θ_c,R)² − (K−1)(1 + λ(K−1))·Σ_child Σ_d Var(Ȳ_d,child)]`
/// summed over all K(K−1)/2 contrasts c = (m, l). The first penalty term is
/// the summed variance of the child contrast estimates; the second charges
/// each arm mean once per contrast it enters, as those errors are shared.
/// `share_penalty·Σ_d (s_d,L − s_d,R)²` inside the bracket, with s_d the
/// arm shares of a child, is the Gini reduction over arm labels; it steers
/// splits toward the covariates that drive selection.
pub(crate) fn causal_score(left: &ArmStats, right: &ArmStats, lambda: f64, share_penalty: f64) -> f64 {
    let mut signal = 0.0;
    for m in 1..N_ARMS {
        for l in 0..m {
            let dl = left.mean(m) - left.mean(l);
            let dr = right.mean(m) - right.mean(l);
            signal += (dl - dr) * (dl - dr);
        }
    }
    let k1 = (N_ARMS - 1) as f64;
    let var: f64 = (0..N_ARMS).map(|d| left.mean_var(d) + right.mean_var(d)).sum();
    let penalty = k1 * (1.0 + lambda * k1) * var;
    let (nl, nr) = (left.total() as f64, right.total() as f64);
    let imbalance: f64 = (0..N_ARMS)
        .map(|d| (left.n[d] as f64 / nl - right.n[d] as f64 / nr).powi(2))
        .sum();
    nl * nr * (signal - penalty + share_penalty * imbalance)
}

impl Objective {
    fn feasible(&self, left: &ArmStats, right: &ArmStats) -> bool {
        match *self {
            Objective::Causal { min_leaf_per_arm, .. } => {
                (0..N_ARMS).all(|d| left.n[d] >= min_leaf_per_arm && right.n[d] >= min_leaf_per_arm)
            }
            Objective::Regression { min_leaf } | Objective::Classification { min_leaf } => {
                left.total() >= min_leaf && right.total() >= min_leaf
            }
        }
    }

    fn score(&self, left: &ArmStats, right: &ArmStats) -> f64 {
        match *self {
            Objective::Causal {
                lambda, share_penalty, ..
            } => causal_score(left, right, lambda, share_penalty),
            Objective::Regression { .. } => {
                left.sum().powi(2) / left.total() as f64 + right.sum().powi(2) / right.total() as f64
            }
            Objective::Classification { .. } => [left, right]
                .iter()
                .map(|c| c.n.iter().map(|&k| (k * k) as f64).sum::<f64>() / c.total() as f64)
                .sum(),
        }
    }

    /// Score of leaving the node unsplit; `None` when any feasible split
    /// counts as an improvement.
    fn baseline(&self, node: &ArmStats) -> Option<f64> {
        match *self {
            Objective::Causal { .. } => None,
            Objective::Regression { .. } => Some(node.sum().powi(2) / node.total() as f64),
            Objective::Classification { .. } => {
                Some(node.n.iter().map(|&k| (k * k) as f64).sum::<f64>() / node.total() as f64)
            }
        }
    }
}

/// Training view: covariates, per-row split target and arm.
pub(crate) struct GrowData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub unordered: &'a [bool],
    pub target: &'a [f64],
    pub arm: &'a [u8],
}

struct Candidate {
    score: f64,
    feature: usize,
    rule: SplitRule,
}

fn node_stats(data: &GrowData<'_>, rows: &[usize]) -> ArmStats {
    let mut st = ArmStats::default();
    for &i in rows {
        st.add(data.arm[i] as usize, data.target[i]);
    }
    st
}

fn best_ordered(
    data: &GrowData<'_>,
    rows: &[usize],
    total: &ArmStats,
    j: usize,
    objective: &Objective,
    best: &mut Option<Candidate>,
) {
    let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&i| (data.x[[i, j]], i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if sorted.first().map(|f| f.0) == sorted.last().map(|l| l.0) {
        return;
    }
    let mut left = ArmStats::default();
    for k in 0..sorted.len() - 1 {
        let (v, i) = sorted[k];
        left.add(data.arm[i] as usize, data.target[i]);
        let next = sorted[k + 1].0;
        if v == next {
            continue;
        }
        let right = total.minus(&left);
        if !objective.feasible(&left, &right) {
            continue;
        }
        let score = objective.score(&left, &right);
        if best.as_ref().is_none_or(|b| score > b.score) {
            let mut thr = v + (next - v) / 2.0;
            if thr >= next {
                thr = v;
            }
            *best = Some(Candidate {
                score,
                feature: j,
                rule: SplitRule::Threshold(thr),
            });
        }
    }
}

fn best_unordered(
    data: &GrowData<'_>,
    rows: &[usize],
    total: &ArmStats,
    j: usize,
    objective: &Objective,
    best: &mut Option<Candidate>,
) {
    // Per category: stats plus the pooled target mean used for ordering.
    let mut cats: std::collections::BTreeMap<u32, ArmStats> = std::collections::BTreeMap::new();
    for &i in rows {
        cats.entry(data.x[[i, j]] as u32)
            .or_default()
            .add(data.arm[i] as usize, data.target[i]);
    }
    if cats.len() < 2 {
        return;
    }
    let mut order: Vec<(f64, u32, ArmStats)> = cats
        .into_iter()
        .map(|(c, st)| (st.sum() / st.total() as f64, c, st))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut left = ArmStats::default();
    for k in 0..order.len() - 1 {
        let st = &order[k].2;
        for d in 0..N_ARMS {
            left.n[d] += st.n[d];
            left.s[d] += st.s[d];
            left.ss[d] += st.ss[d];
        }
        let right = total.minus(&left);
        if !objective.feasible(&left, &right) {
            continue;
        }
        let score = objective.score(&left, &right);
        if best.as_ref().is_none_or(|b| score > b.score) {
            let mut set: Vec<u32> = order[..=k].iter().map(|o| o.1).collect();
            set.sort_unstable();
            *best = Some(Candidate {
                score,
                feature: j,
                rule: SplitRule::Categories(set),
            });
        }
    }
}

/// Grow a tree on `rows`. Returns the topology and, per leaf, the training
/// rows that ended there.
pub(crate) fn grow(
    data: &GrowData<'_>,
    rows: Vec<usize>,
    objective: Objective,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> (Topology, Vec<Vec<usize>>) {
    let p = data.x.ncols();
    let mtry = mtry.clamp(1, p);
    let mut nodes: Vec<Node> = vec![Node::Leaf { leaf: usize::MAX }];
    let mut leaves: Vec<Vec<usize>> = Vec::new();
    // Depth-first, left child first, so node numbering is deterministic.
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, rows)];
    while let Some((slot, rows)) = stack.pop() {
        let total = node_stats(data, &rows);
        let mut features = index::sample(rng, p, mtry).into_vec();
        features.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &j in &features {
            if data.unordered[j] {
                best_unordered(data, &rows, &total, j, &objective, &mut best);
            } else {
                best_ordered(data, &rows, &total, j, &objective, &mut best);
            }
        }
        let improves = match (&best, objective.baseline(&total)) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(b), Some(base)) => b.score > base * (1.0 + 1e-12) + 1e-12,
        };
        if !improves {
            nodes[slot] = Node::Leaf { leaf: leaves.len() };
            leaves.push(rows);
            continue;
        }
        let Candidate { feature, rule, .. } = best.expect("checked above");
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| rule.goes_left(data.x[[i, feature]]));
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes.push(Node::Leaf { leaf: usize::MAX });
        nodes[slot] = Node::Split {
            feature,
            rule,
            left,
            right,
        };
        stack.push((right, r_rows));
        stack.push((left, l_rows));
    }
    let n_leaves = leaves.len();
    (Topology { nodes, n_leaves }, leaves)
}
