//! Placebo design on the visit stage.
//!
//! Realized visits (outcome 1) are pooled with imputed potential visits
//! (outcome 0): opposite-sex pairs living within a radius derived from the
//! realized visit distances. A draw matching the main sample's size and arm
//! shares is then run through the same estimator. Treatment should have no
//! effect on being visited.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::N_ARMS;
use crate::data::{
    assemble, haversine_km, pair_covariates, pair_metadata, CentroidTable, EstimationSample, Gender, Interaction,
    UserTable, EARTH_RADIUS_KM,
};
use crate::error::{invalid_arg, Error, Result};
use crate::estimate::EffectTable;
use crate::pipeline::{self, PipelineConfig};
use crate::stats;

const DRAW_STREAM: u64 = 3 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum RadiusRule {
    /// Fraction of the largest realized visit distance.
    ScaledMax(f64),
    /// Quantile of the realized visit distances.
    Quantile(f64),
}

impl Default for RadiusRule {
    fn default() -> Self {
        RadiusRule::ScaledMax(0.95)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enumeration {
    /// Bucket users into a 3-D grid of cell size = radius.
    #[default]
    Grid,
    /// Check every pair.
    Exhaustive,
}

/// Pairs are `(sender, recipient)` indices into `UserTable::users`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub radius_km: f64,
    pub max_realized_km: f64,
    /// Realized visits with a computable distance.
    pub realized: Vec<(u32, u32)>,
    /// Potential but unrealized visits within the radius.
    pub candidates: Vec<(u32, u32)>,
    pub users_without_centroid: usize,
    pub realized_without_centroid: usize,
}

fn ecef(lat: f64, lon: f64) -> [f64; 3] {
    let (p, l) = (lat.to_radians(), lon.to_radians());
    [
        EARTH_RADIUS_KM * p.cos() * l.cos(),
        EARTH_RADIUS_KM * p.cos() * l.sin(),
        EARTH_RADIUS_KM * p.sin(),
    ]
}

/// Every opposite-sex ordered pair within the radius that is not a
/// realized visit.
pub fn impute_potential_visits(
    users: &UserTable,
    realized: &[Interaction],
    centroids: &CentroidTable,
    rule: RadiusRule,
    method: Enumeration,
) -> Result<CandidateSet> {
    if realized.is_empty() {
        return Err(invalid_arg!("no realized visits to derive the radius from"));
    }
    let locs: Vec<Option<(f64, f64)>> = users.users.iter().map(|u| centroids.get(&u.zip)).collect();
    let index: BTreeMap<&str, u32> = users
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.user_id.as_str(), i as u32))
        .collect();
    let resolve = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Data(format!("interaction references unknown user {id:?}")))
    };
    let mut realized_pairs = Vec::with_capacity(realized.len());
    let mut distances = Vec::with_capacity(realized.len());
    let mut realized_without_centroid = 0;
    for it in realized {
        let (s, r) = (resolve(&it.sender_id)?, resolve(&it.recipient_id)?);
        match (locs[s as usize], locs[r as usize]) {
            (Some(a), Some(b)) => {
                realized_pairs.push((s, r));
                distances.push(haversine_km(a, b));
            }
            _ => realized_without_centroid += 1,
        }
    }
    if distances.is_empty() {
        return Err(Error::Data("no realized visit has resolvable locations".into()));
    }
    let max_realized_km = distances.iter().cloned().fold(0.0, f64::max);
    let radius_km = match rule {
        RadiusRule::ScaledMax(f) if f > 0.0 => f * max_realized_km,
        RadiusRule::Quantile(q) if (0.0..=1.0).contains(&q) => stats::quantile(&distances, q),
        other => return Err(invalid_arg!("invalid radius rule {other:?}")),
    };
    let taken: HashSet<(u32, u32)> = realized_pairs.iter().copied().collect();
    let keep = |a: usize, b: usize, pa: (f64, f64), pb: (f64, f64)| {
        a != b
            && users.users[a].gender != users.users[b].gender
            && !taken.contains(&(a as u32, b as u32))
            && haversine_km(pa, pb) <= radius_km
    };
    let located: Vec<(usize, (f64, f64))> = locs
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .collect();
    let mut candidates: Vec<(u32, u32)> = match method {
        Enumeration::Exhaustive => located
            .par_iter()
            .flat_map_iter(|&(a, pa)| {
                located
                    .iter()
                    .filter(move |&&(b, pb)| keep(a, b, pa, pb))
                    .map(move |&(b, _)| (a as u32, b as u32))
            })
            .collect(),
        Enumeration::Grid => {
            // Chord length never exceeds arc length, so any pair within the
            // radius lies in adjacent cells of a grid with cell = radius.
            let cell = radius_km.max(1e-6);
            let key = |p: [f64; 3]| p.map(|c| (c / cell).floor() as i64);
            let mut grid: BTreeMap<[i64; 3], Vec<(usize, (f64, f64))>> = BTreeMap::new();
            for &(i, l) in &located {
                grid.entry(key(ecef(l.0, l.1))).or_default().push((i, l));
            }
            located
                .par_iter()
                .flat_map_iter(|&(a, pa)| {
                    let k = key(ecef(pa.0, pa.1));
                    let mut out = Vec::new();
                    for dx in -1..=1 {
                        for dy in -1..=1 {
                            for dz in -1..=1 {
                                if let Some(cell) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                                    out.extend(
                                        cell.iter()
                                            .filter(|&&(b, pb)| keep(a, b, pa, pb))
                                            .map(|&(b, _)| (a as u32, b as u32)),
                                    );
                                }
                            }
                        }
                    }
                    out
                })
                .collect()
        }
    };
    candidates.sort_unstable();
    realized_pairs.sort_unstable();
    realized_pairs.dedup();
    Ok(CandidateSet {
        radius_km,
        max_realized_km,
        realized: realized_pairs,
        candidates,
        users_without_centroid: locs.iter().filter(|l| l.is_none()).count(),
        realized_without_centroid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceboPair {
    pub sender: u32,
    pub recipient: u32,
    pub realized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboDraw {
    pub gender: Gender,
    pub pairs: Vec<PlaceboPair>,
    pub target_counts: [usize; N_ARMS],
    pub achieved_counts: [usize; N_ARMS],
    pub pool_counts: [usize; N_ARMS],
    pub warnings: Vec<String>,
}

impl PlaceboDraw {
    pub fn achieved_shares(&self) -> [f64; N_ARMS] {
        let n = self.pairs.len().max(1) as f64;
        self.achieved_counts.map(|c| c as f64 / n)
    }
}

/// Largest-remainder apportionment of `n` to `shares`.
fn apportion(n: usize, shares: &[f64; N_ARMS]) -> [usize; N_ARMS] {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| n as f64 * s / total).collect();
    let mut counts: [usize; N_ARMS] = std::array::from_fn(|d| exact[d].floor() as usize);
    let mut rest: Vec<usize> = (0..N_ARMS).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &d in rest.iter().take(short) {
        counts[d] += 1;
    }
    counts
}

/// Stratified draw of `target_n` pairs with recipients of `gender`, arm
/// shares matching `target_shares` (arm = recipient sport frequency).
/// Exhausted strata are taken whole and their deficit is spread over the
/// remaining arms in proportion to their targets.
pub fn draw_matched_sample(
    set: &CandidateSet,
    users: &UserTable,
    gender: Gender,
    target_n: usize,
    target_shares: [f64; N_ARMS],
    seed: u64,
) -> Result<PlaceboDraw> {
    if target_shares.iter().any(|&s| !(s >= 0.0)) || target_shares.iter().sum::<f64>() <= 0.0 {
        return Err(invalid_arg!("invalid target shares {target_shares:?}"));
    }
    let mut pools: [Vec<PlaceboPair>; N_ARMS] = Default::default();
    let tagged = set
        .realized
        .iter()
        .map(|&p| (p, true))
        .chain(set.candidates.iter().map(|&p| (p, false)));
    for ((s, r), realized) in tagged {
        let rec = &users.users[r as usize];
        if rec.gender == gender {
            pools[rec.sport_frequency as usize].push(PlaceboPair {
                sender: s,
                recipient: r,
                realized,
            });
        }
    }
    let pool_counts = pools.each_ref().map(Vec::len);
    let mut warnings = Vec::new();
    let available: usize = pool_counts.iter().sum();
    let n = if available < target_n {
        warnings.push(format!("only {available} pairs available for a target of {target_n}"));
        available
    } else {
        target_n
    };
    let target_counts = apportion(n, &target_shares);
    let mut counts = target_counts;
    let mut open: Vec<usize> = (0..N_ARMS).collect();
    loop {
        let deficit: usize = (0..N_ARMS).map(|d| counts[d].saturating_sub(pool_counts[d])).sum();
        if deficit == 0 {
            break;
        }
        for d in 0..N_ARMS {
            if counts[d] > pool_counts[d] {
                warnings.push(format!(
                    "arm {d}: {} pairs requested, {} available",
                    counts[d], pool_counts[d]
                ));
                counts[d] = pool_counts[d];
            }
        }
        open.retain(|&d| counts[d] < pool_counts[d]);
        let shares: [f64; N_ARMS] = std::array::from_fn(|d| if open.contains(&d) { target_shares[d] } else { 0.0 });
        if shares.iter().sum::<f64>() <= 0.0 {
            break;
        }
        let extra = apportion(deficit, &shares);
        for d in 0..N_ARMS {
            counts[d] += extra[d];
        }
    }
    let mut pairs = Vec::with_capacity(n);
    for (d, pool) in pools.iter().enumerate() {
        if counts[d] == pool.len() {
            pairs.extend_from_slice(pool);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DRAW_STREAM + d as u64);
        let mut picked = rand::seq::index::sample(&mut rng, pool.len(), counts[d]).into_vec();
        picked.sort_unstable();
        pairs.extend(picked.into_iter().map(|k| pool[k]));
    }
    pairs.sort_unstable_by(|a, b| {
        let key = |p: &PlaceboPair| (&users.users[p.sender as usize].user_id, &users.users[p.recipient as usize].user_id);
        key(a).cmp(&key(b))
    });
    for w in &warnings {
        log::warn!("placebo draw: {w}");
    }
    Ok(PlaceboDraw {
        gender,
        pairs,
        target_counts,
        achieved_counts: counts,
        pool_counts,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct PlaceboSample {
    /// Outcome: visited (1) or potential-but-not-visited (0).
    pub sample: EstimationSample,
    pub realized: Vec<bool>,
}

/// Estimation sample of a draw, with the same covariates as the main
/// sample.
pub fn placebo_sample(users: &UserTable, centroids: &CentroidTable, draw: &PlaceboDraw) -> Result<PlaceboSample> {
    let meta = pair_metadata(users);
    let mut rows = Vec::with_capacity(draw.pairs.len());
    for p in &draw.pairs {
        let s = &users.users[p.sender as usize];
        let r = &users.users[p.recipient as usize];
        let dist = match (centroids.get(&s.zip), centroids.get(&r.zip)) {
            (Some(a), Some(b)) => haversine_km(a, b),
            _ => return Err(Error::Data(format!("pair {}→{} lacks a centroid", s.user_id, r.user_id))),
        };
        let x = pair_covariates(users, r, s, dist);
        rows.push((if p.realized { 1.0 } else { 0.0 }, r.sport_frequency, x));
    }
    Ok(PlaceboSample {
        sample: assemble(&meta, rows)?,
        realized: draw.pairs.iter().map(|p| p.realized).collect(),
    })
}

pub fn run_placebo(placebo: &PlaceboSample, config: &PipelineConfig) -> Result<EffectTable> {
    Ok(pipeline::run(&placebo.sample, config)?.ate)
}

pub const NO_EFFECT: &str = "no visit-stage effect";
pub const EFFECT: &str = "visit-stage effect detected";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboVerdict {
    pub max_abs_t: f64,
    /// Contrasts with |t| at or above the critical value.
    pub significant: Vec<String>,
    pub no_effect: bool,
    pub text: String,
}

/// "No visit-stage effect" iff every contrast has |t| < `critical`.
pub fn verdict(table: &EffectTable, critical: f64) -> PlaceboVerdict {
    let mut max_abs_t = 0.0f64;
    let mut significant = Vec::new();
    for c in &table.contrasts {
        let t = c.estimate.t_stat().abs();
        let t = if t.is_nan() { 0.0 } else { t };
        max_abs_t = max_abs_t.max(t);
        if t >= critical {
            significant.push(c.contrast.label());
        }
    }
    let no_effect = significant.is_empty();
    PlaceboVerdict {
        max_abs_t,
        significant,
        no_effect,
        text: if no_effect { NO_EFFECT } else { EFFECT }.to_string(),
    }
}
