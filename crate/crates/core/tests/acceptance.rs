//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits nonzero if any fails.
//!
//! `cargo test -p mcf-core --test acceptance` (add `-- 4 7` to run a subset).

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use mcf_core::binning::Binning;
use mcf_core::data::{build_samples, filter_one_way, ActionEvent, ActionType, Gender};
use mcf_core::dgp::{self, emit_logs, generate, DgpConfig, INCOME_COL};
use mcf_core::estimate::{AggregationOptions, Effects};
use mcf_core::forest::Forest;
use mcf_core::hetero::{cluster_profile, kmeanspp_cluster, wald_equality};
use mcf_core::pipeline::{self, PipelineConfig};
use mcf_core::placebo::{draw_matched_sample, impute_potential_visits, placebo_sample, run_placebo, Enumeration, RadiusRule};
use mcf_core::report::relative_effect;
use mcf_core::stats::spearman;
use mcf_core::{Contrast, N_ARMS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TREES: usize = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(trees: usize, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.forest.n_trees = trees;
    c.forest.seed = seed;
    c.support.seed = seed;
    c
}

/// Per-seed validation runs shared by the oracle-recovery and coverage
/// criteria: for each contrast, (estimate, se, truth).
struct ValidationRun {
    contrasts: Vec<(Contrast, f64, f64, f64)>,
    seconds: f64,
}

fn validation_run(seed: u64) -> ValidationRun {
    let cfg = DgpConfig::validation(seed);
    let (sample, oracle) = generate(&cfg).unwrap();
    let started = Instant::now();
    let res = pipeline::run(&sample, &config(TREES, seed)).unwrap();
    let seconds = started.elapsed().as_secs_f64();
    let contrasts = Contrast::lower_triangle()
        .into_iter()
        .map(|c| {
            let truth = dgp::true_aggregate(&oracle, &cfg, c, 100_000, seed, None).unwrap().ate;
            let e = res.ate.effect(c.treated, c.control).unwrap();
            (c, e.estimate, e.se, truth)
        })
        .collect();
    ValidationRun { contrasts, seconds }
}

fn oracle_recovery(runs: &[ValidationRun]) -> Outcome {
    let seconds: f64 = runs.iter().map(|r| r.seconds).sum();
    let mut worst = usize::MAX;
    let mut counts = Vec::new();
    for k in 0..runs[0].contrasts.len() {
        let hits = runs
            .iter()
            .filter(|r| {
                let (_, e, se, t) = r.contrasts[k];
                (e - t).abs() <= f64::max(0.02, 2.0 * se)
            })
            .count();
        worst = worst.min(hits);
        counts.push(format!("{}:{hits}", runs[0].contrasts[k].0));
    }
    outcome(
        worst >= 18 && seconds < 600.0,
        format!("min {worst}/20 within max(0.02, 2 SE) [{}]; {seconds:.0} s", counts.join(" ")),
    )
}

fn coverage(runs: &[ValidationRun]) -> Outcome {
    let z = mcf_core::stats::z_crit(0.90);
    let mut worst = 1.0f64;
    let mut rates = Vec::new();
    for k in 0..runs[0].contrasts.len() {
        let covered = runs
            .iter()
            .filter(|r| {
                let (_, e, se, t) = r.contrasts[k];
                (e - t).abs() <= z * se
            })
            .count();
        let rate = covered as f64 / runs.len() as f64;
        worst = worst.min(rate);
        rates.push(format!("{}:{covered}", runs[0].contrasts[k].0));
    }
    outcome(
        worst >= 0.80,
        format!("min coverage {:.0}% over {} seeds [{}]", 100.0 * worst, runs.len(), rates.join(" ")),
    )
}

/// Visit-stage placebo on synthetic logs of the zero-effect DGP.
fn placebo_size() -> Outcome {
    let mut rejections = vec![0usize; 6];
    let seeds = 20;
    for seed in 0..seeds {
        let cfg = DgpConfig::placebo(seed);
        let (sample, _) = generate(&cfg).unwrap();
        let logs = emit_logs(&sample, &cfg).unwrap();
        let inter = filter_one_way(&logs.events).unwrap();
        let main = build_samples(&logs.users, &inter, &logs.centroids).unwrap().male;
        let set = impute_potential_visits(&logs.users, &inter, &logs.centroids, RadiusRule::default(), Enumeration::Grid)
            .unwrap();
        let draw = draw_matched_sample(&set, &logs.users, Gender::Male, main.len(), main.arm_shares(), seed).unwrap();
        let ps = placebo_sample(&logs.users, &logs.centroids, &draw).unwrap();
        let table = run_placebo(&ps, &config(TREES, seed)).unwrap();
        for (k, c) in table.contrasts.iter().enumerate() {
            if c.estimate.p_value < 0.05 {
                rejections[k] += 1;
            }
        }
    }
    let worst = rejections.iter().max().copied().unwrap_or(0);
    let insignificant = seeds as usize - worst;
    outcome(
        insignificant as f64 >= 0.9 * seeds as f64,
        format!("each contrast insignificant in >= {insignificant}/{seeds} seeds (rejections {rejections:?})"),
    )
}

fn income_gates(cfg: &DgpConfig) -> (f64, f64) {
    let (sample, _) = generate(cfg).unwrap();
    let res = pipeline::run(&sample, &config(TREES, cfg.seed)).unwrap();
    let values = res.sample.column(INCOME_COL).to_vec();
    let gates = res
        .effects
        .gates("income", &values, Binning::Discrete, Contrast::weekly_vs_never())
        .unwrap();
    let levels: Vec<f64> = gates.rows.iter().map(|r| r.lo).collect();
    let g: Vec<f64> = gates.rows.iter().map(|r| r.gate.estimate).collect();
    (wald_equality(&gates).unwrap().p_value, spearman(&levels, &g))
}

fn heterogeneity_power_and_size() -> Outcome {
    let seeds = 20u64;
    let slope: Vec<(f64, f64)> = (0..seeds).map(|s| income_gates(&DgpConfig::income_slope(s))).collect();
    let flat: Vec<f64> = (0..seeds).map(|s| income_gates(&DgpConfig::flat(s)).0).collect();
    let power = slope.iter().filter(|r| r.0 < 0.05).count();
    let monotone = slope.iter().filter(|r| r.1 >= 0.8).count();
    let size = flat.iter().filter(|&&p| p < 0.05).count();
    let mut rho: Vec<f64> = slope.iter().map(|r| r.1).collect();
    rho.sort_by(f64::total_cmp);
    let median_rho = (rho[9] + rho[10]) / 2.0;
    outcome(
        power as f64 >= 0.8 * seeds as f64 && monotone as f64 >= 0.8 * seeds as f64 && size as f64 <= 0.1 * seeds as f64,
        format!(
            "income-slope Wald rejects {power}/20, rho >= 0.8 in {monotone}/20 (median {median_rho:.2}); flat rejects {size}/20"
        ),
    )
}

fn exact_identities() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let (sample, _) = validation(2000, 4);
    let forest = Forest::fit(&sample, &params(100, 4)).unwrap();
    let w = forest.compute_weights(sample.x.view()).unwrap();
    let weights_ok = (0..w.n_rows())
        .filter(|&r| w.rows[r].supported())
        .all(|r| w.arm_sums(r).iter().all(|s| (s - 1.0).abs() < 1e-10));
    check(weights_ok, "weight rows");

    let eff = Effects::new(w, sample.y.clone(), sample.d.clone(), AggregationOptions::default()).unwrap();
    let ate = eff.ate();
    let mut counts = [0.0; N_ARMS];
    for (a, &s) in sample.d.iter().zip(&eff.iates.supported) {
        if s {
            counts[*a as usize] += 1.0;
        }
    }
    let raw: Vec<f64> = (0..sample.len())
        .map(|r| if eff.iates.supported[r] { 1.0 / counts[sample.d[r] as usize] } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    for c in Contrast::lower_triangle() {
        let col = eff.iates.column(c).unwrap();
        let mean: f64 = (0..sample.len()).filter(|&r| raw[r] > 0.0).map(|r| col[r] * raw[r] / total).sum();
        let est = ate.effect(c.treated, c.control).unwrap().estimate;
        check((est - mean).abs() < 1e-12, "ATE = share-weighted IATE mean");
        let gates = eff
            .gates("income", &sample.column(INCOME_COL).to_vec(), Binning::Discrete, c)
            .unwrap();
        check((gates.mass_weighted_mean() - est).abs() < 1e-8, "GATE mean = ATE");
    }
    for m in 0..N_ARMS {
        for l in 0..N_ARMS {
            if m == l {
                continue;
            }
            let ml = ate.effect(m, l).unwrap().estimate;
            check((ml + ate.effect(l, m).unwrap().estimate).abs() < 1e-10, "antisymmetry");
            for k in (0..N_ARMS).filter(|&k| k != m && k != l) {
                let chained = ml + ate.effect(l, k).unwrap().estimate;
                check((chained - ate.effect(m, k).unwrap().estimate).abs() < 1e-10, "additivity");
            }
        }
    }

    let stump = stump_sample(2400, 5);
    let forest = Forest::fit(&stump, &params(50, 5)).unwrap();
    let w = forest.compute_weights(stump.x.view()).unwrap();
    for r in [0, 1] {
        let means = w.arm_means(r, &stump.y);
        for c in Contrast::lower_triangle() {
            let brute = honest_group_difference(&stump, &forest, stump.x[[r, 0]], c.treated, c.control);
            check((means[c.treated] - means[c.control] - brute).abs() < 1e-12, "stump brute force");
        }
    }
    failures.dedup();
    if failures.is_empty() {
        outcome(true, "weights, ATE, GATE, additivity/antisymmetry, stump")
    } else {
        outcome(false, format!("violated: {}", failures.join(", ")))
    }
}

fn honesty() -> Outcome {
    let (sample, _) = validation(2000, 3);
    let p = params(100, 3);
    let forest = Forest::fit(&sample, &p).unwrap();
    let mut shuffled = sample.clone();
    let mut ys: Vec<f64> = forest.honest.iter().map(|&i| sample.y[i]).collect();
    ys.shuffle(&mut ChaCha8Rng::seed_from_u64(17));
    for (&i, &v) in forest.honest.iter().zip(&ys) {
        shuffled.y[i] = v;
    }
    let refit = Forest::fit(&shuffled, &p).unwrap();
    let same = forest
        .trees
        .iter()
        .zip(&refit.trees)
        .filter(|(a, b)| a.topology == b.topology && a.leaf_members == b.leaf_members)
        .count();
    outcome(
        same == forest.trees.len() && shuffled.y != sample.y,
        format!("{same}/{} topologies identical after permuting honest outcomes", forest.trees.len()),
    )
}

fn determinism() -> Outcome {
    let (sample, _) = validation(4000, 6);
    let run = || {
        let res = pipeline::run(&sample, &config(100, 6)).unwrap();
        let mut bytes = res.forest.to_json().unwrap().into_bytes();
        bytes.extend(serde_json::to_vec(&res.ate).unwrap());
        bytes.extend(serde_json::to_vec(&res.effects.iates).unwrap());
        bytes.extend(serde_json::to_vec(&res.support).unwrap());
        bytes
    };
    let one = with_threads(1, run);
    let eight = with_threads(8, run);
    outcome(one == eight, format!("{} serialized bytes, 1 vs 8 threads", one.len()))
}

fn paper_arithmetic() -> Outcome {
    let a = relative_effect(1.32, 2.50).unwrap();
    let b = relative_effect(1.20, 2.62).unwrap();
    outcome(
        (a - 52.8).abs() <= 0.05 && (b - 45.8).abs() <= 0.05,
        format!("{a:.2}% and {b:.2}%"),
    )
}

fn interaction_scenarios() -> Outcome {
    use ActionType::*;
    let ev = |s: &str, r: &str, t: u64, a: ActionType| ActionEvent::new(s, r, t, a);
    let classify = |events: &[ActionEvent]| {
        let out = filter_one_way(events).unwrap();
        out.iter()
            .map(|i| (i.sender_id.clone(), i.recipient_id.clone(), i.message_sent))
            .collect::<Vec<_>>()
    };
    let ab = |m: bool| vec![("A".to_string(), "B".to_string(), m)];
    let valid = classify(&[ev("A", "B", 1, Visit), ev("A", "B", 2, Message)]) == ab(true);
    let unseen = classify(&[ev("A", "B", 1, Visit), ev("B", "A", 2, Visit), ev("A", "B", 3, Message)]) == ab(true);
    let provoked = classify(&[
        ev("A", "B", 1, Visit),
        ev("A", "B", 2, Like),
        ev("B", "A", 3, Visit),
        ev("B", "A", 4, Like),
        ev("A", "B", 5, Message),
    ]) == ab(false);
    outcome(
        valid && unseen && provoked,
        format!("valid message {valid}, invisible return visit {unseen}, provoked message {provoked}"),
    )
}

fn cluster_pipeline() -> Outcome {
    let cfg = DgpConfig::income_slope(10);
    let (sample, _) = generate(&cfg).unwrap();
    let res = pipeline::run(&sample, &config(TREES, 10)).unwrap();
    let iates = &res.effects.iates;
    let rows: Vec<usize> = (0..iates.n_rows()).filter(|&i| iates.supported[i]).collect();
    let col = iates.column(Contrast::weekly_vs_never()).unwrap();
    let effects: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
    let income: Vec<f64> = rows.iter().map(|&i| res.sample.x[[i, INCOME_COL]]).collect();
    let km = kmeanspp_cluster(&effects, 5, 10, 10).unwrap();
    let summary = cluster_profile(&km.labels, 5, &effects, &[("income".into(), income)]).unwrap();
    let means: Vec<f64> = summary.clusters.iter().map(|c| c.mean_effect).collect();
    let inc: Vec<f64> = summary.clusters.iter().map(|c| c.descriptor_means[0]).collect();
    let effects_up = means.windows(2).all(|w| w[0] < w[1]);
    let income_up = inc.windows(2).all(|w| w[0] <= w[1]);
    outcome(
        means.len() == 5 && effects_up && income_up,
        format!(
            "cluster IATEs [{}], income [{}]",
            means.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "),
            inc.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn main() -> ExitCode {
    env_logger::builder().is_test(true).try_init().ok();
    let chosen: HashSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| chosen.is_empty() || chosen.contains(&k);
    let started = Instant::now();

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut runs = Vec::new();
    if wanted(1) || wanted(9) {
        let seeds = if wanted(9) { 50 } else { 20 };
        runs = (0..seeds).map(validation_run).collect();
    }
    if wanted(1) {
        results.push((1, "oracle ATE recovery", oracle_recovery(&runs[..20])));
    }
    if wanted(2) {
        results.push((2, "placebo size", placebo_size()));
    }
    if wanted(3) {
        results.push((3, "heterogeneity power and size", heterogeneity_power_and_size()));
    }
    if wanted(4) {
        results.push((4, "exact identities", exact_identities()));
    }
    if wanted(5) {
        results.push((5, "honesty", honesty()));
    }
    if wanted(6) {
        results.push((6, "thread determinism", determinism()));
    }
    if wanted(7) {
        results.push((7, "paper arithmetic", paper_arithmetic()));
    }
    if wanted(8) {
        results.push((8, "interaction scenarios", interaction_scenarios()));
    }
    if wanted(9) {
        results.push((9, "90% CI coverage", coverage(&runs)));
    }
    if wanted(10) {
        results.push((10, "cluster pipeline", cluster_pipeline()));
    }
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (k, name, o) in &results {
        println!("criterion {k:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
