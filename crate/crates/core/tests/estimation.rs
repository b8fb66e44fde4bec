mod common;

use common::*;
use mcf_core::binning::Binning;
use mcf_core::data::{EstimationSample, FeatureKind, FeatureMetadata, FeatureRole};
use mcf_core::estimate::{common_support_check, AggregationOptions, Effects, SupportParams};
use mcf_core::forest::{Forest, ForestParams};
use mcf_core::ndarray::Array2;
use mcf_core::pipeline::{self, PipelineConfig};
use mcf_core::{Contrast, N_ARMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn effects_for(sample: &EstimationSample, forest: &Forest, options: AggregationOptions) -> Effects {
    let w = forest.compute_weights(sample.x.view()).unwrap();
    Effects::new(w, sample.y.clone(), sample.d.clone(), options).unwrap()
}

fn fitted(n: usize, seed: u64, trees: usize) -> (EstimationSample, Forest) {
    let (sample, _) = validation(n, seed);
    let forest = Forest::fit(&sample, &params(trees, seed)).unwrap();
    (sample, forest)
}

/// Inverse-share observation weights, recomputed from scratch.
fn share_weights(d: &[u8], supported: &[bool]) -> Vec<f64> {
    let mut counts = [0.0; N_ARMS];
    for (a, s) in d.iter().zip(supported) {
        if *s {
            counts[*a as usize] += 1.0;
        }
    }
    let raw: Vec<f64> = d
        .iter()
        .zip(supported)
        .map(|(a, s)| if *s { 1.0 / counts[*a as usize] } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

#[test]
fn ate_is_the_share_weighted_iate_mean() {
    let (sample, forest) = fitted(1500, 1, 80);
    let eff = effects_for(&sample, &forest, AggregationOptions::default());
    let omega = share_weights(&sample.d, &eff.iates.supported);
    let ate = eff.ate();
    for c in Contrast::lower_triangle() {
        let col = eff.iates.column(c).unwrap();
        let mean: f64 = col
            .iter()
            .zip(&omega)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, w)| v * w)
            .sum();
        assert!((ate.effect(c.treated, c.control).unwrap().estimate - mean).abs() < 1e-12);
    }
    for d in 0..N_ARMS {
        let mean: f64 = (0..sample.len())
            .filter(|&r| omega[r] > 0.0)
            .map(|r| omega[r] * eff.iates.potential[r][d])
            .sum();
        assert!((ate.potential[d].estimate - mean).abs() < 1e-12);
    }
}

#[test]
fn gate_partitions_average_back_to_the_ate() {
    let (sample, forest) = fitted(1500, 2, 80);
    for share in [true, false] {
        let eff = effects_for(
            &sample,
            &forest,
            AggregationOptions {
                share_weights: share,
                ..Default::default()
            },
        );
        for c in [Contrast::weekly_vs_never(), Contrast::new(2, 1).unwrap()] {
            let ate = eff.ate().effect(c.treated, c.control).unwrap().estimate;
            for (name, j, binning) in [
                ("income", 1, Binning::Discrete),
                ("age", 0, Binning::Quantiles(25)),
                ("x3", 3, Binning::Quantiles(7)),
            ] {
                let values = sample.column(j).to_vec();
                let gates = eff.gates(name, &values, binning, c).unwrap();
                assert!((gates.mass_weighted_mean() - ate).abs() < 1e-8, "{name}");
                let total: f64 = gates.rows.iter().map(|r| r.mass).sum();
                assert!((total - 1.0).abs() < 1e-12);
                for r in &gates.rows {
                    assert!((r.deviation.estimate - (r.gate.estimate - ate)).abs() < 1e-12);
                }
            }
            let arms: Vec<f64> = sample.d.iter().map(|&a| a as f64).collect();
            let atet = eff.gates("sport", &arms, Binning::Discrete, c).unwrap();
            assert_eq!(atet.rows.len(), N_ARMS);
            assert!((atet.mass_weighted_mean() - ate).abs() < 1e-8);
        }
    }
}

#[test]
fn contrasts_are_additive_and_antisymmetric() {
    let (sample, forest) = fitted(1200, 3, 60);
    let eff = effects_for(&sample, &forest, AggregationOptions::default());
    let ate = eff.ate();
    for m in 0..N_ARMS {
        for l in 0..N_ARMS {
            if m == l {
                continue;
            }
            let ml = ate.effect(m, l).unwrap();
            assert_eq!(ml.estimate, -ate.effect(l, m).unwrap().estimate);
            assert_eq!(ml.se, ate.effect(l, m).unwrap().se);
            for k in 0..N_ARMS {
                if k == m || k == l {
                    continue;
                }
                let chained = ml.estimate + ate.effect(l, k).unwrap().estimate;
                assert!((chained - ate.effect(m, k).unwrap().estimate).abs() < 1e-10);
            }
        }
    }
    let col = |m, l| eff.iates.column(Contrast::new(m, l).unwrap()).unwrap();
    let (a, b, c) = (col(3, 1), col(1, 0), col(3, 0));
    for r in 0..sample.len() {
        if eff.iates.supported[r] {
            assert!((a[r] + b[r] - c[r]).abs() < 1e-10);
        }
    }
    assert_eq!(col(0, 3), col(3, 0).iter().map(|v| -v).collect::<Vec<_>>());
}

#[test]
fn scaling_outcomes_scales_every_estimate() {
    let (sample, forest) = fitted(1000, 4, 40);
    let w = forest.compute_weights(sample.x.view()).unwrap();
    let base = Effects::new(w.clone(), sample.y.clone(), sample.d.clone(), AggregationOptions::default()).unwrap();
    let y100: Vec<f64> = sample.y.iter().map(|v| v * 100.0).collect();
    let scaled = Effects::new(w, y100, sample.d.clone(), AggregationOptions::default()).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    let (t0, t1) = (base.ate(), scaled.ate());
    let via_table = t0.scaled(100.0);
    for c in Contrast::lower_triangle() {
        let (e0, e1) = (t0.effect(c.treated, c.control).unwrap(), t1.effect(c.treated, c.control).unwrap());
        assert!(close(e1.estimate, 100.0 * e0.estimate));
        assert!(close(e1.se, 100.0 * e0.se));
        assert!((e1.p_value - e0.p_value).abs() < 1e-9);
        let e2 = via_table.effect(c.treated, c.control).unwrap();
        assert!(close(e2.estimate, e1.estimate) && close(e2.se, e1.se));
    }
    for r in 0..sample.len() {
        for k in 0..base.iates.contrasts.len() {
            let (a, b) = (base.iates.effect[r][k], scaled.iates.effect[r][k]);
            assert!(a.is_nan() && b.is_nan() || close(b, 100.0 * a));
        }
    }
}

#[test]
fn constant_outcome_has_no_effect() {
    let (mut sample, _) = validation(800, 5);
    sample.y.iter_mut().for_each(|v| *v = 1.0);
    let forest = Forest::fit(&sample, &params(30, 5)).unwrap();
    let eff = effects_for(&sample, &forest, AggregationOptions::default());
    for row in eff.iates.effect.iter().zip(&eff.iates.supported).filter(|(_, s)| **s).map(|(r, _)| r) {
        assert!(row.iter().all(|v| v.abs() < 1e-12));
    }
    for c in eff.ate().contrasts {
        assert!(c.estimate.estimate.abs() < 1e-12);
        assert!(c.estimate.se.abs() < 1e-12);
    }
}

#[test]
fn stump_estimates_match_brute_force() {
    let sample = stump_sample(2400, 6);
    let forest = Forest::fit(&sample, &params(40, 6)).unwrap();
    let eff = effects_for(&sample, &forest, AggregationOptions::default());
    let omega = share_weights(&sample.d, &eff.iates.supported);
    assert!(eff.iates.supported.iter().all(|s| *s));
    for c in Contrast::lower_triangle() {
        let k = eff.iates.contrast_index(c).unwrap();
        let groups = [0.0, 1.0].map(|v| honest_group_difference(&sample, &forest, v, c.treated, c.control));
        let mut ate = 0.0;
        for r in 0..sample.len() {
            let g = groups[sample.x[[r, 0]] as usize];
            assert!((eff.iates.effect[r][k] - g).abs() < 1e-12);
            ate += omega[r] * g;
        }
        assert!((eff.ate().effect(c.treated, c.control).unwrap().estimate - ate).abs() < 1e-12);
    }
}

#[test]
fn single_leaf_iate_is_the_plain_mean_difference() {
    let (sample, _) = validation(600, 7);
    let forest = Forest::fit(
        &sample,
        &ForestParams {
            min_leaf_per_arm: 60,
            ..params(1, 7)
        },
    )
    .unwrap();
    let eff = effects_for(&sample, &forest, AggregationOptions::default());
    let k = eff.iates.contrast_index(Contrast::weekly_vs_never()).unwrap();
    let brute = honest_difference(&sample, &forest, 3, 0);
    assert!(eff.iates.effect.iter().all(|r| (r[k] - brute).abs() < 1e-12));
}

#[test]
fn share_weighting_only_touches_aggregation() {
    let (sample, _) = validation(1500, 8);
    let mut on = PipelineConfig::default();
    on.forest = params(60, 8);
    let off = PipelineConfig {
        aggregation: AggregationOptions {
            share_weights: false,
            ..Default::default()
        },
        ..on.clone()
    };
    let (a, b) = (pipeline::run(&sample, &on).unwrap(), pipeline::run(&sample, &off).unwrap());
    assert_eq!(a.kept, b.kept);
    assert_eq!(a.effects.iates, b.effects.iates);
    assert_ne!(a.ate.potential, b.ate.potential);
    assert!(a.ate.share_weights && !b.ate.share_weights);
}

#[test]
fn guaranteed_overlap_drops_nothing() {
    let (sample, _) = validation(4000, 9);
    let (kept, report) = common_support_check(&sample, 0.01, &SupportParams::default()).unwrap();
    assert_eq!(kept.len(), sample.len());
    assert_eq!(report.n_dropped(), 0);
    assert!(common_support_check(&sample, 0.0, &SupportParams::default()).is_err());
}

#[test]
fn impossible_arm_region_is_trimmed() {
    let n = 6000;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut x = Array2::zeros((n, 3));
    let (mut y, mut d) = (Vec::new(), Vec::new());
    for i in 0..n {
        x[[i, 0]] = rng.random_range(0.0..2.4);
        x[[i, 1]] = rng.random::<f64>();
        x[[i, 2]] = rng.random::<f64>();
        let arms = if x[[i, 0]] > 2.0 { 3 } else { 4 };
        d.push(rng.random_range(0..arms) as u8);
        y.push(if rng.random_bool(0.3) { 1.0 } else { 0.0 });
    }
    let mut meta = FeatureMetadata::default();
    for name in ["x1", "x2", "x3"] {
        meta.push(name, FeatureKind::Ordered, FeatureRole::Recipient);
    }
    let sample = EstimationSample::new(y, d, x, meta, vec![]).unwrap();
    let (kept, report) = common_support_check(&sample, 0.01, &SupportParams::default()).unwrap();
    let violating: Vec<usize> = (0..n).filter(|&i| sample.x[[i, 0]] > 2.0).collect();
    let dropped: Vec<usize> = (0..n).filter(|i| kept.binary_search(i).is_err()).collect();
    let missed = violating.iter().filter(|i| kept.binary_search(i).is_ok()).count();
    let extra = dropped.iter().filter(|&&i| sample.x[[i, 0]] <= 2.0).count();
    assert_eq!(report.n_dropped(), dropped.len());
    assert_eq!(report.dropped_per_arm[3], 0);
    // Leaves straddling the boundary blur it a little.
    assert!(missed <= violating.len() / 10, "missed {missed} of {}", violating.len());
    assert!(extra <= violating.len() / 10, "extra {extra}");
}

#[test]
fn iates_beat_the_no_effect_predictor() {
    use mcf_core::dgp::{generate, DgpConfig};
    use mcf_core::stats::{pearson, rmse};
    let c = Contrast::weekly_vs_never();
    let score = |cfg: DgpConfig| {
        let (sample, oracle) = generate(&cfg).unwrap();
        let mut config = PipelineConfig::default();
        config.forest = ForestParams {
            n_trees: 500,
            seed: cfg.seed,
            ..Default::default()
        };
        let res = pipeline::run(&sample, &config).unwrap();
        let col = res.effects.iates.column(c).unwrap();
        let (mut est, mut truth) = (Vec::new(), Vec::new());
        for (r, v) in col.iter().enumerate() {
            if v.is_finite() {
                est.push(*v);
                truth.push(oracle.true_iate(res.sample.x.row(r), c.treated, c.control).unwrap());
            }
        }
        let zero = vec![0.0; truth.len()];
        (pearson(&est, &truth), rmse(&est, &truth), rmse(&zero, &truth))
    };
    let (_, fit, null) = score(DgpConfig::validation(21));
    assert!(fit < null, "rmse {fit} vs null {null}");
    // The validation effects vary too little for a stable correlation; the
    // income-slope variant of the same design carries real heterogeneity.
    let (corr, fit, null) = score(DgpConfig::income_slope(21));
    assert!(corr > 0.0 && fit < null, "corr {corr}, rmse {fit} vs null {null}");
}
