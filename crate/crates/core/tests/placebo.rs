use std::collections::HashSet;

use mcf_core::data::{
    build_samples, filter_one_way, haversine_km, CentroidTable, FeatureSpec, Gender, Interaction, UserRecord,
    UserTable,
};
use mcf_core::dgp::{emit_logs, generate, DgpConfig};
use mcf_core::pipeline::PipelineConfig;
use mcf_core::placebo::*;
use proptest::prelude::*;

fn user(i: usize, gender: Gender, sport: u8) -> UserRecord {
    UserRecord {
        user_id: format!("u{i:04}"),
        gender,
        age: 30,
        sport_frequency: sport,
        income_level: 3,
        education_level: 3,
        zip: format!("z{i:04}"),
        ordered_features: vec![],
        unordered_features: vec![],
    }
}

fn world(points: &[(f64, f64, bool, u8)]) -> (UserTable, CentroidTable) {
    let mut c = CentroidTable::new();
    let mut users = Vec::new();
    for (i, &(lat, lon, female, sport)) in points.iter().enumerate() {
        c.insert(format!("z{i:04}"), lat, lon).unwrap();
        users.push(user(i, if female { Gender::Female } else { Gender::Male }, sport));
    }
    let none: Vec<FeatureSpec> = vec![];
    (UserTable::new(none.clone(), none, vec![], users).unwrap(), c)
}

fn visit(s: usize, r: usize) -> Interaction {
    Interaction {
        sender_id: format!("u{s:04}"),
        recipient_id: format!("u{r:04}"),
        message_sent: false,
        first_visit_time: 0,
    }
}

prop_compose! {
    fn arb_world()(
        points in prop::collection::vec((47.0f64..49.0, 8.0f64..12.0, any::<bool>(), 0u8..4), 4..60),
        picks in prop::collection::vec((0usize..1000, 0usize..1000), 1..15),
        scale in 0.2f64..1.0,
    ) -> (Vec<(f64, f64, bool, u8)>, Vec<(usize, usize)>, f64) {
        let n = points.len();
        let visits = picks
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|&(a, b)| points[a].2 != points[b].2)
            .collect();
        (points, visits, scale)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn candidate_pairs_match_a_direct_scan((points, visits, scale) in arb_world()) {
        prop_assume!(!visits.is_empty());
        let (users, c) = world(&points);
        let realized: Vec<Interaction> = visits.iter().map(|&(s, r)| visit(s, r)).collect();
        let grid = impute_potential_visits(&users, &realized, &c, RadiusRule::ScaledMax(scale), Enumeration::Grid).unwrap();
        let full = impute_potential_visits(&users, &realized, &c, RadiusRule::ScaledMax(scale), Enumeration::Exhaustive).unwrap();
        prop_assert_eq!(&grid, &full);

        let loc = |i: usize| (points[i].0, points[i].1);
        let max = visits.iter().map(|&(s, r)| haversine_km(loc(s), loc(r))).fold(0.0, f64::max);
        prop_assert!((grid.max_realized_km - max).abs() < 1e-9);
        let radius = scale * max;
        let taken: HashSet<(usize, usize)> = visits.iter().copied().collect();
        let mut expected = Vec::new();
        for a in 0..points.len() {
            for b in 0..points.len() {
                if points[a].2 != points[b].2 && !taken.contains(&(a, b)) && haversine_km(loc(a), loc(b)) <= radius {
                    expected.push((a as u32, b as u32));
                }
            }
        }
        prop_assert_eq!(&grid.candidates, &expected);

        let cands: HashSet<_> = grid.candidates.iter().collect();
        prop_assert_eq!(cands.len(), grid.candidates.len());
        prop_assert!(grid.realized.iter().all(|p| !cands.contains(p)));
    }

    #[test]
    fn quantile_radius_is_a_realized_distance_quantile((points, visits, _) in arb_world(), q in 0.0f64..=1.0) {
        prop_assume!(!visits.is_empty());
        let (users, c) = world(&points);
        let realized: Vec<Interaction> = visits.iter().map(|&(s, r)| visit(s, r)).collect();
        let set = impute_potential_visits(&users, &realized, &c, RadiusRule::Quantile(q), Enumeration::Grid).unwrap();
        prop_assert!(set.radius_km <= set.max_realized_km + 1e-9);
        let loc = |i: usize| (points[i].0, points[i].1);
        for &(a, b) in &set.candidates {
            prop_assert!(haversine_km(loc(a as usize), loc(b as usize)) <= set.radius_km);
        }
    }
}

#[test]
fn invalid_radius_rules_are_rejected() {
    let (users, c) = world(&[(48.0, 9.0, false, 0), (48.1, 9.0, true, 1)]);
    let r = [visit(0, 1)];
    assert!(impute_potential_visits(&users, &r, &c, RadiusRule::ScaledMax(0.0), Enumeration::Grid).is_err());
    assert!(impute_potential_visits(&users, &r, &c, RadiusRule::Quantile(1.5), Enumeration::Grid).is_err());
    assert!(impute_potential_visits(&users, &[], &c, RadiusRule::default(), Enumeration::Grid).is_err());
}

/// Many male users in one place with every arm, some female senders.
fn crowded_world(n_male: usize, sparse_arm: Option<(u8, usize)>) -> (UserTable, CentroidTable, Vec<Interaction>) {
    let mut points = Vec::new();
    let mut sparse_left = sparse_arm.map(|a| a.1).unwrap_or(0);
    for i in 0..n_male {
        let mut arm = (i % 4) as u8;
        if let Some((s, _)) = sparse_arm {
            if arm == s {
                if sparse_left == 0 {
                    arm = (arm + 1) % 4;
                } else {
                    sparse_left -= 1;
                }
            }
        }
        points.push((48.0 + (i % 10) as f64 * 0.01, 9.0 + (i / 10) as f64 * 0.001, false, arm));
    }
    for k in 0..5 {
        points.push((48.0 + k as f64 * 0.01, 9.0, true, 0));
    }
    // One sender sits ~55 km north so the radius covers the whole cluster.
    points[n_male].0 = 48.5;
    let (users, c) = world(&points);
    let realized = (0..5).map(|k| visit(n_male + k, k)).collect();
    (users, c, realized)
}

#[test]
fn draws_are_seeded_and_cover_the_pool_when_asked() {
    let (users, c, realized) = crowded_world(200, None);
    let set = impute_potential_visits(&users, &realized, &c, RadiusRule::ScaledMax(1.0), Enumeration::Grid).unwrap();
    let shares = [0.1, 0.2, 0.3, 0.4];
    let a = draw_matched_sample(&set, &users, Gender::Male, 300, shares, 9).unwrap();
    let b = draw_matched_sample(&set, &users, Gender::Male, 300, shares, 9).unwrap();
    let other = draw_matched_sample(&set, &users, Gender::Male, 300, shares, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.pairs, other.pairs);
    assert_eq!(a.achieved_counts, [30, 60, 90, 120]);
    assert!(a.pairs.iter().all(|p| users.users[p.recipient as usize].gender == Gender::Male));
    let distinct: HashSet<_> = a.pairs.iter().map(|p| (p.sender, p.recipient)).collect();
    assert_eq!(distinct.len(), a.pairs.len());

    // Requesting the whole pool in its own proportions returns every pair.
    let total: usize = a.pool_counts.iter().sum();
    let pool_shares = a.pool_counts.map(|c| c as f64 / total as f64);
    let all = draw_matched_sample(&set, &users, Gender::Male, total, pool_shares, 1).unwrap();
    assert_eq!(all.achieved_counts, a.pool_counts);
    let realized_in_draw = all.pairs.iter().filter(|p| p.realized).count();
    assert_eq!(realized_in_draw, set.realized.len());
    assert!(all.warnings.is_empty());
}

#[test]
fn exhausted_arm_is_taken_whole_and_the_rest_is_redistributed() {
    let (users, c, realized) = crowded_world(200, Some((3, 4)));
    let set = impute_potential_visits(&users, &realized, &c, RadiusRule::ScaledMax(1.0), Enumeration::Grid).unwrap();
    let draw = draw_matched_sample(&set, &users, Gender::Male, 400, [0.25; 4], 2).unwrap();
    assert_eq!(draw.pool_counts[3], 20);
    assert_eq!(draw.achieved_counts[3], 20);
    assert_eq!(draw.achieved_counts.iter().sum::<usize>(), 400);
    assert_eq!(draw.pairs.len(), 400);
    let rest = &draw.achieved_counts[..3];
    assert!(rest.iter().max().unwrap() - rest.iter().min().unwrap() <= 1, "{rest:?}");
    assert!(!draw.warnings.is_empty());

    let short = draw_matched_sample(&set, &users, Gender::Male, 10_000, [0.25; 4], 2).unwrap();
    assert_eq!(short.pairs.len(), short.pool_counts.iter().sum::<usize>());
}

fn synthetic(cfg: &DgpConfig) -> (mcf_core::dgp::SyntheticLogs, Vec<Interaction>, mcf_core::data::EstimationSample) {
    let (sample, _) = generate(cfg).unwrap();
    let logs = emit_logs(&sample, cfg).unwrap();
    let inter = filter_one_way(&logs.events).unwrap();
    let main = build_samples(&logs.users, &inter, &logs.centroids).unwrap().male;
    (logs, inter, main)
}

#[test]
fn draw_reproduces_the_main_sample_shares() {
    let mut cfg = DgpConfig::validation(4);
    cfg.n = 3000;
    let (logs, inter, main) = synthetic(&cfg);
    let set = impute_potential_visits(&logs.users, &inter, &logs.centroids, RadiusRule::default(), Enumeration::Grid)
        .unwrap();
    let shares = main.arm_shares();
    let draw = draw_matched_sample(&set, &logs.users, Gender::Male, main.len(), shares, 4).unwrap();
    assert_eq!(draw.pairs.len(), main.len());
    for (got, want) in draw.achieved_shares().iter().zip(shares) {
        assert!((got - want).abs() <= 0.005, "{got} vs {want}");
    }
}

#[test]
fn visit_stage_contrasts_are_rarely_significant() {
    let mut rejections = [0usize; 6];
    let mut clean = 0;
    for seed in 0..10 {
        let mut cfg = DgpConfig::placebo(seed);
        cfg.n = 2000;
        let (logs, inter, main) = synthetic(&cfg);
        let set = impute_potential_visits(&logs.users, &inter, &logs.centroids, RadiusRule::default(), Enumeration::Grid)
            .unwrap();
        let draw = draw_matched_sample(&set, &logs.users, Gender::Male, main.len(), main.arm_shares(), seed).unwrap();
        let ps = placebo_sample(&logs.users, &logs.centroids, &draw).unwrap();
        assert_eq!(ps.sample.len(), draw.pairs.len());
        let visited = ps.sample.y.iter().sum::<f64>();
        assert_eq!(visited as usize, ps.realized.iter().filter(|&&r| r).count());
        let mut config = PipelineConfig::default();
        config.forest.n_trees = 100;
        config.forest.seed = seed;
        let table = run_placebo(&ps, &config).unwrap();
        for (k, c) in table.contrasts.iter().enumerate() {
            if c.estimate.p_value < 0.05 {
                rejections[k] += 1;
            }
        }
        let v = verdict(&table, 1.96);
        assert_eq!(v.no_effect, v.significant.is_empty());
        if v.no_effect {
            assert_eq!(v.text, NO_EFFECT);
            clean += 1;
        }
    }
    assert!(rejections.iter().all(|&r| r <= 2), "{rejections:?}");
    assert!(clean >= 6, "{clean}");
}
