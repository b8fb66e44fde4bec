#![allow(dead_code)]

use mcf_core::data::{EstimationSample, FeatureKind, FeatureMetadata, FeatureRole};
use mcf_core::dgp::{generate, DgpConfig, DgpOracle};
use mcf_core::forest::{Forest, ForestParams};
use mcf_core::ndarray::Array2;
use mcf_core::N_ARMS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn validation(n: usize, seed: u64) -> (EstimationSample, DgpOracle) {
    generate(&DgpConfig {
        n,
        ..DgpConfig::validation(seed)
    })
    .unwrap()
}

pub fn params(n_trees: usize, seed: u64) -> ForestParams {
    ForestParams {
        n_trees,
        seed,
        centering_trees: 50,
        ..Default::default()
    }
}

/// One binary covariate, balanced arms, an effect that differs between the
/// two halves. Any split lands on that covariate and leaves nothing to
/// split afterwards, so every tree is a stump.
pub fn stump_sample(n: usize, seed: u64) -> EstimationSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 1));
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let xi = (i % 2) as f64;
        let arm = ((i / 2) % N_ARMS) as u8;
        let p = 0.2 + 0.1 * arm as f64 * xi;
        x[[i, 0]] = xi;
        d.push(arm);
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    let mut meta = FeatureMetadata::default();
    meta.push("flag", FeatureKind::Ordered, FeatureRole::Recipient);
    EstimationSample::new(y, d, x, meta, vec![0]).unwrap()
}

/// Honest-half arm-m mean minus arm-l mean among rows with `flag == value`.
pub fn honest_group_difference(sample: &EstimationSample, forest: &Forest, value: f64, m: usize, l: usize) -> f64 {
    let mean = |a: usize| {
        let ys: Vec<f64> = forest
            .honest
            .iter()
            .filter(|&&i| sample.x[[i, 0]] == value && sample.d[i] as usize == a)
            .map(|&i| sample.y[i])
            .collect();
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    mean(m) - mean(l)
}

/// Honest-half arm-m mean minus arm-l mean over every honest row.
pub fn honest_difference(sample: &EstimationSample, forest: &Forest, m: usize, l: usize) -> f64 {
    let mean = |a: usize| {
        let ys: Vec<f64> = forest
            .honest
            .iter()
            .filter(|&&i| sample.d[i] as usize == a)
            .map(|&i| sample.y[i])
            .collect();
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    mean(m) - mean(l)
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}
