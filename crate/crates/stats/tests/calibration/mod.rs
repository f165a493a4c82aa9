//! Seeded null simulations: each test applied to data drawn under its own
//! null hypothesis, reporting the rejection rate at alpha = 0.05.
#![allow(dead_code)]

use adaptest_stats::{
    anova_oneway, dagostino_pearson_k2, kruskal_wallis, mann_whitney_u, t_test_unpaired, wilcoxon_signed_rank_with,
    z_two_proportions, Alternative, Exactness, TestResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

pub const ALPHA: f64 = 0.05;
pub const TRIALS: u64 = 1_000;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rate(trials: u64, seed: u64, mut run: impl FnMut(&mut ChaCha8Rng) -> TestResult) -> f64 {
    let rejected = (0..trials)
        .filter(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(*t));
            let r = run(&mut rng);
            assert!((0.0..=1.0).contains(&r.p_value));
            r.p_value < ALPHA
        })
        .count();
    rejected as f64 / trials as f64
}

/// `(test name, rejection rate)` for all seven procedures.
pub fn null_rejection_rates(trials: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("D'Agostino-Pearson K2 (n = 100)", rate(trials, 1, |rng| dagostino_pearson_k2(&normals(rng, 100)).unwrap())),
        (
            "Mann-Whitney U (20 vs 20)",
            rate(trials, 2, |rng| mann_whitney_u(&normals(rng, 20), &normals(rng, 20), Alternative::TwoSided).unwrap()),
        ),
        (
            "Kruskal-Wallis (3 x 10)",
            rate(trials, 3, |rng| {
                let groups: Vec<Vec<f64>> = (0..3).map(|_| normals(rng, 10)).collect();
                kruskal_wallis(&groups).unwrap()
            }),
        ),
        (
            "Wilcoxon signed-rank (n = 20, exact)",
            rate(trials, 4, |rng| {
                wilcoxon_signed_rank_with(&normals(rng, 20), Alternative::TwoSided, Exactness::Auto).unwrap()
            }),
        ),
        (
            "t-test (15 vs 15)",
            rate(trials, 5, |rng| {
                t_test_unpaired(&normals(rng, 15), &normals(rng, 15), Alternative::TwoSided).unwrap()
            }),
        ),
        (
            "one-way ANOVA (3 x 12)",
            rate(trials, 6, |rng| {
                let groups: Vec<Vec<f64>> = (0..3).map(|_| normals(rng, 12)).collect();
                anova_oneway(&groups).unwrap()
            }),
        ),
        (
            "two-proportion z (47 vs 64, p = 0.6)",
            rate(trials, 7, |rng| {
                let x1 = Binomial::new(47, 0.6).unwrap().sample(rng);
                let x2 = Binomial::new(64, 0.6).unwrap().sample(rng);
                z_two_proportions(x1, 47, x2, 64, Alternative::TwoSided).unwrap()
            }),
        ),
    ]
}
