//! Brute-force permutation oracles for the rank tests.
//!
//! These recompute every statistic from scratch (pairwise counts, naive
//! midranks) for each relabelling of the data, and share no code with the
//! library's dynamic-programming enumerators.
#![allow(dead_code)]

/// Midrank of every value, by direct counting.
pub fn naive_midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let below = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// U for `a` against `b`: pairs with a > b, ties counting one half.
pub fn pairwise_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact Mann-Whitney p by relabelling every subset of the pooled sample as
/// group `a`. `tail`: 0 two-sided, 1 greater (U_a large), -1 less.
pub fn mann_whitney(a: &[f64], b: &[f64], tail: i8) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let centre = (a.len() * b.len()) as f64 / 2.0;
    let observed = pairwise_u(a, b);
    let subsets = combinations(pooled.len(), a.len());
    let mut hits = 0usize;
    for s in &subsets {
        let ga: Vec<f64> = s.iter().map(|&i| pooled[i]).collect();
        let gb: Vec<f64> = (0..pooled.len()).filter(|i| !s.contains(i)).map(|i| pooled[i]).collect();
        let u = pairwise_u(&ga, &gb);
        let extreme = match tail {
            0 => (u - centre).abs() >= (observed - centre).abs() - 1e-9,
            1 => u >= observed - 1e-9,
            _ => u <= observed + 1e-9,
        };
        if extreme {
            hits += 1;
        }
    }
    hits as f64 / subsets.len() as f64
}

/// Tie-corrected H computed from naive midranks.
pub fn h_statistic(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = naive_midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let mut ties = 0.0;
    let mut seen: Vec<f64> = Vec::new();
    for v in &pooled {
        if !seen.contains(v) {
            seen.push(*v);
            let t = pooled.iter().filter(|w| *w == v).count() as f64;
            ties += t * t * t - t;
        }
    }
    let c = 1.0 - ties / (n * n * n - n);
    if c <= 0.0 {
        return 0.0;
    }
    (12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / c
}

/// Exact Kruskal-Wallis p by enumerating every assignment of the pooled
/// observations to groups of the observed sizes.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let observed = h_statistic(groups);
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut labels = vec![usize::MAX; pooled.len()];
    fn assign(
        pos: usize,
        labels: &mut Vec<usize>,
        remaining: &mut Vec<usize>,
        pooled: &[f64],
        observed: f64,
        hits: &mut usize,
        total: &mut usize,
    ) {
        if pos == pooled.len() {
            let groups: Vec<Vec<f64>> = (0..remaining.len())
                .map(|g| (0..pooled.len()).filter(|&i| labels[i] == g).map(|i| pooled[i]).collect())
                .collect();
            *total += 1;
            if h_statistic(&groups) >= observed - 1e-9 {
                *hits += 1;
            }
            return;
        }
        for g in 0..remaining.len() {
            if remaining[g] > 0 {
                remaining[g] -= 1;
                labels[pos] = g;
                assign(pos + 1, labels, remaining, pooled, observed, hits, total);
                remaining[g] += 1;
            }
        }
    }
    let mut remaining = sizes.clone();
    assign(0, &mut labels, &mut remaining, &pooled, observed, &mut hits, &mut total);
    hits as f64 / total as f64
}

/// Exact signed-rank p over all `2^n` sign vectors of the nonzero |d|.
/// `tail`: 0 two-sided, 1 greater (W+ large), -1 less (W+ small).
pub fn wilcoxon(diffs: &[f64], tail: i8) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = naive_midranks(&abs);
    let n = d.len();
    let total_rank: f64 = ranks.iter().sum();
    let w_plus = |signs: &dyn Fn(usize) -> bool| -> f64 { (0..n).filter(|&i| signs(i)).map(|i| ranks[i]).sum() };
    let observed = w_plus(&|i| d[i] > 0.0);
    let centre = total_rank / 2.0;
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w = w_plus(&|i| mask & (1 << i) != 0);
        let extreme = match tail {
            0 => (w - centre).abs() >= (observed - centre).abs() - 1e-9,
            1 => w >= observed - 1e-9,
            _ => w <= observed + 1e-9,
        };
        if extreme {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Seeded inputs for the equivalence checks: small integer values (heavy
/// ties) mixed with continuous draws.
pub mod cases {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draw(rng: &mut ChaCha8Rng, n: usize, tied: bool) -> Vec<f64> {
        (0..n)
            .map(|_| if tied { rng.random_range(0..4) as f64 } else { (rng.random::<f64>() * 100.0).round() / 10.0 })
            .collect()
    }

    /// Every split `(na, nb)` with `na + nb <= 7`, several draws each.
    pub fn two_sample(seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for na in 1..=6 {
            for nb in 1..=(7 - na) {
                for rep in 0..24 {
                    let tied = rep % 2 == 0;
                    out.push((draw(&mut rng, na, tied), draw(&mut rng, nb, tied)));
                }
            }
        }
        out
    }

    /// Two to four groups, total size at most 7.
    pub fn groups(seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for rep in 0..300 {
            let k = rng.random_range(2..=4);
            let mut sizes = vec![1usize; k];
            let extra = rng.random_range(0..=(7 - k));
            for _ in 0..extra {
                let g = rng.random_range(0..k);
                sizes[g] += 1;
            }
            let tied = rep % 2 == 0;
            out.push(sizes.iter().map(|&s| draw(&mut rng, s, tied)).collect());
        }
        out
    }

    /// Paired differences, 1 to 10 values, zeros and ties included.
    pub fn differences(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for n in 1..=10 {
            for rep in 0..30 {
                let d: Vec<f64> = (0..n)
                    .map(|_| {
                        if rep % 2 == 0 {
                            rng.random_range(-3i32..=3) as f64
                        } else {
                            (rng.random::<f64>() * 20.0 - 10.0).round() / 4.0
                        }
                    })
                    .collect();
                if d.iter().any(|x| *x != 0.0) {
                    out.push(d);
                }
            }
        }
        out
    }
}
