//! Kruskal-Wallis H test with tie correction.

use std::collections::HashMap;

use crate::dist::chi2_sf;
use crate::rank::midranks;
use crate::result::{Exactness, Method, TestResult};
use crate::{Result, StatsError};

/// Largest group size for which `Exactness::Auto` may enumerate.
pub const EXACT_MAX_GROUP: usize = 5;
/// Largest total size for which `Exactness::Auto` may enumerate.
pub const EXACT_MAX_TOTAL: usize = 12;
/// Hard ceiling for forced exact enumeration (the state space is `2^N` masks).
pub const EXACT_HARD_LIMIT: usize = 20;

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    kruskal_wallis_with(groups, Exactness::Auto)
}

pub fn kruskal_wallis_with(groups: &[Vec<f64>], exactness: Exactness) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: groups.len() });
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranking = midranks(&pooled)?;
    let df = (groups.len() - 1) as f64;

    let nf = n as f64;
    let correction = 1.0 - ranking.tie_term() / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(TestResult::new(Method::KruskalWallis, 0.0, 1.0)
            .sizes(sizes)
            .df(vec![df])
            .note("degenerate: all observations identical"));
    }

    let doubled = ranking.doubled();
    let h = h_statistic(&doubled, &sizes, correction);

    let exact = match exactness {
        Exactness::Exact => {
            if n > EXACT_HARD_LIMIT {
                return Err(StatsError::InvalidArgument(format!(
                    "exact Kruskal-Wallis supports at most {EXACT_HARD_LIMIT} observations, got {n}"
                )));
            }
            true
        }
        Exactness::Asymptotic => false,
        Exactness::Auto => n <= EXACT_MAX_TOTAL && sizes.iter().all(|&s| s <= EXACT_MAX_GROUP),
    };

    let result = if exact {
        let (hits, total) = exact_tail(&doubled, &sizes);
        TestResult::exact_from_counts(Method::KruskalWallis, h, hits, total)
    } else {
        TestResult::new(Method::KruskalWallis, h, chi2_sf(h, df)).note("chi-square approximation")
    };
    let mut result = result.sizes(sizes).df(vec![df]);
    if ranking.has_ties() {
        result = result.note(format!("tie correction factor {correction:.6}"));
    }
    Ok(result)
}

/// H computed from the integer rank-sum key, so balanced designs give exactly 0.
fn h_statistic(doubled: &[i64], sizes: &[usize], correction: f64) -> f64 {
    let n = doubled.len() as i128;
    let lcm = lcm_of(sizes);
    let key = rank_key(doubled, sizes, lcm);
    // 12/(N(N+1)) * key/(4L) - 3(N+1), over the common denominator L*N*(N+1)
    let numerator = 3 * key - 3 * (n + 1) * lcm * n * (n + 1);
    let denominator = lcm * n * (n + 1);
    (numerator as f64 / denominator as f64 / correction).max(0.0)
}

fn lcm_of(sizes: &[usize]) -> i128 {
    sizes.iter().fold(1i128, |acc, &s| acc / gcd(acc, s as i128) * s as i128)
}

/// `sum_i (2 R_i)^2 * (L / n_i)` for consecutive groups of `doubled`.
fn rank_key(doubled: &[i64], sizes: &[usize], lcm: i128) -> i128 {
    let mut key = 0i128;
    let mut offset = 0;
    for &size in sizes {
        let r: i128 = doubled[offset..offset + size].iter().map(|&x| x as i128).sum();
        key += r * r * (lcm / size as i128);
        offset += size;
    }
    key
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact upper tail of H over all assignments of the pooled observations to
/// groups of the given sizes.
///
/// H is an increasing function of `sum_i R_i^2 / n_i`, which is tracked as the
/// integer `sum_i (2 R_i)^2 * (L / n_i)` with `L = lcm(n_i)`. Groups are filled
/// in order; states are keyed by the bitmask of observations already placed,
/// so assignments that use the same observations are merged.
fn exact_tail(doubled: &[i64], sizes: &[usize]) -> (u128, u128) {
    let lcm = lcm_of(sizes);
    let weight = |size: usize| lcm / size as i128;
    let observed = rank_key(doubled, sizes, lcm);

    let n = doubled.len();
    let mut states: HashMap<u32, HashMap<i128, u128>> = HashMap::new();
    states.insert(0, HashMap::from([(0i128, 1u128)]));
    for &size in sizes {
        let w = weight(size);
        let mut next: HashMap<u32, HashMap<i128, u128>> = HashMap::new();
        for (mask, values) in &states {
            let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            for_each_subset(&free, size, &mut |chosen: &[usize]| {
                let mut add = 0u32;
                let mut r = 0i128;
                for &i in chosen {
                    add |= 1 << i;
                    r += doubled[i] as i128;
                }
                let inc = r * r * w;
                let slot = next.entry(mask | add).or_default();
                for (&v, &c) in values {
                    *slot.entry(v + inc).or_default() += c;
                }
            });
        }
        states = next;
    }

    let mut hits = 0u128;
    let mut total = 0u128;
    for values in states.values() {
        for (&v, &c) in values {
            total += c;
            if v >= observed {
                hits += c;
            }
        }
    }
    (hits, total)
}

fn for_each_subset(items: &[usize], size: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(items: &[usize], size: usize, start: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let needed = size - buf.len();
        if items.len() < start + needed {
            return;
        }
        for i in start..=items.len() - needed {
            buf.push(items[i]);
            rec(items, size, i + 1, buf, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(size);
    rec(items, size, 0, &mut buf, f);
}
