//! Mann-Whitney U test (Wilcoxon rank-sum) with midranks.

use crate::dist::{normal_cdf, normal_sf};
use crate::rank::midranks;
use crate::result::{Alternative, Exactness, Method, TestResult};
use crate::{Result, StatsError};

/// Combined sample size up to which `Exactness::Auto` enumerates.
pub const EXACT_MAX_TOTAL: usize = 12;

pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    mann_whitney_u_with(a, b, alternative, Exactness::Auto)
}

/// Mann-Whitney U for samples `a` and `b`.
///
/// The reported statistic is `min(U_a, U_b)` for a two-sided test and `U_a`
/// for a one-sided one. `Alternative::Less` means `a` tends to be smaller
/// than `b`.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alternative: Alternative, exactness: Exactness) -> Result<TestResult> {
    if a.is_empty() {
        return Err(StatsError::EmptyGroup(0));
    }
    if b.is_empty() {
        return Err(StatsError::EmptyGroup(1));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranking = midranks(&pooled)?;

    let rank_sum_a: f64 = ranking.ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let statistic = match alternative {
        Alternative::TwoSided => u_a.min(u_b),
        _ => u_a,
    };

    let exact = match exactness {
        Exactness::Exact => true,
        Exactness::Asymptotic => false,
        Exactness::Auto => n <= EXACT_MAX_TOTAL,
    };

    let result = if exact {
        let doubled = ranking.doubled();
        let observed: i64 = doubled[..na].iter().sum();
        let (hits, total) = exact_tail(&doubled, na, observed, alternative);
        TestResult::exact_from_counts(Method::MannWhitney, statistic, hits, total)
    } else {
        let mean = (na * nb) as f64 / 2.0;
        let nf = n as f64;
        let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - ranking.tie_term() / (nf * (nf - 1.0)));
        let p = if var <= 0.0 {
            1.0
        } else {
            let sd = var.sqrt();
            match alternative {
                Alternative::TwoSided => {
                    let z = ((u_a - mean).abs() - 0.5).max(0.0) / sd;
                    2.0 * normal_sf(z)
                }
                Alternative::Greater => normal_sf((u_a - mean - 0.5) / sd),
                Alternative::Less => normal_cdf((u_a - mean + 0.5) / sd),
            }
        };
        TestResult::new(Method::MannWhitney, statistic, p)
            .note("normal approximation, tie-corrected variance, continuity correction")
    };
    let mut result = result.alternative(alternative).sizes(vec![na, nb]);
    if ranking.has_ties() {
        result = result.note("midranks assigned to ties");
    }
    Ok(result)
}

/// Counts group-`a` rank assignments at least as extreme as `observed`.
///
/// `doubled` holds twice the midranks of the pooled sample, so all sums are
/// integers and comparisons are exact.
fn exact_tail(doubled: &[i64], na: usize, observed: i64, alternative: Alternative) -> (u128, u128) {
    let max_sum: i64 = doubled.iter().sum();
    let width = max_sum as usize + 1;
    // dist[j][s]: subsets of size j with doubled rank sum s
    let mut dist = vec![vec![0u128; width]; na + 1];
    dist[0][0] = 1;
    for &r in doubled {
        let r = r as usize;
        for j in (1..=na).rev() {
            let (lo, hi) = dist.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let n = doubled.len() as i64;
    // twice the mean of the doubled rank sum: na * (N + 1)
    let centre = na as i64 * (n + 1);
    let obs_dev = (observed - centre).abs();

    let mut hits = 0u128;
    let mut total = 0u128;
    for (s, &count) in dist[na].iter().enumerate() {
        if count == 0 {
            continue;
        }
        let s = s as i64;
        total += count;
        let extreme = match alternative {
            Alternative::TwoSided => (s - centre).abs() >= obs_dev,
            Alternative::Greater => s >= observed,
            Alternative::Less => s <= observed,
        };
        if extreme {
            hits += count;
        }
    }
    (hits, total)
}
