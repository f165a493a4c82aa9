//! Wilcoxon signed-rank test for paired samples.

use crate::dist::{normal_cdf, normal_sf};
use crate::rank::{check_finite, midranks};
use crate::result::{Alternative, Exactness, Method, TestResult};
use crate::{Result, StatsError};

/// Number of nonzero differences up to which `Exactness::Auto` enumerates.
pub const EXACT_MAX_N: usize = 20;

/// Signed-rank test on differences `x - y` of paired observations.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    wilcoxon_signed_rank_with(&diffs, alternative, Exactness::Auto)
}

/// Signed-rank test on a vector of paired differences.
///
/// Zero differences are dropped before ranking. The statistic is
/// `W = min(W+, W-)`; the one-sided alternatives are judged on `W+`
/// (`Greater`: differences tend to be positive).
pub fn wilcoxon_signed_rank_with(diffs: &[f64], alternative: Alternative, exactness: Exactness) -> Result<TestResult> {
    check_finite(diffs)?;
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let dropped = diffs.len() - nonzero.len();
    if nonzero.is_empty() {
        return Err(StatsError::Degenerate("all paired differences are zero".into()));
    }
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranking = midranks(&abs)?;

    let w_plus: f64 = ranking.ranks.iter().zip(&nonzero).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total_rank = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total_rank - w_plus;
    let statistic = w_plus.min(w_minus);

    let exact = match exactness {
        Exactness::Exact => true,
        Exactness::Asymptotic => false,
        Exactness::Auto => n <= EXACT_MAX_N,
    };

    let mut result = if exact {
        let doubled = ranking.doubled();
        let observed: i64 = doubled.iter().zip(&nonzero).filter(|(_, d)| **d > 0.0).map(|(r, _)| *r).sum();
        let (hits, total) = exact_tail(&doubled, observed, alternative);
        TestResult::exact_from_counts(Method::WilcoxonSignedRank, statistic, hits, total)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ranking.tie_term() / 48.0;
        let p = if var <= 0.0 {
            1.0
        } else {
            let sd = var.sqrt();
            match alternative {
                Alternative::TwoSided => 2.0 * normal_sf(((w_plus - mean).abs() - 0.5).max(0.0) / sd),
                Alternative::Greater => normal_sf((w_plus - mean - 0.5) / sd),
                Alternative::Less => normal_cdf((w_plus - mean + 0.5) / sd),
            }
        };
        TestResult::new(Method::WilcoxonSignedRank, statistic, p)
            .note("normal approximation, tie-corrected variance, continuity correction")
    };
    result = result.alternative(alternative).sizes(vec![n]).note(format!("W+ = {w_plus}, W- = {w_minus}"));
    if dropped > 0 {
        result = result.note(format!("{dropped} zero difference(s) excluded"));
    }
    if ranking.has_ties() {
        result = result.note("midranks assigned to tied |differences|");
    }
    Ok(result)
}

/// Distribution of the doubled positive-rank sum over all `2^n` sign vectors.
fn signed_rank_distribution(doubled: &[i64]) -> Vec<u128> {
    let max_sum: i64 = doubled.iter().sum();
    let mut dist = vec![0u128; max_sum as usize + 1];
    dist[0] = 1;
    for &r in doubled {
        let r = r as usize;
        for s in (r..dist.len()).rev() {
            dist[s] += dist[s - r];
        }
    }
    dist
}

fn exact_tail(doubled: &[i64], observed: i64, alternative: Alternative) -> (u128, u128) {
    let dist = signed_rank_distribution(doubled);
    let max_sum: i64 = doubled.iter().sum();
    let obs_dev = (2 * observed - max_sum).abs();
    let mut hits = 0u128;
    let mut total = 0u128;
    for (s, &count) in dist.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let s = s as i64;
        total += count;
        let extreme = match alternative {
            Alternative::TwoSided => (2 * s - max_sum).abs() >= obs_dev,
            Alternative::Greater => s >= observed,
            Alternative::Less => s <= observed,
        };
        if extreme {
            hits += count;
        }
    }
    (hits, total)
}

/// Largest integer `w` such that observing `W <= w` is significant at level
/// `alpha` for `n` untied nonzero differences, or `None` when even `W = 0`
/// is not significant.
pub fn wilcoxon_critical_value(n: usize, alpha: f64, alternative: Alternative) -> Option<u32> {
    let doubled: Vec<i64> = (1..=n as i64).map(|r| 2 * r).collect();
    let dist = signed_rank_distribution(&doubled);
    let total: u128 = dist.iter().sum();
    let factor = match alternative {
        Alternative::TwoSided => 2.0,
        _ => 1.0,
    };
    let mut cumulative = 0u128;
    let mut critical = None;
    // doubled sums are even; index 2w holds W+ = w
    for w in 0..=(n * (n + 1) / 2) {
        cumulative += dist[2 * w];
        if factor * cumulative as f64 / total as f64 <= alpha {
            critical = Some(w as u32);
        } else {
            break;
        }
    }
    critical
}
