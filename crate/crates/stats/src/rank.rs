//! Midrank assignment shared by the rank-based tests.

use std::cmp::Ordering;

use crate::{Result, StatsError};

/// Ranks with ties resolved to the mean of the tied positions, plus the
/// size of every tie group (groups of one included).
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub ranks: Vec<f64>,
    pub tie_groups: Vec<usize>,
}

impl Ranking {
    /// Ranks doubled, which makes every midrank an integer.
    pub fn doubled(&self) -> Vec<i64> {
        self.ranks.iter().map(|r| (2.0 * r).round() as i64).collect()
    }

    /// `sum(t^3 - t)` over tie groups.
    pub fn tie_term(&self) -> f64 {
        self.tie_groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum()
    }

    pub fn has_ties(&self) -> bool {
        self.tie_groups.iter().any(|&t| t > 1)
    }
}

pub fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

pub fn midranks(values: &[f64]) -> Result<Ranking> {
    check_finite(values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));

    let mut ranks = vec![0.0; values.len()];
    let mut tie_groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        tie_groups.push(j - i);
        i = j;
    }
    Ok(Ranking { ranks, tie_groups })
}
