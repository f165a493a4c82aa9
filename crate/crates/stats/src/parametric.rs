//! Pooled-variance t-test, one-way ANOVA and the pooled two-proportion z-test.

use crate::dist::{f_sf, normal_cdf, normal_sf, t_cdf, t_sf};
use crate::rank::check_finite;
use crate::result::{Alternative, Method, TestResult};
use crate::{Result, StatsError};

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from the mean.
pub(crate) fn sum_sq(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (sum_sq(xs) / (xs.len() - 1) as f64).sqrt()
}

/// Student's t-test with pooled variance. The statistic is signed as
/// `mean(a) - mean(b)`.
pub fn t_test_unpaired(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    check_finite(a)?;
    check_finite(b)?;
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(StatsError::TooSmall { needed: 2, got: xs.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = (sum_sq(a) + sum_sq(b)) / df;
    if pooled <= 0.0 {
        return Err(StatsError::Degenerate("pooled variance is zero".into()));
    }
    let t = (mean(a) - mean(b)) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let p = match alternative {
        Alternative::TwoSided => 2.0 * t_sf(t.abs(), df),
        Alternative::Greater => t_sf(t, df),
        Alternative::Less => t_cdf(t, df),
    };
    Ok(TestResult::new(Method::TTestUnpaired, t, p).alternative(alternative).sizes(vec![a.len(), b.len()]).df(vec![df]))
}

/// One-way ANOVA, `F = MSB / MSW` on `(k - 1, N - k)` degrees of freedom.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: groups.len() });
    }
    for g in groups {
        check_finite(g)?;
        if g.len() < 2 {
            return Err(StatsError::TooSmall { needed: 2, got: g.len() });
        }
    }
    let k = groups.len() as f64;
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups
        .iter()
        .map(|g| {
            let d = mean(g) - grand;
            g.len() as f64 * d * d
        })
        .sum();
    let ssw: f64 = groups.iter().map(|g| sum_sq(g)).sum();
    if ssw <= 0.0 {
        return Err(StatsError::Degenerate("within-group variance is zero".into()));
    }
    let df1 = k - 1.0;
    let df2 = n as f64 - k;
    let f = (ssb / df1) / (ssw / df2);
    Ok(TestResult::new(Method::AnovaOneway, f, f_sf(f, df1, df2))
        .sizes(groups.iter().map(Vec::len).collect())
        .df(vec![df1, df2])
        .note(format!("SSB {ssb:.6}, SSW {ssw:.6}")))
}

/// Two-proportion z-test with pooled variance. The statistic is signed as
/// `x1/n1 - x2/n2`.
pub fn z_two_proportions(x1: u64, n1: u64, x2: u64, n2: u64, alternative: Alternative) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::TooSmall { needed: 1, got: 0 });
    }
    if x1 > n1 || x2 > n2 {
        return Err(StatsError::InvalidArgument(format!("successes exceed trials ({x1}/{n1}, {x2}/{n2})")));
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(StatsError::Degenerate(format!("pooled proportion is {pooled}; the z statistic is undefined")));
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    let p = match alternative {
        Alternative::TwoSided => 2.0 * normal_sf(z.abs()),
        Alternative::Greater => normal_sf(z),
        Alternative::Less => normal_cdf(z),
    };
    Ok(TestResult::new(Method::ZTwoProportions, z, p).alternative(alternative).sizes(vec![n1 as usize, n2 as usize]))
}
