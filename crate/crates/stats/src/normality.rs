//! D'Agostino-Pearson omnibus normality test.
//!
//! Sample skewness is transformed with D'Agostino's Johnson-SU approximation
//! and sample kurtosis with the Anscombe-Glynn cube-root transform; the sum
//! of their squares is referred to a chi-square with two degrees of freedom.

use crate::dist::chi2_sf;
use crate::rank::check_finite;
use crate::result::{Method, TestResult};
use crate::{Result, StatsError};

pub const MIN_SAMPLE: usize = 8;

/// Standardized skewness and kurtosis components of the omnibus statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentScores {
    pub sqrt_b1: f64,
    pub b2: f64,
    pub z_skew: f64,
    pub z_kurt: f64,
}

pub fn moment_scores(sample: &[f64]) -> Result<MomentScores> {
    check_finite(sample)?;
    let n = sample.len();
    if n < MIN_SAMPLE {
        return Err(StatsError::TooSmall { needed: MIN_SAMPLE, got: n });
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
        return Err(StatsError::Degenerate("sample has zero variance".into()));
    }
    let sqrt_b1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);
    Ok(MomentScores { sqrt_b1, b2, z_skew: skewness_z(sqrt_b1, nf), z_kurt: kurtosis_z(b2, nf) })
}

fn skewness_z(sqrt_b1: f64, n: f64) -> f64 {
    let y = sqrt_b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 =
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let ya = y / alpha;
    delta * (ya + (ya * ya + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let mean = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - mean) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// Omnibus K² normality test. Requires at least eight observations.
pub fn dagostino_pearson_k2(sample: &[f64]) -> Result<TestResult> {
    let scores = moment_scores(sample)?;
    let k2 = scores.z_skew * scores.z_skew + scores.z_kurt * scores.z_kurt;
    Ok(TestResult::new(Method::DagostinoPearson, k2, chi2_sf(k2, 2.0)).sizes(vec![sample.len()]).df(vec![2.0]).note(
        format!(
            "skewness {:.6} (z {:.6}), kurtosis {:.6} (z {:.6})",
            scores.sqrt_b1, scores.z_skew, scores.b2, scores.z_kurt
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_sample_has_zero_skew_component() {
        let half = [0.3, 1.1, 2.0, 2.7, 4.2];
        let sample: Vec<f64> = half.iter().flat_map(|x| [10.0 + x, 10.0 - x]).collect();
        let s = moment_scores(&sample).unwrap();
        assert!(s.sqrt_b1.abs() < 1e-14);
        assert!(s.z_skew.abs() < 1e-12);
    }

    #[test]
    fn small_samples_rejected() {
        assert_eq!(dagostino_pearson_k2(&[1.0, 2.0, 3.0, 4.0, 5.0]), Err(StatsError::TooSmall { needed: 8, got: 5 }));
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert!(matches!(dagostino_pearson_k2(&[4.0; 20]), Err(StatsError::Degenerate(_))));
    }

    #[test]
    fn matches_reference_values() {
        // Reference: scipy.stats.normaltest on 0..20 squared
        let sample: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let r = dagostino_pearson_k2(&sample).unwrap();
        assert!((r.statistic - REF_K2).abs() < 1e-9, "{}", r.statistic);
        assert!((r.p_value - REF_P).abs() < 1e-9, "{}", r.p_value);
    }

    const REF_K2: f64 = 2.596_513_654_676_187_8;
    const REF_P: f64 = 0.273_007_277_310_323;
}
