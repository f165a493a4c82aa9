//! Per-item scores, the weighted session score and final-grade rescaling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("weight {index} is {value}; weights must be finite and non-negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("{weights} weights for {n_questions} questions")]
    WeightCount { weights: usize, n_questions: usize },
    #[error("at least one question is required")]
    NoQuestions,
    #[error("rescale factor must be positive, got {0}")]
    RescaleFactor(f64),
    #[error("{got} outcomes exceed the {n_questions} questions of the session")]
    TooManyOutcomes { got: usize, n_questions: usize },
    #[error("guess correction needs at least 2 options, got {0}")]
    TooFewOptions(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub weights: Vec<f64>,
    pub rescale_factor: f64,
    pub max_grade: f64,
    /// Score with the guess-corrected per-item value instead of 0/1.
    pub guess_correction: bool,
}

impl ScoringConfig {
    /// Uniform weights with `K = M = max_grade`.
    pub fn uniform(n_questions: usize, max_grade: f64, guess_correction: bool) -> Result<Self, ScoringError> {
        let config = ScoringConfig {
            weights: default_weights(n_questions)?,
            rescale_factor: max_grade,
            max_grade,
            guess_correction,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn n_questions(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.weights.is_empty() {
            return Err(ScoringError::NoQuestions);
        }
        if let Some((index, &value)) = self.weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(ScoringError::NegativeWeight { index, value });
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ScoringError::WeightSum(sum));
        }
        if !(self.rescale_factor > 0.0 && self.rescale_factor.is_finite()) {
            return Err(ScoringError::RescaleFactor(self.rescale_factor));
        }
        Ok(())
    }
}

/// Uniform weights `1 / N_Q`.
///
/// The last weight absorbs the rounding residue so the sum is 1 to within
/// one ulp.
pub fn default_weights(n_questions: usize) -> Result<Vec<f64>, ScoringError> {
    if n_questions == 0 {
        return Err(ScoringError::NoQuestions);
    }
    let w = 1.0 / n_questions as f64;
    let mut weights = vec![w; n_questions];
    let head: f64 = weights[..n_questions - 1].iter().sum();
    weights[n_questions - 1] = 1.0 - head;
    Ok(weights)
}

pub fn phi_binary(correct: bool) -> f64 {
    if correct {
        1.0
    } else {
        0.0
    }
}

/// 1 when correct, otherwise `-1 / (N_R - 1)`, so uniform guessing has
/// expectation zero.
pub fn phi_corrected(correct: bool, n_options: usize) -> Result<f64, ScoringError> {
    if n_options < 2 {
        return Err(ScoringError::TooFewOptions(n_options));
    }
    Ok(if correct { 1.0 } else { -1.0 / (n_options - 1) as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub correct: bool,
    /// N_R for multiple-answer items, `None` for open answers.
    pub n_options: Option<usize>,
}

impl ItemOutcome {
    /// The value entering the session score. Open answers cannot be guessed
    /// from a finite option set, so they keep binary scoring either way.
    pub fn phi(&self, guess_correction: bool) -> Result<f64, ScoringError> {
        match (guess_correction, self.n_options) {
            (true, Some(n)) => phi_corrected(self.correct, n),
            _ => Ok(phi_binary(self.correct)),
        }
    }
}

/// `S = sum_i alpha_i phi_i` over the answered items; unanswered positions
/// contribute nothing.
pub fn session_score(outcomes: &[ItemOutcome], config: &ScoringConfig) -> Result<f64, ScoringError> {
    config.validate()?;
    if outcomes.len() > config.n_questions() {
        return Err(ScoringError::TooManyOutcomes { got: outcomes.len(), n_questions: config.n_questions() });
    }
    let mut s = 0.0;
    for (o, w) in outcomes.iter().zip(&config.weights) {
        s += w * o.phi(config.guess_correction)?;
    }
    Ok(s)
}

/// `FG = K S`.
pub fn final_grade(score: f64, config: &ScoringConfig) -> f64 {
    config.rescale_factor * score
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcomes(correct: &[bool], n_options: Option<usize>) -> Vec<ItemOutcome> {
        correct.iter().map(|&c| ItemOutcome { correct: c, n_options }).collect()
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_binary(true), 1.0);
        assert_eq!(phi_binary(false), 0.0);
        assert_eq!(phi_corrected(false, 3), Ok(-0.5));
        assert_eq!(phi_corrected(false, 4), Ok(-1.0 / 3.0));
        assert_eq!(phi_corrected(true, 4), Ok(1.0));
        assert_eq!(phi_corrected(false, 1), Err(ScoringError::TooFewOptions(1)));
    }

    #[test]
    fn guessing_has_zero_expectation() {
        for n in 2..10 {
            let expected = phi_corrected(true, n).unwrap() / n as f64
                + phi_corrected(false, n).unwrap() * (n - 1) as f64 / n as f64;
            assert!(expected.abs() < 1e-15);
        }
    }

    #[test]
    fn default_weights_sum_to_one() {
        assert_eq!(default_weights(1), Ok(vec![1.0]));
        assert_eq!(default_weights(0), Err(ScoringError::NoQuestions));
        for n in [6, 7, 16, 49, 1000] {
            let w = default_weights(n).unwrap();
            assert_eq!(w.len(), n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!(default_weights(6).unwrap()[..5].iter().all(|&x| x == 1.0 / 6.0));
    }

    #[test]
    fn session_scores() {
        let c = ScoringConfig::uniform(6, 6.0, false).unwrap();
        let all = outcomes(&[true; 6], Some(3));
        assert!((session_score(&all, &c).unwrap() - 1.0).abs() < 1e-12);

        let four = outcomes(&[true, true, false, true, false, true], Some(3));
        let s = session_score(&four, &c).unwrap();
        assert!((s - 4.0 / 6.0).abs() < 1e-12);
        assert!((final_grade(s, &c) - 4.0).abs() < 1e-12);

        let corrected = ScoringConfig::uniform(6, 10.0, true).unwrap();
        let half = outcomes(&[true, false, true, false, true, false], Some(3));
        assert!((session_score(&half, &corrected).unwrap() - 0.25).abs() < 1e-12);
        assert!((final_grade(0.25, &corrected) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn open_answers_stay_binary_under_correction() {
        let c = ScoringConfig::uniform(2, 10.0, true).unwrap();
        let s = session_score(&outcomes(&[false, false], None), &c).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn partial_sessions_and_errors() {
        let c = ScoringConfig::uniform(4, 10.0, false).unwrap();
        assert_eq!(session_score(&outcomes(&[true], Some(2)), &c), Ok(0.25));
        assert!(matches!(
            session_score(&outcomes(&[true; 5], Some(2)), &c),
            Err(ScoringError::TooManyOutcomes { got: 5, n_questions: 4 })
        ));
        let bad = ScoringConfig { weights: vec![0.5, 0.6], ..c.clone() };
        assert!(matches!(bad.validate(), Err(ScoringError::WeightSum(_))));
        let neg = ScoringConfig { weights: vec![1.5, -0.5], ..c.clone() };
        assert!(matches!(neg.validate(), Err(ScoringError::NegativeWeight { index: 1, .. })));
        let k = ScoringConfig { rescale_factor: 0.0, ..c };
        assert_eq!(k.validate(), Err(ScoringError::RescaleFactor(0.0)));
    }
}
