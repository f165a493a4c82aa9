//! Adaptive session state machine.
//!
//! A session asks `N_Q` questions. In adaptive mode question `k` is drawn
//! uniformly from the unasked items of level
//! `L_k = trunc(N_L * sum(phi_binary) / N_Q + 1)`, so the level never drops
//! and rises by one for every `N_Q / N_L` correct answers. Level progression
//! always uses the 0/1 item values, whichever scoring rule the session uses.
//! Linear mode asks a fixed list of items in order.
//!
//! The engine never reads the system clock: every transition takes `now`.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{
    instantiate_numeric_item, validate_bank, InstantiationError, Item, ItemBank, ItemBody, NumericInstance,
    ValidationReport,
};
use crate::scoring::{final_grade, phi_binary, session_score, ItemOutcome, ScoringConfig, ScoringError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "order")]
pub enum Mode {
    Adaptive,
    /// Fixed item order; its length must equal `n_questions`.
    Linear(Vec<String>),
}

/// What to do when the current level has no unasked item left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    #[default]
    Strict,
    /// Draw again from the whole level, allowing repeats; the attempt is flagged.
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_questions: usize,
    pub n_levels: u32,
    /// Seconds; `None` disables the deadline.
    pub time_limit_s: Option<u64>,
    pub scoring: ScoringConfig,
    pub rng_seed: u64,
    pub mode: Mode,
    pub feedback_enabled: bool,
    #[serde(default)]
    pub pool_policy: PoolPolicy,
}

impl SessionConfig {
    /// Adaptive session with uniform weights and `K = max_grade`.
    pub fn adaptive(n_questions: usize, n_levels: u32, max_grade: f64, guess_correction: bool, seed: u64) -> Self {
        SessionConfig {
            n_questions,
            n_levels,
            time_limit_s: Some(15 * 60),
            scoring: ScoringConfig::uniform(n_questions.max(1), max_grade, guess_correction)
                .expect("uniform weights are valid"),
            rng_seed: seed,
            mode: Mode::Adaptive,
            feedback_enabled: false,
            pool_policy: PoolPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Finished,
    Aborted,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Choice(usize),
    Numeric(f64),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("invalid scoring config: {0}")]
    Scoring(#[from] ScoringError),
    #[error("bank not usable for this session:\n{0}")]
    Bank(ValidationReport),
    #[error("no unasked item left on level {level}")]
    PoolExhausted { level: u32 },
    #[error("session is {0:?}")]
    NotActive(Status),
    #[error("session deadline has passed")]
    Expired,
    #[error("malformed answer: {0}")]
    MalformedAnswer(String),
    #[error("session has {answered} of {n_questions} answers")]
    Incomplete { answered: usize, n_questions: usize },
    #[error(transparent)]
    Instantiation(#[from] InstantiationError),
}

/// `trunc(N_L * sum(history) / N_Q + 1)`, clamped to `[1, N_L]`.
pub fn current_level(history: &[f64], n_questions: usize, n_levels: u32) -> u32 {
    let sum: f64 = history.iter().sum();
    let raw = (n_levels as f64 * sum / n_questions as f64 + 1.0).trunc();
    raw.clamp(1.0, n_levels as f64) as u32
}

/// One answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsweredItem {
    pub k: usize,
    pub item_id: String,
    pub level: u32,
    pub correct: bool,
    pub phi_binary: f64,
    pub phi_scoring: f64,
    pub elapsed_s: f64,
}

/// What the student sees. Carries neither the level nor the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub k: usize,
    pub n_questions: usize,
    pub kind: QuestionKind,
    pub statement: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attachment_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remaining_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultipleAnswer,
    OpenAnswer,
}

/// The correct answer for the pending question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnswerKey {
    Choice { correct: usize, n_options: usize },
    Numeric { expected: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session_id: String,
    pub status: Status,
    pub finished: bool,
    /// Normalized score S over the answered items.
    pub score: f64,
    pub final_grade: f64,
    /// Count of correct answers.
    pub raw_grade: u32,
    pub final_level: u32,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub items: Vec<AnsweredItem>,
    /// Set when a permissive pool had to repeat an item.
    pub repeated_items: bool,
}

impl SessionResult {
    /// Final grade for finished sessions, floored at 0 so that a heavily
    /// penalized guesser is not confused with the −1 of an unfinished attempt.
    pub fn exported_score(&self) -> f64 {
        if self.finished {
            self.final_grade.max(0.0)
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    /// Correctness of the answer just given, present only with feedback on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next: Option<QuestionView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SessionResult>,
}

#[derive(Debug, Clone)]
struct Pending {
    item: Item,
    level: u32,
    instance: Option<NumericInstance>,
    shown_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    bank: Arc<ItemBank>,
    rng: ChaCha8Rng,
    answered: Vec<AnsweredItem>,
    outcomes: Vec<ItemOutcome>,
    pending: Option<Pending>,
    status: Status,
    started_at: DateTime<Utc>,
    deadline: Option<DateTime<Utc>>,
    ended_at: Option<DateTime<Utc>>,
    repeated_items: bool,
}

impl Session {
    /// Validates the configuration against the bank and draws question 1.
    pub fn start(
        id: impl Into<String>,
        bank: Arc<ItemBank>,
        config: SessionConfig,
        now: DateTime<Utc>,
    ) -> Result<Session, EngineError> {
        check_config(&config, &bank)?;
        let deadline = config.time_limit_s.map(|s| now + Duration::seconds(s as i64));
        let mut session = Session {
            id: id.into(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            bank,
            answered: Vec::new(),
            outcomes: Vec::new(),
            pending: None,
            status: Status::Active,
            started_at: now,
            deadline,
            ended_at: None,
            repeated_items: false,
        };
        session.draw_next(now)?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn deadline(&self) -> Option<DateTime<Utc>> {
        self.deadline
    }

    pub fn answered(&self) -> &[AnsweredItem] {
        &self.answered
    }

    /// Level the next question is (or would be) drawn from.
    pub fn current_level(&self) -> u32 {
        let history: Vec<f64> = self.answered.iter().map(|a| a.phi_binary).collect();
        current_level(&history, self.config.n_questions, self.config.n_levels)
    }

    /// Marks the session expired when `now` is at or past the deadline.
    /// Returns whether the session is (now) expired.
    pub fn check_expiry(&mut self, now: DateTime<Utc>) -> bool {
        if self.status == Status::Active {
            if let Some(deadline) = self.deadline {
                if now >= deadline {
                    self.status = Status::Expired;
                    self.pending = None;
                    self.ended_at = Some(deadline);
                }
            }
        }
        self.status == Status::Expired
    }

    pub fn question(&self, now: DateTime<Utc>) -> Result<QuestionView, EngineError> {
        if self.status != Status::Active {
            return Err(EngineError::NotActive(self.status));
        }
        let pending = self.pending.as_ref().expect("active session has a pending question");
        Ok(self.view(pending, now))
    }

    /// The key to the pending question. Meant for simulated students and
    /// tests; the service never exposes it.
    pub fn answer_key(&self) -> Option<AnswerKey> {
        let pending = self.pending.as_ref()?;
        Some(match (&pending.item.body, &pending.instance) {
            (ItemBody::MultipleAnswer { choice }, _) => {
                AnswerKey::Choice { correct: choice.correct_index, n_options: choice.n_options() }
            }
            (ItemBody::OpenAnswer { .. }, Some(inst)) => {
                AnswerKey::Numeric { expected: inst.expected, tolerance: inst.tolerance }
            }
            (ItemBody::OpenAnswer { .. }, None) => unreachable!("open items are instantiated when drawn"),
        })
    }

    pub fn submit(&mut self, answer: Answer, now: DateTime<Utc>) -> Result<SubmitOutcome, EngineError> {
        if self.check_expiry(now) {
            return Err(EngineError::Expired);
        }
        if self.status != Status::Active {
            return Err(EngineError::NotActive(self.status));
        }
        let pending = self.pending.as_ref().expect("active session has a pending question");
        let (correct, n_options) = judge(pending, answer)?;
        let outcome = ItemOutcome { correct, n_options };
        let phi_scoring = outcome.phi(self.config.scoring.guess_correction)?;
        let elapsed = (now - pending.shown_at).num_milliseconds().max(0) as f64 / 1000.0;
        self.answered.push(AnsweredItem {
            k: self.answered.len() + 1,
            item_id: pending.item.item_id.clone(),
            level: pending.level,
            correct,
            phi_binary: phi_binary(correct),
            phi_scoring,
            elapsed_s: elapsed,
        });
        self.outcomes.push(outcome);
        self.pending = None;

        let feedback = self.config.feedback_enabled.then_some(correct);
        if self.answered.len() == self.config.n_questions {
            self.status = Status::Finished;
            self.ended_at = Some(now);
            return Ok(SubmitOutcome { correct: feedback, next: None, result: Some(self.result()?) });
        }
        self.draw_next(now)?;
        let next = self.question(now)?;
        Ok(SubmitOutcome { correct: feedback, next: Some(next), result: None })
    }

    pub fn abort(&mut self, now: DateTime<Utc>) -> Result<SessionResult, EngineError> {
        if self.check_expiry(now) {
            return self.result();
        }
        if self.status != Status::Active {
            return Err(EngineError::NotActive(self.status));
        }
        self.status = Status::Aborted;
        self.pending = None;
        self.ended_at = Some(now);
        self.result()
    }

    /// Final result of a finished, aborted or expired session.
    pub fn result(&self) -> Result<SessionResult, EngineError> {
        if self.status == Status::Active {
            return Err(EngineError::Incomplete {
                answered: self.answered.len(),
                n_questions: self.config.n_questions,
            });
        }
        let score = session_score(&self.outcomes, &self.config.scoring)?;
        Ok(SessionResult {
            session_id: self.id.clone(),
            status: self.status,
            finished: self.status == Status::Finished,
            score,
            final_grade: final_grade(score, &self.config.scoring),
            raw_grade: self.answered.iter().filter(|a| a.correct).count() as u32,
            final_level: self.answered.last().map_or(1, |a| a.level),
            started_at: self.started_at,
            ended_at: self.ended_at.expect("terminal sessions have an end time"),
            items: self.answered.clone(),
            repeated_items: self.repeated_items,
        })
    }

    fn view(&self, pending: &Pending, now: DateTime<Utc>) -> QuestionView {
        let (kind, statement, options) = match (&pending.item.body, &pending.instance) {
            (ItemBody::MultipleAnswer { choice }, _) => {
                (QuestionKind::MultipleAnswer, pending.item.statement.clone(), Some(choice.options.clone()))
            }
            (ItemBody::OpenAnswer { .. }, Some(inst)) => (QuestionKind::OpenAnswer, inst.statement.clone(), None),
            (ItemBody::OpenAnswer { .. }, None) => unreachable!("open items are instantiated when drawn"),
        };
        QuestionView {
            k: self.answered.len() + 1,
            n_questions: self.config.n_questions,
            kind,
            statement,
            options,
            attachment_ref: pending.item.attachment_ref.clone(),
            remaining_s: self.deadline.map(|d| ((d - now).num_milliseconds().max(0) as f64) / 1000.0),
        }
    }

    fn draw_next(&mut self, now: DateTime<Utc>) -> Result<(), EngineError> {
        let (item, level) = match &self.config.mode {
            Mode::Linear(order) => {
                let id = &order[self.answered.len()];
                let item = self.bank.item(id).expect("linear order checked at start").clone();
                let level = item.level;
                (item, level)
            }
            Mode::Adaptive => {
                let level = self.current_level();
                let pool: Vec<&Item> = self.bank.items.iter().filter(|i| i.level == level).collect();
                let fresh: Vec<&Item> =
                    pool.iter().copied().filter(|i| !self.answered.iter().any(|a| a.item_id == i.item_id)).collect();
                let candidates = if !fresh.is_empty() {
                    fresh
                } else if self.config.pool_policy == PoolPolicy::Permissive && !pool.is_empty() {
                    self.repeated_items = true;
                    pool
                } else {
                    return Err(EngineError::PoolExhausted { level });
                };
                let pick = self.rng.random_range(0..candidates.len());
                (candidates[pick].clone(), level)
            }
        };
        let instance = if item.is_open_answer() {
            let seed = self.rng.next_u64();
            Some(instantiate_numeric_item(&item, seed)?)
        } else {
            None
        };
        self.pending = Some(Pending { item, level, instance, shown_at: now });
        Ok(())
    }
}

fn check_config(config: &SessionConfig, bank: &ItemBank) -> Result<(), EngineError> {
    if config.n_questions == 0 {
        return Err(EngineError::Config("n_questions must be at least 1".into()));
    }
    if config.n_levels == 0 {
        return Err(EngineError::Config("n_levels must be at least 1".into()));
    }
    if config.scoring.n_questions() != config.n_questions {
        return Err(EngineError::Config(format!(
            "{} weights for {} questions",
            config.scoring.n_questions(),
            config.n_questions
        )));
    }
    if config.time_limit_s == Some(0) {
        return Err(EngineError::Config("time limit must be positive".into()));
    }
    config.scoring.validate()?;
    match &config.mode {
        Mode::Adaptive => {
            let report = validate_bank(bank, config.n_levels);
            if !report.is_clean() {
                return Err(EngineError::Bank(report));
            }
        }
        Mode::Linear(order) => {
            if order.len() != config.n_questions {
                return Err(EngineError::Config(format!(
                    "linear order has {} items for {} questions",
                    order.len(),
                    config.n_questions
                )));
            }
            if let Some(missing) = order.iter().find(|id| bank.item(id).is_none()) {
                return Err(EngineError::Config(format!("linear order names unknown item `{missing}`")));
            }
            let mut report = validate_bank(bank, bank.num_levels);
            report.issues.retain(|i| !matches!(i, crate::bank::Issue::EmptyLevel(_)));
            if !report.is_clean() {
                return Err(EngineError::Bank(report));
            }
        }
    }
    Ok(())
}

fn judge(pending: &Pending, answer: Answer) -> Result<(bool, Option<usize>), EngineError> {
    match (&pending.item.body, answer) {
        (ItemBody::MultipleAnswer { choice }, Answer::Choice(i)) => {
            if i >= choice.n_options() {
                return Err(EngineError::MalformedAnswer(format!("option {i} out of range 0..{}", choice.n_options())));
            }
            Ok((i == choice.correct_index, Some(choice.n_options())))
        }
        (ItemBody::OpenAnswer { .. }, Answer::Numeric(x)) => {
            if !x.is_finite() {
                return Err(EngineError::MalformedAnswer("numeric answer must be finite".into()));
            }
            let inst = pending.instance.as_ref().expect("open items are instantiated when drawn");
            Ok((inst.accepts(x), None))
        }
        (ItemBody::MultipleAnswer { .. }, Answer::Numeric(_)) => {
            Err(EngineError::MalformedAnswer("multiple-answer question needs a choice index".into()))
        }
        (ItemBody::OpenAnswer { .. }, Answer::Choice(_)) => {
            Err(EngineError::MalformedAnswer("open-answer question needs a numeric value".into()))
        }
    }
}
