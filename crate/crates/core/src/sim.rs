//! Synthetic students taking sessions through the real engine, and cohort
//! activity generated from schedule models.
//!
//! All randomness flows from explicit seeds. Students are simulated in
//! parallel, each from its own derived seed, so results do not depend on
//! thread scheduling.

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::ItemBank;
use crate::engine::{Answer, AnswerKey, EngineError, Session, SessionConfig, SessionResult};
use crate::store::{sort_chronologically, AttemptRecord};

/// Per-level probability of answering correctly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityProfile {
    pub p: Vec<f64>,
    /// Relative error applied to numeric answers the student gets "right";
    /// values above the item tolerance turn some of them wrong.
    #[serde(default)]
    pub numeric_noise: f64,
}

impl AbilityProfile {
    pub fn new(p: Vec<f64>) -> Self {
        AbilityProfile { p, numeric_noise: 0.0 }
    }

    /// Success probability on `level` (1-based); levels beyond the vector
    /// reuse its last entry.
    pub fn at(&self, level: u32) -> f64 {
        let i = (level as usize).saturating_sub(1).min(self.p.len().saturating_sub(1));
        self.p.get(i).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.p.is_empty() {
            return Err("ability profile needs at least one probability".into());
        }
        if let Some(x) = self.p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(format!("probability {x} outside [0, 1]"));
        }
        if !(self.numeric_noise >= 0.0 && self.numeric_noise.is_finite()) {
            return Err(format!("numeric_noise {} must be non-negative", self.numeric_noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Responder {
    Ability(AbilityProfile),
    /// Picks an option uniformly at random; open answers are always wrong.
    UniformGuesser,
}

impl Responder {
    fn answer(&self, key: AnswerKey, level: u32, rng: &mut ChaCha8Rng) -> Answer {
        match (self, key) {
            (Responder::UniformGuesser, AnswerKey::Choice { n_options, .. }) => {
                Answer::Choice(rng.random_range(0..n_options))
            }
            (Responder::UniformGuesser, AnswerKey::Numeric { expected, .. }) => {
                Answer::Numeric(wrong_number(expected, rng))
            }
            (Responder::Ability(profile), key) => {
                let knows = rng.random::<f64>() < profile.at(level);
                match key {
                    AnswerKey::Choice { correct, n_options } => {
                        if knows {
                            Answer::Choice(correct)
                        } else {
                            let other = rng.random_range(0..n_options - 1);
                            Answer::Choice(if other >= correct { other + 1 } else { other })
                        }
                    }
                    AnswerKey::Numeric { expected, .. } => {
                        if knows {
                            let e = profile.numeric_noise * rng.random_range(-1.0..=1.0);
                            Answer::Numeric(expected * (1.0 + e))
                        } else {
                            Answer::Numeric(wrong_number(expected, rng))
                        }
                    }
                }
            }
        }
    }
}

fn wrong_number(expected: f64, rng: &mut ChaCha8Rng) -> f64 {
    expected * rng.random_range(1.5..3.0) + 1.0
}

/// Timing and abandonment of one simulated attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptPlan {
    pub session_id: String,
    pub start: DateTime<Utc>,
    pub abandon_probability: f64,
    /// Seconds spent per answer, drawn uniformly from this range.
    pub answer_seconds: (i64, i64),
}

pub const DEFAULT_ANSWER_SECONDS: (i64, i64) = (20, 90);

/// Runs one attempt through the engine. `config.rng_seed` drives item
/// selection; `rng` drives the student.
pub fn run_attempt(
    responder: &Responder,
    bank: Arc<ItemBank>,
    config: SessionConfig,
    plan: &AttemptPlan,
    rng: &mut ChaCha8Rng,
) -> Result<SessionResult, EngineError> {
    let n_questions = config.n_questions;
    let abandon_at = (rng.random::<f64>() < plan.abandon_probability).then(|| rng.random_range(1..=n_questions));
    let mut now = plan.start;
    let mut session = Session::start(plan.session_id.clone(), bank, config, now)?;
    for k in 1..=n_questions {
        now += Duration::seconds(rng.random_range(plan.answer_seconds.0..=plan.answer_seconds.1));
        if abandon_at == Some(k) {
            return session.abort(now);
        }
        let level = session.current_level();
        let key = session.answer_key().expect("active session has a question");
        let answer = responder.answer(key, level, rng);
        match session.submit(answer, now) {
            Ok(outcome) => {
                if let Some(result) = outcome.result {
                    return Ok(result);
                }
            }
            Err(EngineError::Expired) => return session.result(),
            Err(e) => return Err(e),
        }
    }
    unreachable!("a session finishes after n_questions answers")
}

/// One complete attempt with no abandonment, starting at a fixed instant.
pub fn simulate_session(
    responder: &Responder,
    bank: Arc<ItemBank>,
    mut config: SessionConfig,
    seed: u64,
) -> Result<SessionResult, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    config.rng_seed = rng.random();
    let plan = AttemptPlan {
        session_id: format!("sim-{seed}"),
        start: Utc.with_ymd_and_hms(2020, 1, 1, 9, 0, 0).unwrap(),
        abandon_probability: 0.0,
        answer_seconds: DEFAULT_ANSWER_SECONDS,
    };
    run_attempt(responder, bank, config, &plan, &mut rng)
}

/// Mixes a base seed with indices (SplitMix64 finalizer).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z =
        base.wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Day weights `baseline + exp(-rate * days_before_end)`.
    Cramming,
    Uniform,
    /// Active days spread evenly over the window.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleModel {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub shape: Shape,
    #[serde(default = "default_rate")]
    pub cramming_rate: f64,
    #[serde(default)]
    pub baseline: f64,
    /// Inclusive range of distinct active days per student.
    pub active_days: (u32, u32),
    /// Inclusive range of attempts on each active day.
    pub attempts_per_day: (u32, u32),
    /// Rewarded students spread their work over at least three days.
    #[serde(default)]
    pub reward_response: bool,
    #[serde(default = "default_participation")]
    pub participation: f64,
    #[serde(default)]
    pub abandon_probability: f64,
}

fn default_rate() -> f64 {
    0.5
}

fn default_participation() -> f64 {
    1.0
}

pub const REWARD_MIN_DAYS: u32 = 3;
const DAY_OPENS_H: i64 = 8;
const DAY_HOURS: i64 = 15;

impl ScheduleModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.end <= self.start {
            return Err("window end must be after its start".into());
        }
        let (lo, hi) = self.active_days;
        if lo == 0 || lo > hi {
            return Err(format!("active_days range [{lo}, {hi}] is invalid"));
        }
        let (lo, hi) = self.attempts_per_day;
        if lo == 0 || lo > hi {
            return Err(format!("attempts_per_day range [{lo}, {hi}] is invalid"));
        }
        for (name, p) in [("participation", self.participation), ("abandon_probability", self.abandon_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.cramming_rate >= 0.0 && self.baseline >= 0.0) {
            return Err("cramming_rate and baseline must be non-negative".into());
        }
        Ok(())
    }

    /// Calendar days (UTC) touched by the window.
    pub fn window_days(&self) -> u32 {
        let first = self.start.date_naive();
        let last = (self.end - Duration::nanoseconds(1)).date_naive();
        (last - first).num_days() as u32 + 1
    }

    fn day_start(&self, d: u32) -> DateTime<Utc> {
        let midnight = self.start.date_naive().and_hms_opt(0, 0, 0).unwrap().and_utc();
        midnight + Duration::days(d as i64)
    }

    /// Distinct day indices, sorted.
    pub fn pick_days(&self, count: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let n = self.window_days();
        let count = count.min(n);
        let mut days = match self.shape {
            Shape::Continuous => (0..count)
                .map(|i| {
                    let lo = (i as u64 * n as u64 / count as u64) as u32;
                    let hi = ((i as u64 + 1) * n as u64 / count as u64) as u32;
                    rng.random_range(lo..hi.max(lo + 1))
                })
                .collect(),
            Shape::Uniform | Shape::Cramming => {
                let mut weights: Vec<f64> = (0..n)
                    .map(|d| match self.shape {
                        Shape::Cramming => self.baseline + (-self.cramming_rate * (n - 1 - d) as f64).exp(),
                        _ => 1.0,
                    })
                    .collect();
                let mut picked = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let dist = WeightedIndex::new(&weights).expect("positive weights remain");
                    let d = dist.sample(rng);
                    picked.push(d as u32);
                    weights[d] = 0.0;
                }
                picked
            }
        };
        days.sort_unstable();
        days
    }

    /// Start instants for `attempts` sessions on day `d`, leaving room for
    /// each session to end before the next begins.
    fn day_slots(&self, d: u32, attempts: u32, session_minutes: i64, rng: &mut ChaCha8Rng) -> Vec<DateTime<Utc>> {
        let open = self.day_start(d) + Duration::hours(DAY_OPENS_H);
        let open = open.max(self.start);
        let budget = DAY_HOURS * 60 - attempts as i64 * session_minutes;
        let max_gap = (budget / attempts.max(1) as i64).clamp(1, 30);
        let slack = (budget - attempts as i64 * max_gap).max(0);
        let mut t = open + Duration::minutes(rng.random_range(0..=slack));
        let mut out = Vec::with_capacity(attempts as usize);
        for _ in 0..attempts {
            out.push(t);
            t += Duration::minutes(session_minutes + rng.random_range(1..=max_gap));
        }
        out
    }
}

/// How one student's attempts in a window are laid out.
#[derive(Debug, Clone, PartialEq)]
pub enum Activity {
    /// Drawn from the schedule's ranges.
    Drawn,
    /// Fixed attempt counts, one entry per active day.
    Planned(Vec<u32>),
}

/// Everything needed to simulate one student in one window.
#[derive(Debug, Clone)]
pub struct StudentPlan {
    pub student_id: String,
    pub responder: Responder,
    pub activity: Activity,
}

#[derive(Debug, Clone)]
pub struct CohortRun<'a> {
    pub cohort_id: &'a str,
    /// Distinguishes attempt ids when one cohort is simulated over several
    /// windows.
    pub window: Option<&'a str>,
    pub test_id: &'a str,
    pub bank: Arc<ItemBank>,
    pub session: &'a SessionConfig,
    pub schedule: &'a ScheduleModel,
    pub seed: u64,
}

/// Upper bound on a session's wall-clock minutes, used to space attempts.
fn session_minutes(config: &SessionConfig) -> i64 {
    let answering = config.n_questions as i64 * DEFAULT_ANSWER_SECONDS.1;
    let limit = config.time_limit_s.map_or(i64::MAX, |s| s as i64);
    (answering.min(limit) + 59) / 60
}

/// Simulates every student of `plans` over one schedule window.
pub fn simulate_window(run: &CohortRun<'_>, plans: &[StudentPlan]) -> Result<Vec<AttemptRecord>, EngineError> {
    let minutes = session_minutes(run.session);
    let per_student: Result<Vec<Vec<AttemptRecord>>, EngineError> = plans
        .par_iter()
        .enumerate()
        .map(|(i, plan)| simulate_student(run, plan, derive_seed(run.seed, i as u64, 0), minutes))
        .collect();
    let mut records: Vec<AttemptRecord> = per_student?.into_iter().flatten().collect();
    sort_chronologically(&mut records);
    Ok(records)
}

fn simulate_student(
    run: &CohortRun<'_>,
    plan: &StudentPlan,
    seed: u64,
    minutes: i64,
) -> Result<Vec<AttemptRecord>, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = run.schedule;
    let per_day: Vec<u32> = match &plan.activity {
        Activity::Planned(counts) => counts.clone(),
        Activity::Drawn => {
            if rng.random::<f64>() >= schedule.participation {
                return Ok(Vec::new());
            }
            let (lo, hi) = schedule.active_days;
            let mut days = rng.random_range(lo..=hi);
            if schedule.reward_response {
                days = days.max(REWARD_MIN_DAYS);
            }
            let (lo, hi) = schedule.attempts_per_day;
            (0..days.min(schedule.window_days())).map(|_| rng.random_range(lo..=hi)).collect()
        }
    };
    let days = schedule.pick_days(per_day.len() as u32, &mut rng);
    let mut records = Vec::new();
    let mut n = 0;
    for (&d, &count) in days.iter().zip(&per_day) {
        for start in schedule.day_slots(d, count, minutes, &mut rng) {
            n += 1;
            let mut config = run.session.clone();
            config.rng_seed = rng.random();
            let attempt = AttemptPlan {
                session_id: match run.window {
                    Some(w) => format!("{}-{w}-{}-{n:03}", run.cohort_id, plan.student_id),
                    None => format!("{}-{}-{n:03}", run.cohort_id, plan.student_id),
                },
                start,
                abandon_probability: schedule.abandon_probability,
                answer_seconds: DEFAULT_ANSWER_SECONDS,
            };
            let result = run_attempt(&plan.responder, run.bank.clone(), config, &attempt, &mut rng)?;
            records.push(AttemptRecord::from_session(&result, &plan.student_id, run.cohort_id, run.test_id));
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{ChoiceSpec, Item, ItemBody};
    use crate::store::{metrics, CohortDataset};
    use chrono::FixedOffset;

    fn bank(levels: u32, per_level: usize) -> Arc<ItemBank> {
        let items = (1..=levels)
            .flat_map(|l| {
                (0..per_level).map(move |i| Item {
                    item_id: format!("L{l}-{i}"),
                    level: l,
                    statement: "?".into(),
                    attachment_ref: None,
                    body: ItemBody::MultipleAnswer {
                        choice: ChoiceSpec { options: vec!["a".into(), "b".into(), "c".into()], correct_index: i % 3 },
                    },
                })
            })
            .collect();
        Arc::new(ItemBank { bank_id: "sim".into(), num_levels: levels, title: None, version: None, items })
    }

    fn window(shape: Shape, days: i64) -> ScheduleModel {
        let start = Utc.with_ymd_and_hms(2018, 4, 30, 0, 0, 0).unwrap();
        ScheduleModel {
            start,
            end: start + Duration::days(days),
            shape,
            cramming_rate: 0.8,
            baseline: 0.0,
            active_days: (1, 3),
            attempts_per_day: (1, 3),
            reward_response: false,
            participation: 1.0,
            abandon_probability: 0.0,
        }
    }

    fn students(n: usize, p: Vec<f64>) -> Vec<StudentPlan> {
        (0..n)
            .map(|i| StudentPlan {
                student_id: format!("s{i:02}"),
                responder: Responder::Ability(AbilityProfile::new(p.clone())),
                activity: Activity::Drawn,
            })
            .collect()
    }

    #[test]
    fn perfect_and_hopeless_students() {
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        for seed in 0..20 {
            let r =
                simulate_session(&Responder::Ability(AbilityProfile::new(vec![1.0])), bank(4, 8), config.clone(), seed)
                    .unwrap();
            assert_eq!(r.raw_grade, 8);
            assert!((r.score - 1.0).abs() < 1e-12);
            let r =
                simulate_session(&Responder::Ability(AbilityProfile::new(vec![0.0])), bank(4, 8), config.clone(), seed)
                    .unwrap();
            assert_eq!(r.raw_grade, 0);
            assert!(r.items.iter().all(|i| i.level == 1));
        }
    }

    #[test]
    fn session_replay_is_deterministic() {
        let config = SessionConfig::adaptive(8, 4, 10.0, true, 0);
        let who = Responder::Ability(AbilityProfile::new(vec![0.8, 0.6, 0.4, 0.2]));
        let a = simulate_session(&who, bank(4, 8), config.clone(), 5).unwrap();
        let b = simulate_session(&who, bank(4, 8), config, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cramming_concentrates_at_the_end() {
        let schedule = window(Shape::Cramming, 21);
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        let run = CohortRun {
            cohort_id: "c",
            window: None,
            test_id: "t",
            bank: bank(4, 8),
            session: &config,
            schedule: &schedule,
            seed: 3,
        };
        let records = simulate_window(&run, &students(10, vec![0.6])).unwrap();
        let cutoff = schedule.end - Duration::days(3);
        let late = records.iter().filter(|r| r.started_at >= cutoff).count();
        assert!(late * 2 > records.len(), "{late} of {}", records.len());
        assert!(records.iter().all(|r| r.started_at >= schedule.start && r.ended_at < schedule.end));
    }

    #[test]
    fn cohort_is_deterministic_under_seed() {
        let schedule = window(Shape::Uniform, 14);
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        let run = CohortRun {
            cohort_id: "c",
            window: None,
            test_id: "t",
            bank: bank(4, 8),
            session: &config,
            schedule: &schedule,
            seed: 9,
        };
        let a = simulate_window(&run, &students(12, vec![0.7, 0.5])).unwrap();
        let b = simulate_window(&run, &students(12, vec![0.7, 0.5])).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn planned_counts_are_exact() {
        let schedule = window(Shape::Continuous, 21);
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        let run = CohortRun {
            cohort_id: "c",
            window: None,
            test_id: "t",
            bank: bank(4, 8),
            session: &config,
            schedule: &schedule,
            seed: 1,
        };
        let plans = vec![
            StudentPlan {
                student_id: "a".into(),
                responder: Responder::UniformGuesser,
                activity: Activity::Planned(vec![3, 1, 9]),
            },
            StudentPlan {
                student_id: "b".into(),
                responder: Responder::UniformGuesser,
                activity: Activity::Planned(vec![12]),
            },
        ];
        let records = simulate_window(&run, &plans).unwrap();
        let m = metrics(&records, FixedOffset::east_opt(0).unwrap());
        assert_eq!(m.per_student["a"].attempts, 13);
        assert_eq!(m.per_student["a"].active_days, 3);
        assert_eq!(m.per_student["b"].attempts, 12);
        assert_eq!(m.per_student["b"].active_days, 1);
    }

    #[test]
    fn reward_spreads_activity() {
        let mut schedule = window(Shape::Uniform, 21);
        schedule.active_days = (1, 2);
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        let run = CohortRun {
            cohort_id: "c",
            window: None,
            test_id: "t",
            bank: bank(4, 8),
            session: &config,
            schedule: &schedule,
            seed: 4,
        };
        let plain = simulate_window(&run, &students(20, vec![0.5])).unwrap();
        let mut rewarded_schedule = schedule.clone();
        rewarded_schedule.reward_response = true;
        let run = CohortRun { schedule: &rewarded_schedule, ..run };
        let rewarded = simulate_window(&run, &students(20, vec![0.5])).unwrap();
        let utc = FixedOffset::east_opt(0).unwrap();
        let days = |r: &[AttemptRecord]| metrics(r, utc).active_days_per_student;
        assert!(days(&rewarded) > days(&plain));
        assert!(metrics(&rewarded, utc).per_student.values().all(|s| s.active_days >= 3));
        let _ = CohortDataset::partition(rewarded);
    }

    #[test]
    fn abandoned_attempts_are_unfinished() {
        let mut schedule = window(Shape::Uniform, 7);
        schedule.abandon_probability = 1.0;
        let config = SessionConfig::adaptive(8, 4, 10.0, false, 0);
        let run = CohortRun {
            cohort_id: "c",
            window: None,
            test_id: "t",
            bank: bank(4, 8),
            session: &config,
            schedule: &schedule,
            seed: 2,
        };
        let records = simulate_window(&run, &students(3, vec![0.5])).unwrap();
        assert!(!records.is_empty());
        assert!(records.iter().all(|r| !r.finished && r.score == -1.0 && r.items.len() < 8));
    }
}
