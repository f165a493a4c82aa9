//! Scenario files: the bank, session settings, cohorts and their schedules,
//! read from TOML and turned into attempt datasets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{load_bank, BankError, ChoiceSpec, Item, ItemBank, ItemBody, ParameterSpec, SolutionProgram};
use crate::engine::{EngineError, PoolPolicy, SessionConfig};
use crate::sim::{
    derive_seed, simulate_window, AbilityProfile, Activity, CohortRun, Responder, ScheduleModel, Shape, StudentPlan,
};
use crate::store::{CohortDataset, DatasetError, Period};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("bank `{path}`: {message}")]
    BankFile { path: PathBuf, message: String },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub bank: BankSource,
    pub session: SessionSettings,
    #[serde(default)]
    pub cohorts: Vec<CohortSpec>,
    #[serde(default)]
    pub population: Option<Population>,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub planned: Vec<PlannedCohort>,
}

/// Exactly one of `path` (relative to the scenario file) or `generated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub generated: Option<GeneratedBank>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedBank {
    pub levels: u32,
    pub items_per_level: usize,
    #[serde(default = "default_options")]
    pub options: usize,
    #[serde(default)]
    pub open_per_level: usize,
}

fn default_options() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSettings {
    pub n_questions: usize,
    pub n_levels: u32,
    #[serde(default = "default_max_grade")]
    pub max_grade: f64,
    #[serde(default)]
    pub guess_correction: bool,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: Option<u64>,
    #[serde(default)]
    pub pool_policy: PoolPolicy,
}

fn default_max_grade() -> f64 {
    10.0
}

fn default_time_limit() -> Option<u64> {
    Some(15 * 60)
}

impl SessionSettings {
    pub fn config(&self) -> SessionConfig {
        let mut c = SessionConfig::adaptive(self.n_questions, self.n_levels, self.max_grade, self.guess_correction, 0);
        c.time_limit_s = self.time_limit_s;
        c.pool_policy = self.pool_policy;
        c
    }
}

/// One component of an ability mixture; students draw a component with
/// probability proportional to `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilityMix {
    pub weight: f64,
    pub p: Vec<f64>,
    #[serde(default)]
    pub numeric_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub cohort_id: String,
    pub test_id: String,
    pub size: usize,
    #[serde(default)]
    pub student_prefix: Option<String>,
    pub abilities: Vec<AbilityMix>,
    pub periods: Vec<PeriodSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub name: String,
    #[serde(flatten)]
    pub schedule: ScheduleModel,
}

/// Students shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub size: usize,
    pub test_id: String,
    #[serde(default = "default_prefix")]
    pub student_prefix: String,
    pub abilities: Vec<AbilityMix>,
}

fn default_prefix() -> String {
    "s".into()
}

/// A stage becomes its own dataset, with the stage name as cohort id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    #[serde(flatten)]
    pub schedule: ScheduleModel,
}

/// A cohort whose per-student attempt counts are fixed in the file, so its
/// activity aggregates are known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedCohort {
    pub cohort_id: String,
    pub test_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub shape: Shape,
    #[serde(default)]
    pub cramming_rate: f64,
    #[serde(default)]
    pub baseline: f64,
    #[serde(default)]
    pub abandon_probability: f64,
    pub abilities: Vec<AbilityMix>,
    pub students: Vec<PlannedStudent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedStudent {
    pub student_id: String,
    /// Attempts on each active day.
    pub attempts: Vec<u32>,
}

impl PlannedCohort {
    fn schedule(&self) -> ScheduleModel {
        ScheduleModel {
            start: self.start,
            end: self.end,
            shape: self.shape,
            cramming_rate: self.cramming_rate,
            baseline: self.baseline,
            active_days: (1, 1),
            attempts_per_day: (1, 1),
            reward_response: false,
            participation: 1.0,
            abandon_probability: self.abandon_probability,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (&self.bank.path, &self.bank.generated) {
            (Some(_), None) => {}
            (None, Some(g)) => {
                if g.levels == 0 || g.items_per_level == 0 {
                    return Err(invalid("bank.generated", "levels and items_per_level must be at least 1"));
                }
                if g.options < 2 {
                    return Err(invalid("bank.generated.options", "at least 2 options are needed"));
                }
            }
            _ => return Err(invalid("bank", "give exactly one of `path` or `generated`")),
        }
        if self.session.n_questions == 0 || self.session.n_levels == 0 {
            return Err(invalid("session", "n_questions and n_levels must be at least 1"));
        }
        if self.cohorts.is_empty() && self.stages.is_empty() && self.planned.is_empty() {
            return Err(invalid("cohorts", "the scenario defines no cohorts, stages or planned cohorts"));
        }
        let mut ids = BTreeSet::new();
        for (i, c) in self.cohorts.iter().enumerate() {
            let at = |f: &str| format!("cohorts[{i}].{f}");
            if c.size == 0 {
                return Err(invalid(at("size"), "cohort size must be at least 1"));
            }
            check_mixture(&c.abilities, &at("abilities"))?;
            if c.periods.is_empty() {
                return Err(invalid(at("periods"), "at least one period is required"));
            }
            for (j, p) in c.periods.iter().enumerate() {
                p.schedule.validate().map_err(|m| invalid(at(&format!("periods[{j}]")), m))?;
            }
            if !ids.insert(c.cohort_id.as_str()) {
                return Err(invalid(at("cohort_id"), format!("duplicate cohort `{}`", c.cohort_id)));
            }
        }
        if !self.stages.is_empty() {
            let pop = self.population.as_ref().ok_or_else(|| invalid("population", "stages need a population"))?;
            if pop.size == 0 {
                return Err(invalid("population.size", "population size must be at least 1"));
            }
            check_mixture(&pop.abilities, "population.abilities")?;
            for (i, s) in self.stages.iter().enumerate() {
                s.schedule.validate().map_err(|m| invalid(format!("stages[{i}]"), m))?;
                for (j, t) in self.stages[..i].iter().enumerate() {
                    if s.schedule.start < t.schedule.end && t.schedule.start < s.schedule.end {
                        return Err(invalid(
                            format!("stages[{i}]"),
                            format!("window overlaps stages[{j}] (`{}`)", t.name),
                        ));
                    }
                }
                if !ids.insert(s.name.as_str()) {
                    return Err(invalid(format!("stages[{i}].name"), format!("duplicate cohort `{}`", s.name)));
                }
            }
        }
        for (i, c) in self.planned.iter().enumerate() {
            let at = |f: &str| format!("planned[{i}].{f}");
            if c.students.is_empty() {
                return Err(invalid(at("students"), "at least one student is required"));
            }
            check_mixture(&c.abilities, &at("abilities"))?;
            let schedule = c.schedule();
            schedule.validate().map_err(|m| invalid(format!("planned[{i}]"), m))?;
            let mut seen = BTreeSet::new();
            for (j, s) in c.students.iter().enumerate() {
                let field = at(&format!("students[{j}]"));
                if !seen.insert(s.student_id.as_str()) {
                    return Err(invalid(field, format!("duplicate student `{}`", s.student_id)));
                }
                if s.attempts.is_empty() || s.attempts.contains(&0) {
                    return Err(invalid(field, "every active day needs at least one attempt"));
                }
                if s.attempts.len() as u32 > schedule.window_days() {
                    return Err(invalid(field, "more active days than the window has"));
                }
            }
            if !ids.insert(c.cohort_id.as_str()) {
                return Err(invalid(at("cohort_id"), format!("duplicate cohort `{}`", c.cohort_id)));
            }
        }
        Ok(())
    }

    /// Loads the referenced bank, resolving relative paths against `base`.
    pub fn load_bank(&self, base: &Path) -> Result<Arc<ItemBank>, ScenarioError> {
        if let Some(g) = &self.bank.generated {
            return Ok(Arc::new(generate_bank(g)));
        }
        let path = base.join(self.bank.path.as_ref().expect("validated"));
        let bytes =
            std::fs::read(&path).map_err(|e| ScenarioError::BankFile { path: path.clone(), message: e.to_string() })?;
        Ok(Arc::new(load_bank(&bytes)?))
    }
}

fn check_mixture(mix: &[AbilityMix], field: &str) -> Result<(), ScenarioError> {
    if mix.is_empty() {
        return Err(invalid(field, "at least one ability component is required"));
    }
    for (i, m) in mix.iter().enumerate() {
        let at = format!("{field}[{i}]");
        if !(m.weight > 0.0 && m.weight.is_finite()) {
            return Err(invalid(at, "weight must be positive"));
        }
        AbilityProfile { p: m.p.clone(), numeric_noise: m.numeric_noise }.validate().map_err(|e| invalid(at, e))?;
    }
    Ok(())
}

fn draw_profile(mix: &[AbilityMix], rng: &mut ChaCha8Rng) -> Responder {
    let total: f64 = mix.iter().map(|m| m.weight).sum();
    let mut u = rng.random::<f64>() * total;
    let chosen = mix
        .iter()
        .find(|m| {
            u -= m.weight;
            u < 0.0
        })
        .unwrap_or(&mix[mix.len() - 1]);
    Responder::Ability(AbilityProfile { p: chosen.p.clone(), numeric_noise: chosen.numeric_noise })
}

/// Assigns abilities to students in order from one seeded stream, so a
/// student keeps the same profile in every period.
fn students(ids: Vec<String>, mix: &[AbilityMix], seed: u64, activity: impl Fn(usize) -> Activity) -> Vec<StudentPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.into_iter()
        .enumerate()
        .map(|(i, student_id)| StudentPlan {
            student_id,
            responder: draw_profile(mix, &mut rng),
            activity: activity(i),
        })
        .collect()
}

fn student_ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:03}")).collect()
}

/// Runs every cohort, stage and planned cohort of the scenario, in file
/// order. `base` resolves a relative bank path.
pub fn simulate_scenario(scenario: &Scenario, base: &Path) -> Result<Vec<CohortDataset>, ScenarioError> {
    scenario.validate()?;
    let bank = scenario.load_bank(base)?;
    let session = scenario.session.config();
    let mut out = Vec::new();
    for (ci, c) in scenario.cohorts.iter().enumerate() {
        let prefix = c.student_prefix.clone().unwrap_or_else(|| format!("{}-s", c.cohort_id));
        let plans =
            students(student_ids(&prefix, c.size), &c.abilities, derive_seed(scenario.seed, 1, ci as u64), |_| {
                Activity::Drawn
            });
        let mut attempts = Vec::new();
        for (pi, p) in c.periods.iter().enumerate() {
            let run = CohortRun {
                cohort_id: &c.cohort_id,
                window: (c.periods.len() > 1).then_some(p.name.as_str()),
                test_id: &c.test_id,
                bank: bank.clone(),
                session: &session,
                schedule: &p.schedule,
                seed: derive_seed(scenario.seed, 2 + ci as u64, pi as u64),
            };
            attempts.extend(simulate_window(&run, &plans)?);
        }
        let periods = c
            .periods
            .iter()
            .map(|p| Period { name: p.name.clone(), start: p.schedule.start, end: p.schedule.end })
            .collect();
        out.push(CohortDataset::new(c.cohort_id.clone(), attempts, periods)?);
    }
    if let Some(pop) = &scenario.population {
        if !scenario.stages.is_empty() {
            out.extend(simulate_stage_scenario(&scenario.stages, pop, bank.clone(), &session, scenario.seed)?);
        }
    }
    for (i, c) in scenario.planned.iter().enumerate() {
        let ids = c.students.iter().map(|s| s.student_id.clone()).collect();
        let plans = students(ids, &c.abilities, derive_seed(scenario.seed, 3, i as u64), |j| {
            Activity::Planned(c.students[j].attempts.clone())
        });
        let schedule = c.schedule();
        let run = CohortRun {
            cohort_id: &c.cohort_id,
            window: None,
            test_id: &c.test_id,
            bank: bank.clone(),
            session: &session,
            schedule: &schedule,
            seed: derive_seed(scenario.seed, 4, i as u64),
        };
        let attempts = simulate_window(&run, &plans)?;
        let period = Period { name: c.cohort_id.clone(), start: c.start, end: c.end };
        out.push(CohortDataset::new(c.cohort_id.clone(), attempts, vec![period])?);
    }
    Ok(out)
}

/// One dataset per stage, all drawn from the same students so that
/// activity can be paired by student id across stages.
pub fn simulate_stage_scenario(
    stages: &[StageSpec],
    population: &Population,
    bank: Arc<ItemBank>,
    session: &SessionConfig,
    seed: u64,
) -> Result<Vec<CohortDataset>, ScenarioError> {
    if stages.is_empty() {
        return Err(invalid("stages", "at least one stage is required"));
    }
    for (i, s) in stages.iter().enumerate() {
        for (j, t) in stages[..i].iter().enumerate() {
            if s.schedule.start < t.schedule.end && t.schedule.start < s.schedule.end {
                return Err(invalid(format!("stages[{i}]"), format!("window overlaps stages[{j}]")));
            }
        }
    }
    let ids = student_ids(&population.student_prefix, population.size);
    let plans = students(ids, &population.abilities, derive_seed(seed, 5, 0), |_| Activity::Drawn);
    stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let run = CohortRun {
                cohort_id: &s.name,
                window: None,
                test_id: &population.test_id,
                bank: bank.clone(),
                session,
                schedule: &s.schedule,
                seed: derive_seed(seed, 6, i as u64),
            };
            let attempts = simulate_window(&run, &plans)?;
            let period = Period { name: s.name.clone(), start: s.schedule.start, end: s.schedule.end };
            Ok(CohortDataset::new(s.name.clone(), attempts, vec![period])?)
        })
        .collect()
}

/// A synthetic bank: multiple-answer items with rotating keys and, if asked,
/// parameterized arithmetic items on every level.
pub fn generate_bank(g: &GeneratedBank) -> ItemBank {
    let mut items = Vec::new();
    for level in 1..=g.levels {
        for i in 1..=g.items_per_level {
            let options = (0..g.options).map(|o| format!("option {}", (b'A' + o as u8) as char)).collect();
            items.push(Item {
                item_id: format!("L{level}-MA{i:02}"),
                level,
                statement: format!("Level {level}, question {i}."),
                attachment_ref: None,
                body: ItemBody::MultipleAnswer {
                    choice: ChoiceSpec { options, correct_index: (level as usize * 3 + i * 5) % g.options },
                },
            });
        }
        for i in 1..=g.open_per_level {
            items.push(Item {
                item_id: format!("L{level}-OA{i:02}"),
                level,
                statement: format!("Compute {{a}} * {{b}} + {level}."),
                attachment_ref: None,
                body: ItemBody::OpenAnswer {
                    parameters: vec![
                        ParameterSpec { name: "a".into(), min: 2.0, max: 9.0, granularity: Some(1.0) },
                        ParameterSpec { name: "b".into(), min: 1.0, max: 5.0, granularity: Some(0.5) },
                    ],
                    solution: SolutionProgram { expression: format!("a * b + {level}"), tolerance: 1e-3 },
                },
            });
        }
    }
    ItemBank {
        bank_id: format!("generated-{}x{}", g.levels, g.items_per_level + g.open_per_level),
        num_levels: g.levels,
        title: Some("Generated bank".into()),
        version: None,
        items,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::validate_bank;
    use crate::store::{metrics, Query};
    use chrono::FixedOffset;

    const SMALL: &str = r#"
name = "small"
seed = 11

[bank.generated]
levels = 3
items_per_level = 6
open_per_level = 2

[session]
n_questions = 6
n_levels = 3

[[cohorts]]
cohort_id = "c1"
test_id = "t"
size = 8
abilities = [{ weight = 1, p = [0.8, 0.5, 0.3] }]

[[cohorts.periods]]
name = "term"
start = "2019-02-01T00:00:00Z"
end = "2019-03-01T00:00:00Z"
shape = "uniform"
active_days = [1, 4]
attempts_per_day = [1, 2]
"#;

    const STAGES: &str = r#"
name = "stages"
seed = 5

[bank.generated]
levels = 3
items_per_level = 6

[session]
n_questions = 6
n_levels = 3

[population]
size = 15
test_id = "t"
abilities = [{ weight = 1, p = [0.7, 0.5, 0.3] }]

[[stages]]
name = "stage-1"
start = "2018-01-10T00:00:00Z"
end = "2018-01-11T00:00:00Z"
shape = "uniform"
active_days = [1, 1]
attempts_per_day = [1, 3]

[[stages]]
name = "stage-2"
start = "2018-03-01T00:00:00Z"
end = "2018-03-22T00:00:00Z"
shape = "cramming"
cramming_rate = 0.4
active_days = [1, 3]
attempts_per_day = [1, 4]

[[stages]]
name = "stage-3"
start = "2018-05-01T00:00:00Z"
end = "2018-05-22T00:00:00Z"
shape = "cramming"
cramming_rate = 0.4
active_days = [1, 3]
attempts_per_day = [1, 4]
reward_response = true
"#;

    #[test]
    fn generated_bank_is_valid() {
        let bank = generate_bank(&GeneratedBank { levels: 4, items_per_level: 8, options: 4, open_per_level: 2 });
        assert!(validate_bank(&bank, 4).is_clean());
        assert_eq!(bank.level_counts(), vec![10; 4]);
    }

    #[test]
    fn small_scenario_runs() {
        let s = Scenario::from_toml(SMALL).unwrap();
        let data = simulate_scenario(&s, Path::new(".")).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].periods.len(), 1);
        let students: BTreeSet<_> = data[0].attempts.iter().map(|r| r.student_id.as_str()).collect();
        assert_eq!(students.len(), 8);
        assert!(data[0].attempts.iter().all(|r| data[0].periods[0].contains(r.started_at)));
        assert_eq!(data, simulate_scenario(&s, Path::new(".")).unwrap());
    }

    #[test]
    fn stages_share_students_and_respect_windows() {
        let s = Scenario::from_toml(STAGES).unwrap();
        let data = simulate_scenario(&s, Path::new(".")).unwrap();
        let names: Vec<_> = data.iter().map(|d| d.cohort_id.as_str()).collect();
        assert_eq!(names, ["stage-1", "stage-2", "stage-3"]);
        let utc = FixedOffset::east_opt(0).unwrap();
        let day1: BTreeSet<_> = data[0].attempts.iter().map(|r| r.started_at.date_naive()).collect();
        assert_eq!(day1.len(), 1);
        let m2 = metrics(&data[1].attempts, utc);
        let m3 = metrics(&data[2].attempts, utc);
        assert!(m3.active_days_per_student > m2.active_days_per_student);
        assert_eq!(m2.per_student.keys().collect::<Vec<_>>(), m3.per_student.keys().collect::<Vec<_>>());
        let q = Query { cohort: Some("stage-3".into()), ..Query::default() };
        assert_eq!(crate::store::query(&data, &q).unwrap().attempts.len(), data[2].attempts.len());
    }

    #[test]
    fn errors_name_the_field() {
        let err = Scenario::from_toml(&SMALL.replace("size = 8", "size = 0")).unwrap_err();
        assert!(err.to_string().contains("cohorts[0].size"), "{err}");
        let err = Scenario::from_toml(&SMALL.replace("size = 8\n", "")).unwrap_err();
        assert!(err.to_string().contains("size"), "{err}");
        let err = Scenario::from_toml(&SMALL.replace("seed = 11", "seed = 11\nsede = 3")).unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
        let err = Scenario::from_toml(&SMALL.replace("p = [0.8", "p = [1.8")).unwrap_err();
        assert!(err.to_string().contains("cohorts[0].abilities[0]"), "{err}");
        let overlapping = STAGES.replace("2018-03-01T00", "2018-01-10T12");
        let err = Scenario::from_toml(&overlapping).unwrap_err();
        assert!(err.to_string().contains("stages[1]") && err.to_string().contains("overlaps"), "{err}");
    }

    #[test]
    fn planned_cohort_counts() {
        let text = format!(
            "{}\n{}",
            SMALL.split("[[cohorts]]").next().unwrap(),
            r#"
[[planned]]
cohort_id = "p"
test_id = "t"
start = "2019-04-01T00:00:00Z"
end = "2019-04-22T00:00:00Z"
shape = "continuous"
abilities = [{ weight = 1, p = [0.6, 0.4, 0.2] }]
students = [
  { student_id = "x", attempts = [2, 5] },
  { student_id = "y", attempts = [1, 1, 1, 1] },
]
"#
        );
        let s = Scenario::from_toml(&text).unwrap();
        let data = simulate_scenario(&s, Path::new(".")).unwrap();
        let m = metrics(&data[0].attempts, FixedOffset::east_opt(0).unwrap());
        assert_eq!(m.attempts, 11);
        assert_eq!(m.per_student["x"].active_days, 2);
        assert_eq!(m.per_student["y"].active_days, 4);
    }
}
