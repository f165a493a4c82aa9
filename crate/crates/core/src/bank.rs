//! Leveled item banks: document schema, validation and instantiation of
//! parameterized open-answer items.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Decimal places kept for parameters drawn without a granularity step.
pub const FREE_PARAMETER_DECIMALS: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub bank_id: String,
    pub num_levels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub level: u32,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment_ref: Option<String>,
    #[serde(flatten)]
    pub body: ItemBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemBody {
    MultipleAnswer { choice: ChoiceSpec },
    OpenAnswer { parameters: Vec<ParameterSpec>, solution: SolutionProgram },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSpec {
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl ChoiceSpec {
    /// N_R, the number of answer options.
    pub fn n_options(&self) -> usize {
        self.options.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionProgram {
    pub expression: String,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Item {
    pub fn n_options(&self) -> Option<usize> {
        match &self.body {
            ItemBody::MultipleAnswer { choice } => Some(choice.n_options()),
            ItemBody::OpenAnswer { .. } => None,
        }
    }

    pub fn is_open_answer(&self) -> bool {
        matches!(self.body, ItemBody::OpenAnswer { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Issue {
    NumLevels { bank: u32, required: u32 },
    EmptyLevel(u32),
    DuplicateId(String),
    LevelOutOfRange { item_id: String, level: u32, num_levels: u32 },
    Choice { item_id: String, reason: String },
    Parameter { item_id: String, name: String, reason: String },
    Solution { item_id: String, reason: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NumLevels { bank, required } => {
                write!(f, "bank declares {bank} levels, sessions require {required}")
            }
            Issue::EmptyLevel(l) => write!(f, "level {l} has no items"),
            Issue::DuplicateId(id) => write!(f, "duplicate item_id `{id}`"),
            Issue::LevelOutOfRange { item_id, level, num_levels } => {
                write!(f, "item `{item_id}`: level {level} outside 1..={num_levels}")
            }
            Issue::Choice { item_id, reason } => write!(f, "item `{item_id}`: {reason}"),
            Issue::Parameter { item_id, name, reason } => {
                write!(f, "item `{item_id}`, parameter `{name}`: {reason}")
            }
            Issue::Solution { item_id, reason } => {
                write!(f, "item `{item_id}`: solution {reason}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("malformed bank document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid bank:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("item `{item_id}` with {values:?}: {source}")]
pub struct InstantiationError {
    pub item_id: String,
    pub values: BTreeMap<String, f64>,
    pub source: ExprError,
}

/// Parses a bank document and rejects it if any item is malformed.
///
/// Empty levels are tolerated here; [`validate_bank`] reports them for
/// strict-mode use.
pub fn load_bank(source: &[u8]) -> Result<ItemBank, BankError> {
    let bank: ItemBank = serde_json::from_slice(source)?;
    let report = validate_bank(&bank, bank.num_levels);
    let structural: Vec<Issue> = report.issues.into_iter().filter(|i| !matches!(i, Issue::EmptyLevel(_))).collect();
    if structural.is_empty() {
        Ok(bank)
    } else {
        Err(BankError::Invalid(ValidationReport { issues: structural }))
    }
}

pub fn bank_to_json(bank: &ItemBank) -> String {
    serde_json::to_string_pretty(bank).expect("bank serializes")
}

pub fn validate_bank(bank: &ItemBank, required_levels: u32) -> ValidationReport {
    let mut issues = Vec::new();
    if bank.num_levels != required_levels {
        issues.push(Issue::NumLevels { bank: bank.num_levels, required: required_levels });
    }
    let mut seen = HashSet::new();
    for item in &bank.items {
        if !seen.insert(item.item_id.as_str()) {
            issues.push(Issue::DuplicateId(item.item_id.clone()));
        }
        if item.level < 1 || item.level > bank.num_levels {
            issues.push(Issue::LevelOutOfRange {
                item_id: item.item_id.clone(),
                level: item.level,
                num_levels: bank.num_levels,
            });
        }
        validate_body(item, &mut issues);
    }
    for level in 1..=required_levels {
        if !bank.items.iter().any(|i| i.level == level) {
            issues.push(Issue::EmptyLevel(level));
        }
    }
    ValidationReport { issues }
}

fn validate_body(item: &Item, issues: &mut Vec<Issue>) {
    let id = || item.item_id.clone();
    match &item.body {
        ItemBody::MultipleAnswer { choice } => {
            if choice.options.len() < 2 {
                issues.push(Issue::Choice {
                    item_id: id(),
                    reason: format!("needs at least 2 options, has {}", choice.options.len()),
                });
            }
            if choice.correct_index >= choice.options.len() {
                issues.push(Issue::Choice {
                    item_id: id(),
                    reason: format!("correct_index {} out of range", choice.correct_index),
                });
            }
        }
        ItemBody::OpenAnswer { parameters, solution } => {
            if parameters.is_empty() {
                issues.push(Issue::Parameter {
                    item_id: id(),
                    name: String::new(),
                    reason: "open-answer items need at least one parameter".into(),
                });
            }
            let mut names = HashSet::new();
            for p in parameters {
                let mut bad =
                    |reason: String| issues.push(Issue::Parameter { item_id: id(), name: p.name.clone(), reason });
                if !names.insert(p.name.as_str()) {
                    bad("declared twice".into());
                }
                if !p.min.is_finite() || !p.max.is_finite() || p.min > p.max {
                    bad(format!("invalid range [{}, {}]", p.min, p.max));
                }
                if let Some(g) = p.granularity {
                    if !(g > 0.0 && g.is_finite()) {
                        bad(format!("granularity {g} must be positive"));
                    }
                }
            }
            if !(solution.tolerance > 0.0 && solution.tolerance.is_finite()) {
                issues.push(Issue::Solution {
                    item_id: id(),
                    reason: format!("tolerance {} must be positive", solution.tolerance),
                });
            }
            match Expr::parse(&solution.expression) {
                Err(e) => issues.push(Issue::Solution { item_id: id(), reason: e.to_string() }),
                Ok(expr) => {
                    for var in expr.variables() {
                        if !names.contains(var.as_str()) {
                            issues.push(Issue::Solution {
                                item_id: id(),
                                reason: format!("references undeclared variable `{var}`"),
                            });
                        }
                    }
                }
            }
        }
    }
}

impl ItemBank {
    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Number of items on each level `1..=num_levels`.
    pub fn level_counts(&self) -> Vec<usize> {
        (1..=self.num_levels).map(|l| self.items.iter().filter(|i| i.level == l).count()).collect()
    }
}

pub fn eval_solution(program: &SolutionProgram, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
    Expr::parse(&program.expression)?.eval(bindings)
}

/// A concrete draw of an open-answer item.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericInstance {
    pub item_id: String,
    pub values: BTreeMap<String, f64>,
    pub statement: String,
    pub expected: f64,
    pub tolerance: f64,
}

impl NumericInstance {
    pub fn accepts(&self, given: f64) -> bool {
        given.is_finite() && (given - self.expected).abs() <= self.tolerance * self.expected.abs().max(1.0)
    }
}

/// Draws every parameter uniformly (on the granularity grid when one is
/// given) and evaluates the solution program.
pub fn instantiate_numeric_item(item: &Item, seed: u64) -> Result<NumericInstance, InstantiationError> {
    let ItemBody::OpenAnswer { parameters, solution } = &item.body else {
        panic!("instantiate_numeric_item called on multiple-answer item `{}`", item.item_id);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: BTreeMap<String, f64> =
        parameters.iter().map(|p| (p.name.clone(), draw_parameter(p, &mut rng))).collect();
    let bindings: HashMap<String, f64> = values.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let expected = eval_solution(solution, &bindings).map_err(|source| InstantiationError {
        item_id: item.item_id.clone(),
        values: values.clone(),
        source,
    })?;
    Ok(NumericInstance {
        item_id: item.item_id.clone(),
        statement: render_statement(&item.statement, &values),
        values,
        expected,
        tolerance: solution.tolerance,
    })
}

fn draw_parameter(p: &ParameterSpec, rng: &mut ChaCha8Rng) -> f64 {
    if p.min == p.max {
        return p.min;
    }
    match p.granularity {
        Some(step) => {
            let steps = ((p.max - p.min) / step + 1e-9).floor() as u64;
            let k = rng.random_range(0..=steps);
            round_to(p.min + k as f64 * step, decimals_of(step).max(decimals_of(p.min)))
        }
        None => {
            let x = rng.random_range(p.min..=p.max);
            round_to(x, FREE_PARAMETER_DECIMALS).clamp(p.min, p.max)
        }
    }
}

/// Smallest number of decimal places that represents `x` exactly (up to 12).
fn decimals_of(x: f64) -> i32 {
    (0..12)
        .find(|&d| {
            let scaled = x * 10f64.powi(d);
            (scaled - scaled.round()).abs() < 1e-9 * scaled.abs().max(1.0)
        })
        .unwrap_or(12)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// Replaces `{name}` placeholders with parameter values.
pub fn render_statement(template: &str, values: &BTreeMap<String, f64>) -> String {
    let mut out = template.to_string();
    for (name, v) in values {
        out = out.replace(&format!("{{{name}}}"), &format_value(*v));
    }
    out
}

fn format_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
