//! Cohort comparisons: slices attempt datasets by cohort and period, turns
//! them into samples for the chosen metric and runs the statistical
//! decision tree on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use adaptest_stats::{
    compare_groups, compare_proportions, CompareOptions, ComparisonReport, MarkerStyle, ProportionSlice, Sample,
    StatsError,
};
use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{local_day, metrics, AttemptRecord, CohortDataset, Period};

pub const DEFAULT_PASS_MARK: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Metric {
    /// Finished-attempt scores; per-student means when paired.
    Score,
    /// Share of students whose best finished score reaches the pass mark.
    Proportion { pass_mark: f64 },
    /// Distinct active days per student.
    ActiveDays,
    /// Attempts per student, finished or not.
    Attempts,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Score => "score",
            Metric::Proportion { .. } => "proportion",
            Metric::ActiveDays => "active-days",
            Metric::Attempts => "attempts",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "score" => Ok(Metric::Score),
            "proportion" | "pass" => Ok(Metric::Proportion { pass_mark: DEFAULT_PASS_MARK }),
            "active-days" | "active_days" | "days" => Ok(Metric::ActiveDays),
            "attempts" => Ok(Metric::Attempts),
            _ => Err(AnalysisError::Metric(s.to_string())),
        }
    }
}

/// Where a split falls in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPoint {
    Date(NaiveDate),
    /// The same month and day in every year, for comparing a date with its
    /// equivalent in earlier academic years.
    Anniversary {
        month: u32,
        day: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    None,
    /// Two slices per cohort, labelled `before` and `after`.
    At { before: String, after: String, point: SplitPoint },
    /// One slice per named period of each dataset.
    Periods,
}

impl FromStr for Split {
    type Err = AnalysisError;

    /// Accepts `none`, `periods`, a bare date (`2020-03-11` or `03-11`), or
    /// labels followed by a date: `pre/post 2020-03-11`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "" | "none" => return Ok(Split::None),
            "periods" => return Ok(Split::Periods),
            _ => {}
        }
        let bad = || AnalysisError::Split(s.to_string());
        let (labels, date) = match s.rsplit_once(char::is_whitespace) {
            Some((labels, date)) => (labels.trim(), date),
            None => ("pre/post", s),
        };
        let (before, after) = labels.split_once('/').ok_or_else(bad)?;
        if before.is_empty() || after.is_empty() || before == after {
            return Err(bad());
        }
        let point = match NaiveDate::parse_from_str(date, "%Y-%m-%d") {
            Ok(d) => SplitPoint::Date(d),
            Err(_) => {
                let (m, d) = date.split_once('-').ok_or_else(bad)?;
                let (month, day) = (m.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?);
                NaiveDate::from_ymd_opt(2000, month, day).ok_or_else(bad)?;
                SplitPoint::Anniversary { month, day }
            }
        };
        Ok(Split::At { before: before.to_string(), after: after.to_string(), point })
    }
}

impl Split {
    /// Whether `t` falls on or after the split point, judged on the local
    /// calendar day.
    fn is_after(point: &SplitPoint, t: DateTime<Utc>, offset: FixedOffset) -> bool {
        let day = local_day(t, offset);
        match point {
            SplitPoint::Date(d) => day >= *d,
            SplitPoint::Anniversary { month, day: dd } => (day.month(), day.day()) >= (*month, *dd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub alpha: f64,
    /// Pair the two slices of each comparison by student id.
    pub paired: bool,
    pub tz_offset_minutes: i32,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { alpha: 0.05, paired: false, tz_offset_minutes: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("unknown metric `{0}`; expected score, proportion, active-days or attempts")]
    Metric(String),
    #[error("cannot parse split `{0}`; expected none, periods, DATE or LABEL/LABEL DATE")]
    Split(String),
    #[error("comparison needs at least two slices, got {0}")]
    TooFewSlices(usize),
    #[error("slice `{0}` is empty after exclusions")]
    EmptySlice(String),
    #[error("paired comparison: {0}")]
    Paired(String),
    #[error("timezone offset of {0} minutes is out of range")]
    Offset(i32),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub label: String,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metric: Metric,
    pub paired: bool,
    pub reports: Vec<ComparisonReport>,
}

impl AnalysisReport {
    pub fn render_text(&self) -> String {
        self.reports.iter().map(|r| r.render_text()).collect::<Vec<_>>().join("\n")
    }

    /// Pairwise rows of every report under one header.
    pub fn pairwise_csv(&self) -> String {
        let mut out = match self.reports.first() {
            Some(r) => r.pairwise_csv(),
            None => return String::new(),
        };
        for r in &self.reports[1..] {
            r.append_pairwise_rows(&mut out);
        }
        out
    }

    pub fn any_significant(&self) -> bool {
        self.reports.iter().any(|r| r.omnibus_significant || r.pairwise.iter().any(|p| p.significant))
    }
}

/// Compares cohorts on `metric`.
///
/// Without a split, all datasets form one comparison. With a split, each
/// cohort's slices are compared with each other (period markers), and when
/// there are several cohorts each slice name is also compared across them.
pub fn compare_cohorts(
    datasets: &[CohortDataset],
    metric: Metric,
    split: &Split,
    options: &AnalysisOptions,
) -> Result<AnalysisReport, AnalysisError> {
    let offset = FixedOffset::east_opt(options.tz_offset_minutes * 60)
        .ok_or(AnalysisError::Offset(options.tz_offset_minutes))?;
    let mut groups: Vec<(String, Vec<Slice>, MarkerStyle)> = Vec::new();
    match split {
        Split::None => {
            let slices =
                datasets.iter().map(|d| Slice { label: d.cohort_id.clone(), attempts: d.attempts.clone() }).collect();
            groups.push((String::new(), slices, MarkerStyle::Reference));
        }
        _ => {
            let mut by_name: BTreeMap<usize, (String, Vec<Slice>)> = BTreeMap::new();
            for d in datasets {
                let parts = split_dataset(d, split, offset);
                for (i, (name, attempts)) in parts.iter().enumerate() {
                    by_name
                        .entry(i)
                        .or_insert_with(|| (name.clone(), Vec::new()))
                        .1
                        .push(Slice { label: d.cohort_id.clone(), attempts: attempts.clone() });
                }
                let slices = parts
                    .into_iter()
                    .map(|(name, attempts)| Slice { label: format!("{} {name}", d.cohort_id), attempts })
                    .collect();
                groups.push((d.cohort_id.clone(), slices, MarkerStyle::Period));
            }
            if datasets.len() >= 2 {
                for (_, (name, slices)) in by_name {
                    let labelled = slices
                        .into_iter()
                        .map(|s| Slice { label: format!("{} {name}", s.label), attempts: s.attempts })
                        .collect();
                    groups.push((name, labelled, MarkerStyle::Reference));
                }
            }
        }
    }
    let mut reports = Vec::new();
    for (scope, slices, markers) in groups {
        let title = if scope.is_empty() { metric.to_string() } else { format!("{metric}, {scope}") };
        let compare = CompareOptions { title, alpha: options.alpha, paired: options.paired, markers };
        reports.push(compare_slices(&slices, metric, &compare, offset)?);
    }
    Ok(AnalysisReport { metric, paired: options.paired, reports })
}

fn split_dataset(d: &CohortDataset, split: &Split, offset: FixedOffset) -> Vec<(String, Vec<AttemptRecord>)> {
    match split {
        Split::None => vec![(d.cohort_id.clone(), d.attempts.clone())],
        Split::At { before, after, point } => {
            let (post, pre): (Vec<AttemptRecord>, Vec<AttemptRecord>) =
                d.attempts.iter().cloned().partition(|r| Split::is_after(point, r.started_at, offset));
            vec![(before.clone(), pre), (after.clone(), post)]
        }
        Split::Periods => d.periods.iter().map(|p: &Period| (p.name.clone(), in_period(&d.attempts, p))).collect(),
    }
}

fn in_period(attempts: &[AttemptRecord], p: &Period) -> Vec<AttemptRecord> {
    attempts.iter().filter(|r| p.contains(r.started_at)).cloned().collect()
}

/// Runs one comparison over already-built slices.
pub fn compare_slices(
    slices: &[Slice],
    metric: Metric,
    options: &CompareOptions,
    offset: FixedOffset,
) -> Result<ComparisonReport, AnalysisError> {
    if slices.len() < 2 {
        return Err(AnalysisError::TooFewSlices(slices.len()));
    }
    if let Metric::Proportion { pass_mark } = metric {
        if options.paired {
            return Err(AnalysisError::Paired("the proportion metric compares independent slices".into()));
        }
        let props = slices
            .iter()
            .map(|s| {
                let p = pass_counts(&s.attempts, pass_mark);
                if p.n == 0 {
                    return Err(AnalysisError::EmptySlice(s.label.clone()));
                }
                Ok(ProportionSlice { label: s.label.clone(), ..p })
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(compare_proportions(&props, options)?);
    }
    let samples = if options.paired {
        paired_samples(slices, metric, offset)?
    } else {
        slices
            .iter()
            .map(|s| {
                let values = unpaired_values(&s.attempts, metric, offset);
                if values.is_empty() {
                    return Err(AnalysisError::EmptySlice(s.label.clone()));
                }
                Ok(Sample::new(s.label.clone(), values))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(compare_groups(&samples, options)?)
}

/// Students with a finished attempt, and how many of them reached the pass
/// mark with their best score.
pub fn pass_counts(attempts: &[AttemptRecord], pass_mark: f64) -> ProportionSlice {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in attempts.iter().filter(|r| r.finished) {
        let b = best.entry(&r.student_id).or_insert(f64::NEG_INFINITY);
        *b = b.max(r.score);
    }
    ProportionSlice {
        label: String::new(),
        passed: best.values().filter(|&&s| s >= pass_mark).count() as u64,
        n: best.len() as u64,
    }
}

fn unpaired_values(attempts: &[AttemptRecord], metric: Metric, offset: FixedOffset) -> Vec<f64> {
    match metric {
        Metric::Score => attempts.iter().filter(|r| r.finished).map(|r| r.score).collect(),
        _ => per_student(attempts, metric, offset).into_values().collect(),
    }
}

/// One value per student: mean finished score, active days or attempts.
/// Students without a finished attempt have no score entry.
pub fn per_student(attempts: &[AttemptRecord], metric: Metric, offset: FixedOffset) -> BTreeMap<String, f64> {
    let m = metrics(attempts, offset);
    m.per_student
        .into_iter()
        .filter_map(|(id, s)| {
            let v = match metric {
                Metric::ActiveDays => s.active_days as f64,
                Metric::Attempts => s.attempts as f64,
                Metric::Score | Metric::Proportion { .. } => {
                    if s.scores.is_empty() {
                        return None;
                    }
                    s.scores.iter().sum::<f64>() / s.scores.len() as f64
                }
            };
            Some((id, v))
        })
        .collect()
}

/// Aligns two slices by student id. Activity counts a student missing from
/// one slice as zero there; scores keep only students present in both.
pub fn paired_samples(slices: &[Slice], metric: Metric, offset: FixedOffset) -> Result<Vec<Sample>, AnalysisError> {
    if slices.len() != 2 {
        return Err(AnalysisError::Paired(format!("needs exactly two slices, got {}", slices.len())));
    }
    let a = per_student(&slices[0].attempts, metric, offset);
    let b = per_student(&slices[1].attempts, metric, offset);
    let students: BTreeSet<&String> = match metric {
        Metric::Score => a.keys().filter(|k| b.contains_key(*k)).collect(),
        _ => a.keys().chain(b.keys()).collect(),
    };
    if students.is_empty() {
        return Err(AnalysisError::Paired("the slices share no students".into()));
    }
    let column = |m: &BTreeMap<String, f64>| students.iter().map(|s| m.get(*s).copied().unwrap_or(0.0)).collect();
    Ok(vec![Sample::new(slices[0].label.clone(), column(&a)), Sample::new(slices[1].label.clone(), column(&b))])
}
