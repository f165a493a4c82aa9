//! Attempt records, the append-only attempt log, CSV exchange and the
//! activity/score queries the analyses are built on.
//!
//! Unfinished attempts carry the score −1. Score aggregates skip them;
//! activity aggregates (attempt counts, active days) include them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, FixedOffset, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SessionResult;

pub const UNFINISHED_SCORE: f64 = -1.0;

/// Decimal places kept for stored grades. Summing weights like 1/18 leaves
/// residues in the last bits, and equal grades must compare equal when
/// ranked.
pub const GRADE_DECIMALS: i32 = 9;

pub fn round_grade(x: f64) -> f64 {
    let f = 10f64.powi(GRADE_DECIMALS);
    (x * f).round() / f
}

pub const SUMMARY_HEADER: [&str; 8] =
    ["attempt_id", "student_id", "cohort_id", "test_id", "started_at", "ended_at", "finished", "score"];
pub const DETAIL_HEADER: [&str; 7] = ["attempt_id", "k", "item_id", "level", "phi_binary", "phi_scoring", "elapsed_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub k: usize,
    pub item_id: String,
    pub level: u32,
    pub phi_binary: f64,
    pub phi_scoring: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_id: String,
    pub student_id: String,
    pub cohort_id: String,
    pub test_id: String,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub finished: bool,
    /// Final grade, or −1 when unfinished.
    pub score: f64,
    pub items: Vec<ItemRow>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("attempt `{0}`: ended_at precedes started_at")]
    EndsBeforeStart(String),
    #[error("attempt `{id}`: finished attempts need a score >= 0, got {score}")]
    FinishedScore { id: String, score: f64 },
    #[error("attempt `{id}`: unfinished attempts must carry score -1, got {score}")]
    UnfinishedScore { id: String, score: f64 },
    #[error("attempt `{0}`: item rows must be numbered 1, 2, ... in order")]
    ItemOrder(String),
    #[error("attempt record has an empty `{0}`")]
    EmptyField(&'static str),
}

impl AttemptRecord {
    pub fn from_session(
        result: &SessionResult,
        student_id: impl Into<String>,
        cohort_id: impl Into<String>,
        test_id: impl Into<String>,
    ) -> AttemptRecord {
        AttemptRecord {
            attempt_id: result.session_id.clone(),
            student_id: student_id.into(),
            cohort_id: cohort_id.into(),
            test_id: test_id.into(),
            started_at: result.started_at,
            ended_at: result.ended_at,
            finished: result.finished,
            score: if result.finished { round_grade(result.exported_score()) } else { UNFINISHED_SCORE },
            items: result
                .items
                .iter()
                .map(|i| ItemRow {
                    k: i.k,
                    item_id: i.item_id.clone(),
                    level: i.level,
                    phi_binary: i.phi_binary,
                    phi_scoring: i.phi_scoring,
                    elapsed_s: i.elapsed_s,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        for (name, value) in [
            ("attempt_id", &self.attempt_id),
            ("student_id", &self.student_id),
            ("cohort_id", &self.cohort_id),
            ("test_id", &self.test_id),
        ] {
            if value.is_empty() {
                return Err(RecordError::EmptyField(name));
            }
        }
        let id = || self.attempt_id.clone();
        if self.ended_at < self.started_at {
            return Err(RecordError::EndsBeforeStart(id()));
        }
        if self.finished && !(self.score >= 0.0 && self.score.is_finite()) {
            return Err(RecordError::FinishedScore { id: id(), score: self.score });
        }
        if !self.finished && self.score != UNFINISHED_SCORE {
            return Err(RecordError::UnfinishedScore { id: id(), score: self.score });
        }
        if self.items.iter().enumerate().any(|(i, row)| row.k != i + 1) {
            return Err(RecordError::ItemOrder(id()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("attempt `{0}` already stored with a different payload")]
    Conflict(String),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("attempt log I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Appended {
    Stored,
    /// The identical record was already present.
    AlreadyPresent,
}

#[derive(Debug, Default)]
struct Log {
    records: Vec<AttemptRecord>,
    index: HashMap<String, usize>,
    file: Option<File>,
}

/// Append-only attempt log, optionally backed by a JSON-lines file.
///
/// Appends are serialized behind a write lock; readers get consistent
/// snapshots.
#[derive(Debug, Default)]
pub struct AttemptStore {
    log: RwLock<Log>,
}

impl AttemptStore {
    pub fn in_memory() -> AttemptStore {
        AttemptStore::default()
    }

    /// Opens (or creates) a JSON-lines log and replays its records.
    pub fn open(path: impl AsRef<Path>) -> Result<AttemptStore, StoreError> {
        let path = path.as_ref();
        let mut log = Log::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |message: String| StoreError::Corrupt { path: path.to_path_buf(), line: i + 1, message };
                let record: AttemptRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                record.validate().map_err(|e| corrupt(e.to_string()))?;
                if log.index.contains_key(&record.attempt_id) {
                    return Err(corrupt(format!("duplicate attempt `{}`", record.attempt_id)));
                }
                log.index.insert(record.attempt_id.clone(), log.records.len());
                log.records.push(record);
            }
        }
        log.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(AttemptStore { log: RwLock::new(log) })
    }

    /// Stores a record; re-appending an identical record is a no-op.
    pub fn append(&self, record: AttemptRecord) -> Result<Appended, StoreError> {
        record.validate()?;
        let mut log = self.log.write().expect("attempt log lock poisoned");
        if let Some(&i) = log.index.get(&record.attempt_id) {
            return if log.records[i] == record {
                Ok(Appended::AlreadyPresent)
            } else {
                Err(StoreError::Conflict(record.attempt_id))
            };
        }
        if let Some(file) = log.file.as_mut() {
            let mut line = serde_json::to_string(&record).expect("records serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        let at = log.records.len();
        log.index.insert(record.attempt_id.clone(), at);
        log.records.push(record);
        Ok(Appended::Stored)
    }

    pub fn get(&self, attempt_id: &str) -> Option<AttemptRecord> {
        let log = self.log.read().expect("attempt log lock poisoned");
        log.index.get(attempt_id).map(|&i| log.records[i].clone())
    }

    pub fn len(&self) -> usize {
        self.log.read().expect("attempt log lock poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all records in append order.
    pub fn records(&self) -> Vec<AttemptRecord> {
        self.log.read().expect("attempt log lock poisoned").records.clone()
    }

    pub fn cohort_ids(&self) -> BTreeSet<String> {
        let log = self.log.read().expect("attempt log lock poisoned");
        log.records.iter().map(|r| r.cohort_id.clone()).collect()
    }
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn number(x: f64) -> String {
    format!("{x}")
}

/// Chronological order: start time, then attempt id.
pub fn sort_chronologically(records: &mut [AttemptRecord]) {
    records.sort_by(|a, b| a.started_at.cmp(&b.started_at).then_with(|| a.attempt_id.cmp(&b.attempt_id)));
}

/// Summary and detail CSV files for `records`, in chronological order.
pub fn export_csv(records: &[AttemptRecord]) -> (String, String) {
    let mut sorted = records.to_vec();
    sort_chronologically(&mut sorted);
    let mut summary = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut detail = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    summary.write_record(SUMMARY_HEADER).expect("in-memory write");
    detail.write_record(DETAIL_HEADER).expect("in-memory write");
    for r in &sorted {
        summary
            .write_record([
                r.attempt_id.clone(),
                r.student_id.clone(),
                r.cohort_id.clone(),
                r.test_id.clone(),
                timestamp(&r.started_at),
                timestamp(&r.ended_at),
                r.finished.to_string(),
                number(r.score),
            ])
            .expect("in-memory write");
        for row in &r.items {
            detail
                .write_record([
                    r.attempt_id.clone(),
                    row.k.to_string(),
                    row.item_id.clone(),
                    row.level.to_string(),
                    number(row.phi_binary),
                    number(row.phi_scoring),
                    number(row.elapsed_s),
                ])
                .expect("in-memory write");
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    (finish(summary), finish(detail))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowProblem {
    pub file: &'static str,
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", render_problems(.0))]
pub struct ImportError(pub Vec<RowProblem>);

fn render_problems(problems: &[RowProblem]) -> String {
    problems.iter().map(|p| format!("{} line {}: {}", p.file, p.line, p.message)).collect::<Vec<_>>().join("\n")
}

fn check_header(file: &'static str, reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), RowProblem> {
    let header = reader.headers().map_err(|e| RowProblem { file, line: 1, message: e.to_string() })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(RowProblem {
            file,
            line: 1,
            message: format!(
                "expected columns {}, found {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = row.get(i).ok_or_else(|| format!("missing column `{name}`"))?;
    raw.parse().map_err(|e| format!("column `{name}`: cannot parse `{raw}`: {e}"))
}

fn parse_time(row: &csv::StringRecord, i: usize, name: &str) -> Result<DateTime<Utc>, String> {
    let raw = row.get(i).ok_or_else(|| format!("missing column `{name}`"))?;
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("column `{name}`: bad timestamp `{raw}`: {e}"))
}

/// Reads the summary and detail files back into records. Every bad row is
/// reported with its line number.
pub fn import_csv(summary: &[u8], detail: &[u8]) -> Result<Vec<AttemptRecord>, ImportError> {
    let mut problems = Vec::new();
    let mut records: Vec<AttemptRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    let mut reader = csv::ReaderBuilder::new().from_reader(summary);
    if let Err(p) = check_header("summary", &mut reader, &SUMMARY_HEADER) {
        return Err(ImportError(vec![p]));
    }
    for row in reader.records() {
        let line = row.as_ref().ok().and_then(|r| r.position()).map_or(0, |p| p.line());
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            Ok(AttemptRecord {
                attempt_id: parse_field(&row, 0, "attempt_id")?,
                student_id: parse_field(&row, 1, "student_id")?,
                cohort_id: parse_field(&row, 2, "cohort_id")?,
                test_id: parse_field(&row, 3, "test_id")?,
                started_at: parse_time(&row, 4, "started_at")?,
                ended_at: parse_time(&row, 5, "ended_at")?,
                finished: parse_field(&row, 6, "finished")?,
                score: parse_field(&row, 7, "score")?,
                items: Vec::new(),
            })
        });
        match parsed {
            Ok(r) if index.contains_key(&r.attempt_id) => problems.push(RowProblem {
                file: "summary",
                line,
                message: format!("duplicate attempt `{}`", r.attempt_id),
            }),
            Ok(r) => {
                index.insert(r.attempt_id.clone(), records.len());
                records.push(r);
            }
            Err(message) => problems.push(RowProblem { file: "summary", line, message }),
        }
    }

    let mut reader = csv::ReaderBuilder::new().from_reader(detail);
    if let Err(p) = check_header("detail", &mut reader, &DETAIL_HEADER) {
        problems.push(p);
        return Err(ImportError(problems));
    }
    for row in reader.records() {
        let line = row.as_ref().ok().and_then(|r| r.position()).map_or(0, |p| p.line());
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            let attempt_id: String = parse_field(&row, 0, "attempt_id")?;
            let item = ItemRow {
                k: parse_field(&row, 1, "k")?,
                item_id: parse_field(&row, 2, "item_id")?,
                level: parse_field(&row, 3, "level")?,
                phi_binary: parse_field(&row, 4, "phi_binary")?,
                phi_scoring: parse_field(&row, 5, "phi_scoring")?,
                elapsed_s: parse_field(&row, 6, "elapsed_s")?,
            };
            let &i = index.get(&attempt_id).ok_or_else(|| format!("attempt `{attempt_id}` not in the summary file"))?;
            Ok((i, item))
        });
        match parsed {
            Ok((i, item)) => records[i].items.push(item),
            Err(message) => problems.push(RowProblem { file: "detail", line, message }),
        }
    }

    for r in &mut records {
        r.items.sort_by_key(|row| row.k);
        if let Err(e) = r.validate() {
            problems.push(RowProblem { file: "summary", line: 0, message: e.to_string() });
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(ImportError(problems))
    }
}

/// A named time window `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("period `{0}` is empty or reversed")]
    EmptyPeriod(String),
    #[error("periods `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("attempt `{attempt}` belongs to cohort `{found}`, not `{expected}`")]
    WrongCohort { attempt: String, found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    pub cohort_id: String,
    pub attempts: Vec<AttemptRecord>,
    pub periods: Vec<Period>,
}

impl CohortDataset {
    pub fn new(
        cohort_id: impl Into<String>,
        attempts: Vec<AttemptRecord>,
        periods: Vec<Period>,
    ) -> Result<Self, DatasetError> {
        let cohort_id = cohort_id.into();
        if let Some(r) = attempts.iter().find(|r| r.cohort_id != cohort_id) {
            return Err(DatasetError::WrongCohort {
                attempt: r.attempt_id.clone(),
                found: r.cohort_id.clone(),
                expected: cohort_id,
            });
        }
        for (i, p) in periods.iter().enumerate() {
            if p.end <= p.start {
                return Err(DatasetError::EmptyPeriod(p.name.clone()));
            }
            for q in &periods[..i] {
                if p.start < q.end && q.start < p.end {
                    return Err(DatasetError::Overlap(q.name.clone(), p.name.clone()));
                }
            }
        }
        Ok(CohortDataset { cohort_id, attempts, periods })
    }

    /// Splits `records` into one dataset per cohort, ordered by cohort id.
    pub fn partition(records: Vec<AttemptRecord>) -> Vec<CohortDataset> {
        let mut by: BTreeMap<String, Vec<AttemptRecord>> = BTreeMap::new();
        for r in records {
            by.entry(r.cohort_id.clone()).or_default().push(r);
        }
        by.into_iter().map(|(cohort_id, attempts)| CohortDataset { cohort_id, attempts, periods: Vec::new() }).collect()
    }

    pub fn period(&self, name: &str) -> Option<&Period> {
        self.periods.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub cohort: Option<String>,
    pub period: Option<String>,
    pub finished_only: bool,
    /// Inclusive score bounds.
    pub score_range: Option<(f64, f64)>,
    /// Offset of the local calendar day from UTC, in minutes.
    pub tz_offset_minutes: i32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("unknown cohort `{0}`")]
    UnknownCohort(String),
    #[error("cohort `{cohort}` has no period `{period}`")]
    UnknownPeriod { cohort: String, period: String },
    #[error("timezone offset of {0} minutes is out of range")]
    Offset(i32),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudentActivity {
    pub attempts: usize,
    pub active_days: usize,
    /// Finished-attempt scores only.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub attempts: usize,
    pub finished: usize,
    pub students: usize,
    pub attempts_per_student: f64,
    pub active_days_per_student: f64,
    pub per_day: BTreeMap<NaiveDate, usize>,
    pub per_student: BTreeMap<String, StudentActivity>,
    /// Scores of finished attempts; unfinished attempts never enter.
    pub scores: Vec<f64>,
}

impl Metrics {
    pub fn mean_score(&self) -> Option<f64> {
        (!self.scores.is_empty()).then(|| self.scores.iter().sum::<f64>() / self.scores.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub attempts: Vec<AttemptRecord>,
    pub metrics: Metrics,
}

/// Filters attempts across `datasets` and computes activity and score
/// metrics over the matches.
pub fn query(datasets: &[CohortDataset], q: &Query) -> Result<QueryResult, QueryError> {
    let offset = FixedOffset::east_opt(q.tz_offset_minutes * 60).ok_or(QueryError::Offset(q.tz_offset_minutes))?;
    let selected: Vec<&CohortDataset> = match &q.cohort {
        Some(c) => {
            let found: Vec<&CohortDataset> = datasets.iter().filter(|d| &d.cohort_id == c).collect();
            if found.is_empty() {
                return Err(QueryError::UnknownCohort(c.clone()));
            }
            found
        }
        None => datasets.iter().collect(),
    };
    let mut attempts = Vec::new();
    for d in selected {
        let period = match &q.period {
            Some(name) => Some(
                d.period(name)
                    .ok_or_else(|| QueryError::UnknownPeriod { cohort: d.cohort_id.clone(), period: name.clone() })?,
            ),
            None => None,
        };
        attempts.extend(
            d.attempts
                .iter()
                .filter(|r| period.is_none_or(|p| p.contains(r.started_at)))
                .filter(|r| !q.finished_only || r.finished)
                .filter(|r| q.score_range.is_none_or(|(lo, hi)| lo <= r.score && r.score <= hi))
                .cloned(),
        );
    }
    sort_chronologically(&mut attempts);
    let metrics = metrics(&attempts, offset);
    Ok(QueryResult { attempts, metrics })
}

pub fn local_day(t: DateTime<Utc>, offset: FixedOffset) -> NaiveDate {
    t.with_timezone(&offset).date_naive()
}

pub fn metrics(attempts: &[AttemptRecord], offset: FixedOffset) -> Metrics {
    let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut days: BTreeMap<&str, BTreeSet<NaiveDate>> = BTreeMap::new();
    let mut per_student: BTreeMap<String, StudentActivity> = BTreeMap::new();
    let mut scores = Vec::new();
    for r in attempts {
        let day = local_day(r.started_at, offset);
        *per_day.entry(day).or_default() += 1;
        days.entry(&r.student_id).or_default().insert(day);
        let s = per_student.entry(r.student_id.clone()).or_default();
        s.attempts += 1;
        if r.finished {
            s.scores.push(r.score);
            scores.push(r.score);
        }
    }
    for (student, set) in &days {
        per_student.get_mut(*student).expect("same keys").active_days = set.len();
    }
    let students = per_student.len();
    let total_days: usize = per_student.values().map(|s| s.active_days).sum();
    let ratio = |x: usize| if students == 0 { 0.0 } else { x as f64 / students as f64 };
    Metrics {
        attempts: attempts.len(),
        finished: attempts.iter().filter(|r| r.finished).count(),
        students,
        attempts_per_student: ratio(attempts.len()),
        active_days_per_student: ratio(total_days),
        per_day,
        per_student,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn at(day: u32, h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 3, day, h, m, 0).unwrap()
    }

    fn record(id: &str, student: &str, start: DateTime<Utc>, score: Option<f64>) -> AttemptRecord {
        AttemptRecord {
            attempt_id: id.into(),
            student_id: student.into(),
            cohort_id: "2019-2020".into(),
            test_id: "t".into(),
            started_at: start,
            ended_at: start + Duration::seconds(300),
            finished: score.is_some(),
            score: score.unwrap_or(UNFINISHED_SCORE),
            items: vec![ItemRow {
                k: 1,
                item_id: "q1".into(),
                level: 1,
                phi_binary: 1.0,
                phi_scoring: 1.0,
                elapsed_s: 12.5,
            }],
        }
    }

    #[test]
    fn record_invariants() {
        assert!(record("a", "s", at(1, 9, 0), Some(7.5)).validate().is_ok());
        let mut bad = record("a", "s", at(1, 9, 0), None);
        bad.score = 3.0;
        assert!(matches!(bad.validate(), Err(RecordError::UnfinishedScore { .. })));
        let mut bad = record("a", "s", at(1, 9, 0), Some(1.0));
        bad.score = -1.0;
        assert!(matches!(bad.validate(), Err(RecordError::FinishedScore { .. })));
        let mut bad = record("a", "s", at(1, 9, 0), Some(1.0));
        bad.ended_at = at(1, 8, 0);
        assert!(matches!(bad.validate(), Err(RecordError::EndsBeforeStart(_))));
    }

    #[test]
    fn append_is_idempotent() {
        let store = AttemptStore::in_memory();
        let r = record("a", "s", at(1, 9, 0), Some(7.5));
        assert_eq!(store.append(r.clone()).unwrap(), Appended::Stored);
        assert_eq!(store.append(r.clone()).unwrap(), Appended::AlreadyPresent);
        let mut changed = r;
        changed.score = 5.0;
        assert!(matches!(store.append(changed), Err(StoreError::Conflict(_))));
        assert_eq!(store.len(), 1);
        assert!(matches!(
            store.append(AttemptRecord { score: 3.0, ..record("b", "s", at(1, 9, 0), None) }),
            Err(StoreError::Record(_))
        ));
    }

    #[test]
    fn file_log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attempts.jsonl");
        {
            let store = AttemptStore::open(&path).unwrap();
            store.append(record("a", "s", at(1, 9, 0), Some(7.5))).unwrap();
            store.append(record("b", "s", at(2, 9, 0), None)).unwrap();
        }
        let store = AttemptStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("b").unwrap().score, -1.0);
    }

    #[test]
    fn empty_export_is_header_only() {
        let (s, d) = export_csv(&[]);
        assert_eq!(s, "attempt_id,student_id,cohort_id,test_id,started_at,ended_at,finished,score\n");
        assert_eq!(d, "attempt_id,k,item_id,level,phi_binary,phi_scoring,elapsed_s\n");
    }

    #[test]
    fn export_rows_and_round_trip() {
        let records = vec![record("late", "s2", at(3, 9, 0), None), record("early", "s1", at(1, 9, 0), Some(7.5))];
        let (s, d) = export_csv(&records);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "early,s1,2019-2020,t,2020-03-01T09:00:00Z,2020-03-01T09:05:00Z,true,7.5");
        assert!(lines[2].ends_with(",false,-1"));
        assert_eq!(d.lines().nth(1).unwrap(), "early,1,q1,1,1,1,12.5");

        let back = import_csv(s.as_bytes(), d.as_bytes()).unwrap();
        let mut expected = records;
        sort_chronologically(&mut expected);
        assert_eq!(back, expected);
        assert_eq!(export_csv(&back), (s, d));
    }

    #[test]
    fn import_reports_line_numbers() {
        let summary = "attempt_id,student_id,cohort_id,test_id,started_at,ended_at,finished,score\n\
                       a,s,c,t,2020-03-01T09:00:00Z,2020-03-01T09:05:00Z,true,5\n\
                       b,s,c,t,yesterday,2020-03-01T09:05:00Z,true,5\n\
                       c,s,c,t,2020-03-01T09:00:00Z,2020-03-01T09:05:00Z,maybe,5\n";
        let detail = "attempt_id,k,item_id,level,phi_binary,phi_scoring,elapsed_s\nzz,1,q,1,1,1,3\n";
        let err = import_csv(summary.as_bytes(), detail.as_bytes()).unwrap_err();
        let lines: Vec<(&str, u64)> = err.0.iter().map(|p| (p.file, p.line)).collect();
        assert_eq!(lines, vec![("summary", 3), ("summary", 4), ("detail", 2)]);
        assert!(err.to_string().contains("bad timestamp"));

        let wrong_header = "id,student\n";
        assert!(import_csv(wrong_header.as_bytes(), detail.as_bytes()).is_err());
    }

    #[test]
    fn activity_metrics() {
        let d = CohortDataset::partition(vec![
            record("1", "s1", at(1, 9, 0), Some(5.0)),
            record("2", "s1", at(1, 10, 0), Some(7.5)),
            record("3", "s1", at(1, 11, 0), None),
        ]);
        let r = query(&d, &Query::default()).unwrap();
        assert_eq!(r.metrics.attempts_per_student, 3.0);
        assert_eq!(r.metrics.active_days_per_student, 1.0);
        assert_eq!(r.metrics.scores, vec![5.0, 7.5]);
        assert_eq!(r.metrics.mean_score(), Some(6.25));
    }

    #[test]
    fn day_boundary() {
        let d = CohortDataset::partition(vec![
            record("1", "s1", at(1, 23, 59), Some(5.0)),
            record("2", "s1", at(2, 0, 1), Some(5.0)),
        ]);
        let utc = query(&d, &Query::default()).unwrap();
        assert_eq!(utc.metrics.active_days_per_student, 2.0);
        let shifted = query(&d, &Query { tz_offset_minutes: 60, ..Query::default() }).unwrap();
        assert_eq!(shifted.metrics.active_days_per_student, 1.0);
    }

    #[test]
    fn filters_and_periods() {
        let attempts = vec![
            record("1", "s1", at(5, 9, 0), Some(5.0)),
            record("2", "s2", at(12, 9, 0), None),
            record("3", "s2", at(13, 9, 0), Some(9.0)),
        ];
        let split = at(11, 0, 0);
        let periods = vec![
            Period { name: "pre".into(), start: at(1, 0, 0), end: split },
            Period { name: "post".into(), start: split, end: at(31, 0, 0) },
        ];
        let d = vec![CohortDataset::new("2019-2020", attempts, periods).unwrap()];
        let post = query(&d, &Query { period: Some("post".into()), ..Query::default() }).unwrap();
        assert_eq!(post.attempts.len(), 2);
        assert_eq!(post.metrics.scores, vec![9.0]);
        let finished = query(&d, &Query { finished_only: true, ..Query::default() }).unwrap();
        assert_eq!(finished.attempts.len(), 2);
        let range = query(&d, &Query { score_range: Some((6.0, 10.0)), ..Query::default() }).unwrap();
        assert_eq!(range.attempts.len(), 1);
        assert!(matches!(
            query(&d, &Query { cohort: Some("x".into()), ..Query::default() }),
            Err(QueryError::UnknownCohort(_))
        ));
        assert!(matches!(
            query(&d, &Query { period: Some("mid".into()), ..Query::default() }),
            Err(QueryError::UnknownPeriod { .. })
        ));
    }

    #[test]
    fn overlapping_periods_rejected() {
        let periods = vec![
            Period { name: "a".into(), start: at(1, 0, 0), end: at(10, 0, 0) },
            Period { name: "b".into(), start: at(9, 0, 0), end: at(12, 0, 0) },
        ];
        assert!(matches!(CohortDataset::new("c", vec![], periods), Err(DatasetError::Overlap(_, _))));
    }
}
