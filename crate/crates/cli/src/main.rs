//! `adaptest`: validate item banks, simulate cohorts, analyse attempt logs,
//! export the attempt store and run the HTTP service.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptest_core::analysis::{compare_cohorts, AnalysisOptions, Metric, Split};
use adaptest_core::bank::{validate_bank, ItemBank};
use adaptest_core::scenario::{simulate_scenario, Scenario};
use adaptest_core::store::{export_csv, import_csv, AttemptRecord, AttemptStore, CohortDataset};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptest", version, about = "Adaptive self-evaluation tests and cohort analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Item bank tools.
    Bank {
        #[command(subcommand)]
        command: BankCommand,
    },
    /// Run a scenario file and write one CSV pair per cohort.
    Simulate(SimulateArgs),
    /// Compare cohorts from attempt CSVs.
    Analyze(AnalyzeArgs),
    /// Run the HTTP API.
    Serve(adaptest_server::ServeArgs),
    /// Write the attempt store as CSV, one pair per cohort.
    Export(ExportArgs),
}

#[derive(Subcommand)]
enum BankCommand {
    /// Check a bank file; exits 1 when it has issues.
    Validate {
        path: PathBuf,
        /// Levels the bank must cover [default: the bank's num_levels]
        #[arg(long)]
        levels: Option<u32>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Output directory for `<cohort>.summary.csv` and `<cohort>.detail.csv`
    #[arg(long)]
    out: PathBuf,
    /// Replaces the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV pairs, given by prefix (`dir/stage-2` reads `dir/stage-2.summary.csv`
    /// and `dir/stage-2.detail.csv`) or by the summary file itself
    #[arg(required = true)]
    data: Vec<PathBuf>,
    /// score, proportion, active-days or attempts
    #[arg(long, default_value = "score")]
    metric: String,
    /// none, periods, DATE, MM-DD, or labels with a date such as `pre/post 2020-03-11`
    #[arg(long, default_value = "none")]
    split: String,
    /// Pair the two slices by student (Wilcoxon signed-rank)
    #[arg(long)]
    paired: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Pass mark for the proportion metric
    #[arg(long, default_value_t = adaptest_core::analysis::DEFAULT_PASS_MARK)]
    pass_mark: f64,
    /// Offset of the local calendar day from UTC, in minutes
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    tz_offset_minutes: i32,
    /// Write the text report here instead of standard output
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the pairwise significance table as CSV
    #[arg(long)]
    table: Option<PathBuf>,
    /// Write the full report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Attempt store (JSON lines) written by `serve`
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Export only this cohort
    #[arg(long)]
    cohort: Option<String>,
}

/// 1 for findings about the inputs, 2 for usage and I/O problems.
enum Failure {
    Finding(String),
    Io(String),
}

impl Failure {
    fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Failure {
        Failure::Io(format!("{context}: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bank { command: BankCommand::Validate { path, levels } } => bank_validate(&path, levels),
        Command::Simulate(args) => simulate(&args),
        Command::Analyze(args) => analyze(&args),
        Command::Serve(args) => adaptest_server::serve_blocking(args).map_err(|e| Failure::Io(format!("{e:#}"))),
        Command::Export(args) => export(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Finding(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn bank_validate(path: &Path, levels: Option<u32>) -> Result<(), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path.display(), e))?;
    let bank: ItemBank = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::Finding(format!("{}: malformed bank: {e}", path.display())))?;
    let report = validate_bank(&bank, levels.unwrap_or(bank.num_levels));
    if report.is_clean() {
        let counts: Vec<String> = bank.level_counts().iter().map(|n| n.to_string()).collect();
        println!("{}: ok ({} items; per level {})", path.display(), bank.items.len(), counts.join("/"));
        Ok(())
    } else {
        print!("{}: {} issue(s)\n{report}", path.display(), report.issues.len());
        Err(Failure::Finding(format!("{}: bank is not valid", path.display())))
    }
}

fn write_dataset(out: &Path, cohort: &str, records: &[AttemptRecord]) -> Result<(), Failure> {
    let (summary, detail) = export_csv(records);
    for (suffix, text) in [("summary", summary), ("detail", detail)] {
        let path = out.join(format!("{cohort}.{suffix}.csv"));
        fs::write(&path, text).map_err(|e| Failure::io(path.display(), e))?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.scenario).map_err(|e| Failure::io(args.scenario.display(), e))?;
    let mut scenario =
        Scenario::from_toml(&text).map_err(|e| Failure::Finding(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let datasets = simulate_scenario(&scenario, base).map_err(|e| Failure::Finding(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(args.out.display(), e))?;
    for d in &datasets {
        write_dataset(&args.out, &d.cohort_id, &d.attempts)?;
        let students = d.attempts.iter().map(|r| &r.student_id).collect::<std::collections::BTreeSet<_>>().len();
        println!("{}: {} attempts by {} students", d.cohort_id, d.attempts.len(), students);
    }
    Ok(())
}

fn csv_pair(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let prefix = s.strip_suffix(".summary.csv").unwrap_or(&s);
    (PathBuf::from(format!("{prefix}.summary.csv")), PathBuf::from(format!("{prefix}.detail.csv")))
}

/// Reads every CSV pair and groups the records by cohort, keeping the
/// order in which cohorts first appear.
fn load_datasets(paths: &[PathBuf]) -> Result<Vec<CohortDataset>, Failure> {
    let mut datasets: Vec<CohortDataset> = Vec::new();
    for path in paths {
        let (summary, detail) = csv_pair(path);
        let s = fs::read(&summary).map_err(|e| Failure::io(summary.display(), e))?;
        let d = fs::read(&detail).map_err(|e| Failure::io(detail.display(), e))?;
        let records = import_csv(&s, &d).map_err(|e| Failure::Finding(format!("{}: {e}", summary.display())))?;
        for r in records {
            match datasets.iter_mut().find(|d| d.cohort_id == r.cohort_id) {
                Some(d) => d.attempts.push(r),
                None => datasets.push(CohortDataset {
                    cohort_id: r.cohort_id.clone(),
                    attempts: vec![r],
                    periods: Vec::new(),
                }),
            }
        }
    }
    Ok(datasets)
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let usage = |e: adaptest_core::analysis::AnalysisError| Failure::Io(e.to_string());
    let mut metric: Metric = args.metric.parse().map_err(usage)?;
    if let Metric::Proportion { pass_mark } = &mut metric {
        *pass_mark = args.pass_mark;
    }
    let split: Split = args.split.parse().map_err(usage)?;
    let datasets = load_datasets(&args.data)?;
    let options = AnalysisOptions { alpha: args.alpha, paired: args.paired, tz_offset_minutes: args.tz_offset_minutes };
    let report = compare_cohorts(&datasets, metric, &split, &options).map_err(|e| Failure::Finding(e.to_string()))?;
    let text = report.render_text();
    match &args.report {
        Some(path) => fs::write(path, &text).map_err(|e| Failure::io(path.display(), e))?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.table {
        fs::write(path, report.pairwise_csv()).map_err(|e| Failure::io(path.display(), e))?;
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| Failure::io(path.display(), e))?;
    }
    Ok(())
}

fn export(args: &ExportArgs) -> Result<(), Failure> {
    if !args.store.exists() {
        return Err(Failure::io(args.store.display(), "no such file"));
    }
    let store = AttemptStore::open(&args.store).map_err(|e| Failure::Finding(e.to_string()))?;
    let mut datasets = CohortDataset::partition(store.records());
    if let Some(c) = &args.cohort {
        datasets.retain(|d| &d.cohort_id == c);
        if datasets.is_empty() {
            return Err(Failure::Finding(format!("no attempts for cohort `{c}`")));
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(args.out.display(), e))?;
    for d in &datasets {
        write_dataset(&args.out, &d.cohort_id, &d.attempts)?;
        println!("{}: {} attempts", d.cohort_id, d.attempts.len());
    }
    Ok(())
}
