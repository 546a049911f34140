//! Batch harness around `localinv-core`.
//!
//! A run reads a JSON [`RunConfig`], executes one task (or the full suite)
//! over the built-in problems, and produces a [`Report`] plus CSV tables.
//! Reports carry no timestamps or environment details: the same config and
//! seed give the same bytes regardless of thread count.

pub mod config;
pub mod report;

use localinv_core::suite::{run_problem, ReportFragment, Table, Task};
use rayon::prelude::*;

pub use config::{Overrides, Plan, RunConfig};
pub use report::Report;

use report::{CheckEntry, ProblemEntry, Summary, TableEntry, ToleranceSet, Tool, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn csv(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Result of executing a plan.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.summary.all_passed {
            0
        } else {
            1
        }
    }
}

/// Run every (problem, task) job of `plan`, on at most `threads` workers.
pub fn execute(plan: &Plan, threads: Option<usize>) -> Result<Outcome, CliError> {
    let jobs: Vec<(usize, Task)> = plan
        .problems
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            let tasks: Vec<Task> = match plan.task {
                Task::FullSuite => Task::BASIC.into_iter().filter(|t| t.applies_to(r)).collect(),
                t => vec![t],
            };
            tasks.into_iter().map(move |t| (i, t))
        })
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let fragments: Vec<ReportFragment> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, t)| run_problem(&plan.problems[i], t, &plan.options))
            .collect()
    });

    let mut checks: Vec<CheckEntry> = fragments
        .iter()
        .flat_map(|f| f.checks.iter().map(|c| CheckEntry::new(&f.problem, c)))
        .collect();
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    let mut tables: Vec<Table> = fragments.into_iter().flat_map(|f| f.tables).collect();
    tables.sort_by(|a, b| a.name.cmp(&b.name));

    let passed = checks.iter().filter(|c| c.passed).count();
    let summary = Summary {
        checks: checks.len(),
        passed,
        failed: checks.len() - passed,
        all_passed: !checks.is_empty() && passed == checks.len(),
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool: Tool {
            name: "localinv",
            version: env!("CARGO_PKG_VERSION"),
        },
        config: plan.config.clone(),
        seed: plan.options.seed,
        tolerances: ToleranceSet::new(plan.config.tolerances),
        summary,
        problems: plan.problems.iter().map(ProblemEntry::from).collect(),
        checks,
        tables: tables
            .iter()
            .map(|t| TableEntry {
                name: t.name.clone(),
                file: format!("tables/{}.csv", t.name),
                columns: t.header.clone(),
                rows: t.rows.len(),
            })
            .collect(),
    };
    Ok(Outcome { report, tables })
}

/// Validate, execute and write outputs; returns the exit status.
pub fn run(config: &RunConfig, threads: Option<usize>) -> Result<Outcome, CliError> {
    let plan = config.validate()?;
    let outcome = execute(&plan, threads)?;
    report::write_outputs(&config.output.dir, &outcome.report, &outcome.tables)?;
    Ok(outcome)
}
