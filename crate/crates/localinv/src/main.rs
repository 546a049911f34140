use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use localinv::config::threads_from_env;
use localinv::{CliError, Overrides, RunConfig};
use localinv_core::suite::register_builtin;

#[derive(Parser)]
#[command(name = "localinv", about = "Certified local inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a task from a JSON config and write report.json and tables/*.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in problems and their tags.
    ListProblems,
    /// Print the version.
    Version,
}

fn run(config: PathBuf, overrides: Overrides) -> Result<i32, CliError> {
    let mut cfg = RunConfig::load(&config)?;
    cfg.apply(overrides);
    let outcome = localinv::run(&cfg, threads_from_env()?)?;
    let s = &outcome.report.summary;
    println!(
        "{} checks, {} passed, {} failed; report in {}",
        s.checks,
        s.passed,
        s.failed,
        cfg.output.dir.display()
    );
    for c in outcome.report.checks.iter().filter(|c| !c.passed) {
        println!("FAILED {} {}", c.name, c.note);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            task,
            problem,
            out,
        } => {
            match run(
                config,
                Overrides {
                    seed,
                    task,
                    problem,
                    out,
                },
            ) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::ListProblems => {
            for r in register_builtin() {
                let tags: Vec<&str> = r.tags.iter().map(|t| t.label()).collect();
                println!("{:<16} [{}] {}", r.name, tags.join(", "), r.summary);
            }
            0
        }
        Command::Version => {
            println!("localinv {}", env!("CARGO_PKG_VERSION"));
            0
        }
    };
    ExitCode::from(code as u8)
}
