use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smt_sweep::experiment::{self, ExecOptions};
use smt_sweep::{plan, report};

#[derive(Parser)]
#[command(name = "aps-smt", version, about = "Run and summarize APS-SMT vs NSP adversary sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every cell of an experiment plan and write a results CSV.
    Run {
        plan: PathBuf,
        /// Results file; overrides `output` in the plan.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Also write per-run event logs and a per-window metrics CSV.
        #[arg(long)]
        log_events: bool,
    },
    /// Print the summary table of an existing results CSV.
    Summarize { csv: PathBuf },
}

fn run(plan_path: PathBuf, out: Option<PathBuf>, parallel: usize, log_events: bool) -> Result<(), String> {
    let text = fs::read_to_string(&plan_path).map_err(|e| format!("reading {}: {e}", plan_path.display()))?;
    let plan = plan::parse_plan(&text).map_err(|e| format!("{}: {e}", plan_path.display()))?;
    print!("{}", plan.echo());
    let out = out.or_else(|| plan.output.clone()).unwrap_or_else(|| PathBuf::from("results.csv"));
    let exec = experiment::execute(&plan, ExecOptions { parallel, log_events }).map_err(|e| e.to_string())?;
    experiment::write_csv(&out, &exec.rows, &exec.aggregates).map_err(|e| e.to_string())?;
    if log_events {
        experiment::write_logs(&out, &exec).map_err(|e| e.to_string())?;
    }
    println!("wrote {} rows to {}", exec.rows.len() + exec.aggregates.len(), out.display());
    print!("{}", report::summarize(&exec.aggregates));
    Ok(())
}

fn summarize(path: PathBuf) -> Result<(), String> {
    let rows = experiment::read_csv(&path).map_err(|e| e.to_string())?;
    print!("{}", report::summarize(&experiment::aggregate(&rows)));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { plan, out, parallel, log_events } => run(plan, out, parallel, log_events),
        Command::Summarize { csv } => summarize(csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
