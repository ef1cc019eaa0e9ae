use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybridkvh::scenario::builtin::{builtin_scenario, BUILTIN};
use hybridkvh::scenario::checks::{check_suite, SUITES};
use hybridkvh::scenario::config::parse_config;
use hybridkvh::scenario::run::run_scenario;
use hybridkvh::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hybridkvh",
    version,
    about = "Hybrid quantum-classical wave dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or the name of a built-in scenario).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an invariant suite and print a CSV report.
    Check {
        #[arg(long)]
        suite: String,
    },
    /// List the built-in scenarios.
    Scenarios,
}

fn error_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("HYBRIDKVH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("HYBRIDKVH_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn load_config(path: &Path) -> hybridkvh::Result<hybridkvh::scenario::config::ScenarioConfig> {
    if !path.exists() {
        if let Some(name) = path
            .to_str()
            .filter(|n| BUILTIN.iter().any(|(b, _)| b == n))
        {
            return builtin_scenario(name);
        }
    }
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}

fn run(config: &Path, out: &Path) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(error_code(&e));
        }
    };
    match run_scenario(&cfg, out) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "wrote {} rows to {} in {:.2} s",
                report.rows,
                out.display(),
                report.wall_time
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn check(suite: &str) -> ExitCode {
    match check_suite(suite) {
        Ok(report) => {
            print!("{}", report.to_csv());
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                eprintln!("known suites: {}", SUITES.join(", "));
            }
            ExitCode::from(error_code(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match cli.command {
        Command::Run { config, out } => run(&config, &out),
        Command::Check { suite } => check(&suite),
        Command::Scenarios => {
            for (name, _) in BUILTIN {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
