use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multibec::optim::Method;
use multibec_cli::check::run_checks;
use multibec_cli::config::{bundled, BUNDLED};
use multibec_cli::output::comparison_table;
use multibec_cli::runner::{suite_configs, EXIT_CONFIG, EXIT_CONVERGED, EXIT_FAILURE};
use multibec_cli::{compare, parse_config, solve, Overrides, RunConfig, RunError};

/// Environment variable setting the worker thread count.
const THREADS_VAR: &str = "MULTIBEC_THREADS";

#[derive(Parser)]
#[command(
    name = "multibec",
    version,
    about = "Ground states of multicomponent condensates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its artifacts.
    Solve {
        /// TOML file, or the name of a bundled configuration.
        config: String,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Solve several configurations of one problem and print a table.
    Compare {
        #[arg(required = true)]
        configs: Vec<String>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the oracle and property checks on small problems.
    Check,
    /// Run a bundled benchmark suite (table1, table2, random).
    Bench { suite: String },
    /// Print a bundled configuration.
    Show { name: Option<String> },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    /// Seed of random potentials.
    #[arg(long)]
    seed: Option<u64>,
}

impl OverrideArgs {
    fn get(&self) -> Overrides {
        Overrides {
            tol: self.tol,
            tau: self.tau,
            method: self.method,
            seed: self.seed,
        }
    }
}

fn load(arg: &str, overrides: &OverrideArgs) -> Result<RunConfig, RunError> {
    let path = PathBuf::from(arg);
    let mut cfg = if path.exists() || arg.ends_with(".toml") {
        parse_config(&path)?
    } else {
        bundled(arg)?
    };
    cfg.apply_overrides(&overrides.get())?;
    Ok(cfg)
}

fn init_threads() {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return;
    };
    match value.parse::<usize>() {
        Ok(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("warning: cannot configure {n} threads: {e}");
            }
        }
        Err(_) => eprintln!("warning: ignoring {THREADS_VAR}={value:?}, expected a thread count"),
    }
}

fn fail(e: RunError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let code = match cli.command {
        Command::Solve { config, overrides } => {
            match load(&config, &overrides).and_then(|c| solve(&c)) {
                Ok(outcome) => {
                    let s = &outcome.summary;
                    println!(
                        "{}: {:?} after {} iterations (init {}), E = {:.12}, residual {:.3e}",
                        s.method, s.termination, s.iterations, s.init_steps, s.energy, s.residual
                    );
                    for path in &outcome.artifacts {
                        println!("wrote {}", path.display());
                    }
                    outcome.exit_code()
                }
                Err(e) => fail(e),
            }
        }
        Command::Compare { configs, overrides } => {
            let loaded: Result<Vec<_>, _> = configs.iter().map(|c| load(c, &overrides)).collect();
            match loaded.and_then(|c| compare(&c)) {
                Ok(outcomes) => {
                    let rows: Vec<_> = outcomes.iter().map(|o| o.summary.clone()).collect();
                    print!("{}", comparison_table(&rows));
                    outcomes
                        .iter()
                        .map(|o| o.exit_code())
                        .max()
                        .unwrap_or(EXIT_CONVERGED)
                }
                Err(e) => fail(e),
            }
        }
        Command::Check => {
            let results = run_checks();
            for r in &results {
                println!(
                    "{} {:<32} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
            }
            if results.iter().all(|r| r.passed) {
                EXIT_CONVERGED
            } else {
                EXIT_FAILURE
            }
        }
        Command::Bench { suite } => match suite_configs(&suite) {
            Ok(groups) => {
                let mut code = EXIT_CONVERGED;
                for (name, configs) in groups {
                    println!("{name}");
                    match compare(&configs) {
                        Ok(outcomes) => {
                            let rows: Vec<_> = outcomes.iter().map(|o| o.summary.clone()).collect();
                            println!("{}", comparison_table(&rows));
                        }
                        Err(e) => code = code.max(fail(e)),
                    }
                }
                code
            }
            Err(e) => fail(e.into()),
        },
        Command::Show { name } => match name {
            None => {
                for (n, _) in BUNDLED {
                    println!("{n}");
                }
                EXIT_CONVERGED
            }
            Some(n) => match BUNDLED.iter().find(|(b, _)| *b == n) {
                Some((_, text)) => {
                    print!("{text}");
                    EXIT_CONVERGED
                }
                None => {
                    eprintln!("error: no bundled configuration `{n}`");
                    EXIT_CONFIG
                }
            },
        },
    };
    ExitCode::from(code as u8)
}
