use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ljform::integrate::Method;
use ljform_cli::commands::{self, RateInput, RateRequest, ResidualKind, RunRequest};
use ljform_cli::config::{Overrides, ScenarioSource};
use ljform_cli::error::{CliError, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "ljform", version, about = "Simulate and check damped Lennard-Jones formations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write trajectory, diagnostics and summary.
    Run(RunArgs),
    /// Fit the exponential convergence rate.
    Rate {
        #[command(flatten)]
        run: RunArgs,
        /// Fit window `t_start,t_end`; chosen automatically when omitted.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        /// `separation` or `energy`.
        #[arg(long, default_value = "separation")]
        residual: ResidualKind,
        /// Two-column `t value` file to fit instead of running a scenario.
        #[arg(long, conflicts_with_all = ["scenario", "config"])]
        input: Option<PathBuf>,
    },
    /// Print the collision bound for a scenario.
    Bound {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Use this initial energy instead of the scenario's.
        #[arg(long, allow_hyphen_values = true)]
        e0: Option<f64>,
    },
    /// Draw SVG plots from a run directory.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List built-in scenarios.
    Scenarios,
    /// Run several built-in scenarios concurrently.
    Batch {
        /// Comma-separated scenario names (default: all built-ins).
        #[arg(long, value_delimiter = ',')]
        scenario: Vec<String>,
        /// Comma-separated seeds for the random scenarios.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seed: Vec<u64>,
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in scenario name (see `ljform scenarios`).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Custom scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SettingsArgs {
    /// Relative and absolute integration tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// `implicit_stiff` or `adaptive_explicit`.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected t_start,t_end")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

impl SourceArgs {
    fn resolve(&self) -> Result<ScenarioSource, CliError> {
        match (&self.scenario, &self.config) {
            (Some(name), None) => Ok(ScenarioSource::Builtin(name.clone())),
            (None, Some(path)) => Ok(ScenarioSource::File(path.clone())),
            (None, None) => Err(CliError::Usage("one of --scenario or --config is required".into())),
            (Some(_), Some(_)) => Err(CliError::Usage("--scenario and --config are exclusive".into())),
        }
    }
}

impl SettingsArgs {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let method = match &self.method {
            Some(m) => Some(m.parse::<Method>().map_err(|e| CliError::Usage(e.to_string()))?),
            None => None,
        };
        Ok(Overrides { tol: self.tol, method, t_end: self.t_end })
    }
}

impl RunArgs {
    fn request(&self) -> Result<RunRequest, CliError> {
        Ok(RunRequest {
            source: self.source.resolve()?,
            seed: self.seed,
            overrides: self.settings.overrides()?,
            out: self.out.clone(),
        })
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("records always serialise")
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(args) => {
            let run = commands::cmd_run(&args.request()?)?;
            println!("{}", json(&run.summary));
            if !run.violations.is_empty() {
                eprintln!("{}", json(&run.violations));
            }
            if let Some(f) = &run.summary.failure {
                eprintln!("integration failed: {f}");
            }
            Ok(run.exit_code())
        }
        Command::Rate { run, window, residual, input } => {
            let input = match input {
                Some(path) => RateInput::Series(path),
                None => RateInput::Scenario {
                    source: run.source.resolve()?,
                    seed: run.seed,
                    overrides: run.settings.overrides()?,
                },
            };
            let rec = commands::cmd_rate(&RateRequest { input, out: run.out, window, residual })?;
            println!("{}", json(&rec));
            Ok(0)
        }
        Command::Bound { source, seed, e0 } => {
            println!("{}", commands::cmd_bound(&source.resolve()?, seed, e0)?);
            Ok(0)
        }
        Command::Plot { out } => {
            for p in commands::cmd_plot(&out)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Scenarios => {
            for (name, about) in commands::cmd_scenarios() {
                println!("{name:<12} {about}");
            }
            Ok(0)
        }
        Command::Batch { scenario, seed, settings, out } => {
            let names = if scenario.is_empty() {
                ["two_agent", "equilateral", "collinear", "random8"].map(String::from).to_vec()
            } else {
                scenario
            };
            let entries = commands::cmd_batch(&names, &seed, &settings.overrides()?, &out)?;
            println!("{}", json(&entries));
            Ok(entries.iter().map(|e| e.exit_code).max().unwrap_or(0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
