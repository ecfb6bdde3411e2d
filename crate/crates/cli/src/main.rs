use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mvparametrix::harness::{acceptance_help, parse_config, parse_config_file, run_named, write_report, Experiment};
use mvparametrix::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    Density,
    Gradient,
    Lions,
    Bounds,
    Identities,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Experiment::Simulate,
            Command::Density => Experiment::Density,
            Command::Gradient => Experiment::Gradient,
            Command::Lions => Experiment::Lions,
            Command::Bounds => Experiment::Bounds,
            Command::Identities => Experiment::Identities,
        }
    }
}

const DEFAULTS: &str = "Defaults: dt = 1e-3, n_particles = 10000, n_mc = 100000, grid.order = 2, seed = 42, \
init = Dirac at the origin, time = [0, 1].";

/// Runs one experiment and writes its CSV tables, checks and manifest.
///
/// Exit status: 0 when every check passes, 1 when a check fails or the run
/// errors, 2 on a usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "mvparametrix", version, after_help = after_help())]
struct Cli {
    /// Experiment to run.
    experiment: Command,

    /// TOML config file with [model], [init], [time], [solver], [grid] and
    /// per-experiment sections.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set solver.seed=7`; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory; the experiment name is appended.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn after_help() -> String {
    format!("{DEFAULTS}\n\n{}", acceptance_help())
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::Config { .. } | Error::ConfigRange { .. } | Error::UnknownModel(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => parse_config_file(path, &cli.set),
        None => parse_config("", &cli.set),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let experiment: Experiment = cli.experiment.into();
    let report = match run_named(&cfg, experiment) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {experiment} failed: {e}");
            return ExitCode::from(if is_usage(&e) { 2 } else { 1 });
        }
    };
    let dir = cli.out.unwrap_or_else(|| cfg.output.clone()).join(experiment.name());
    if let Err(e) = write_report(&cfg, &report, &dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "{experiment}: {}/{} checks passed in {:.1} s, report in {}",
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        report.elapsed.as_secs_f64(),
        dir.display()
    );
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
