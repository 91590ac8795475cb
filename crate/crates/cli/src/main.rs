use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use netpref::config::{parse_seeds, preset, ExperimentConfig, PRESETS};
use netpref::diagnostics::{run_suite, Suite};
use netpref::experiment::run_experiment;
use netpref::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_DIAGNOSTIC: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Train networked agents from simulated preference feedback, or run the diagnostic suites.
#[derive(Debug, Parser)]
#[command(name = "netpref", version)]
struct Cli {
    /// Experiment config (TOML).
    config: Option<PathBuf>,

    /// Start from a named preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// Override the seed list: `0..4` (inclusive) or `1,5,9`.
    #[arg(long)]
    seeds: Option<String>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Run a diagnostic suite: bounds, estimator, preference or all.
    #[arg(long, value_name = "SUITE")]
    diag: Option<String>,

    /// Seed for the diagnostic suites.
    #[arg(long, default_value_t = 0)]
    diag_seed: u64,

    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,

    /// List preset names and exit.
    #[arg(long)]
    list_presets: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Parse(_) | Error::Argument(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn diagnostics(suite: &str, seed: u64, out: Option<PathBuf>) -> Result<bool, Error> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite, seed)?;
    for (s, r) in &report.rows {
        println!(
            "{:4} {s:10} {:48} lhs={:<12.6e} rhs={:<12.6e} tol={:e}",
            if r.pass { "ok" } else { "FAIL" },
            r.name,
            r.lhs,
            r.rhs,
            r.tolerance
        );
    }
    let failed = report.failures().count();
    println!("{} checks, {failed} failed", report.rows.len());
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("diagnostics_{suite}.csv")), report.to_csv())?;
    }
    Ok(failed == 0)
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        _ => return Err(Error::Argument("give a config path or --preset".into())),
    };
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.list_presets {
        for p in PRESETS {
            println!("{p}");
        }
        return ExitCode::SUCCESS;
    }
    if let Some(suite) = &cli.diag {
        return match diagnostics(suite, cli.diag_seed, cli.out.clone()) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_DIAGNOSTIC),
            Err(e) => fail(e),
        };
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if cli.print_config {
        return match cfg.to_toml_string() {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        };
    }
    match run_experiment(&cfg, &cfg.output.directory) {
        Ok(summary) => {
            print!("{}", summary.to_text());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
