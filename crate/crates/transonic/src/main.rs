use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transonic::config::{self, Mode, RunConfig};
use transonic::report::RunReport;
use transonic::{run, Error, Result};

/// Transonic Euler flows in annuli and axisymmetric strips.
///
/// Configuration is layered: built-in defaults, `--preset`, `--config`, `TA_*` environment
/// variables, `--set`, then the subcommand and the remaining flags.
#[derive(Parser, Debug)]
#[command(version, after_long_help = after_help())]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Configuration file (INI-like `key = value` with `[section]` headers, or JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Artifact directory (overrides output.dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads, 0 for one per core (overrides run.threads)
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Bundled configuration applied before --config
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Override one key, e.g. --set gas.gamma=1.3 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the bundled presets and exit
    #[arg(long)]
    list_presets: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Background flow, coefficient identities and multiplier ledger
    Background,
    /// Nonlinear irrotational solve
    Irrotational,
    /// Nonlinear rotational solve with transported Bernoulli and entropy functions
    Rotational,
    /// Axisymmetric solve on a truncated strip
    Axisym,
    /// One run of `sweep.base` per epsilon and a linear response check
    Sweep,
    /// Acceptance probes
    Verify,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Background => Mode::Background,
            Command::Irrotational => Mode::Irrotational,
            Command::Rotational => Mode::Rotational,
            Command::Axisym => Mode::Axisym,
            Command::Sweep => Mode::Sweep,
            Command::Verify => Mode::Verify,
        }
    }
}

fn after_help() -> String {
    let env = "Every key section.key can also be set through the environment variable TA_SECTION_KEY.\n";
    format!("{}\n{env}", config::keys_help())
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(name) = &cli.preset {
        config::apply(&mut cfg, &config::parse_assignments(config::preset(name)?)?)?;
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse { location: path.display().to_string(), message: e.to_string() })?;
        let located = |e: Error| match e {
            Error::Parse { location, message } => Error::Parse { location: format!("{}: {location}", path.display()), message },
            other => other,
        };
        config::apply(&mut cfg, &config::parse_assignments(&text).map_err(located)?).map_err(located)?;
    }
    config::apply(&mut cfg, &config::env_assignments(std::env::vars())?)?;
    config::apply(&mut cfg, &config::override_assignments(&cli.overrides)?)?;
    if let Some(cmd) = cli.command {
        cfg.mode = cmd.mode();
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(k) = cli.threads {
        cfg.threads = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

// Write errors (a closed pipe) are ignored; the exit code still carries the outcome.
fn summarize(report: &RunReport, dir: &str) -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for p in &report.probes {
        writeln!(out, "{} {}", if p.passed { "PASS" } else { "FAIL" }, p.name)?;
        for c in p.failed_checks() {
            writeln!(out, "     {}: {} (required {})", c.name, transonic::io::fmt_num(c.value), c.bound)?;
        }
    }
    writeln!(out, "{} -> {dir}/report.json", if report.passed { "passed" } else { "failed" })
}

fn list_presets() -> std::io::Result<()> {
    let mut out = std::io::stdout().lock();
    for (name, text) in config::PRESETS {
        let first = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
        writeln!(out, "{name:<26} {first}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        let _ = list_presets();
        return ExitCode::SUCCESS;
    }
    let outcome = build_config(&cli).and_then(|cfg| {
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global()
                .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        }
        run::execute(&cfg).map(|r| (r, cfg.out_dir))
    });
    match outcome {
        Ok((report, dir)) => {
            let _ = summarize(&report, &dir);
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
