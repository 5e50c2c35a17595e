use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod report;
mod run;

use config::{ExperimentConfig, Format, ModelSpec};

/// Numerical checks of the Keldysh functional integral for finite fermionic systems.
#[derive(Parser, Debug)]
#[command(name = "keldysh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML experiment config.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Preset model when no config is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    sites: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    time: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    coupling: Option<f64>,
    #[arg(long, global = true)]
    panels: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Vec<FormatArg>,
    /// Output directory; falls back to the config, then the environment.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Continuum vs discrete covariance, determinant identity, |C| dump.
    Covariance,
    /// Determinant and decay constants, sampling, Combes-Thomas, time scan.
    Constants,
    /// Exact moments and truncated expectation values.
    Cumulants,
    /// Cumulant bound and first-order check.
    Verify,
    TrotterScan,
    VolumeScan,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

const OUTPUT_ENV: &str = "KELDYSH_OUTPUT_DIR";

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => {
            let Some(preset) = &common.preset else {
                anyhow::bail!("either --config or --preset is required");
            };
            let text = format!("[model]\npreset = {preset:?}\n");
            let mut c = ExperimentConfig::parse(&text)?;
            c.model = ModelSpec { sites: common.sites, ..c.model };
            c
        }
    };
    if common.config.is_some() && (common.preset.is_some() || common.sites.is_some()) {
        config.model.matrices = None;
        if let Some(p) = &common.preset {
            config.model.preset = Some(p.clone());
        }
        if common.sites.is_some() {
            config.model.sites = common.sites;
        }
    }
    if let Some(v) = common.seed {
        config.seed = Some(v);
    }
    if let Some(v) = common.beta {
        config.beta = v;
    }
    if let Some(v) = common.time {
        config.total_time = v;
    }
    if let Some(v) = common.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = common.coupling {
        config.interaction.coupling = Some(v);
        config.interaction.admissible_fraction = None;
        if config.interaction.kind == "none" {
            config.interaction.kind = "density-density".into();
        }
    }
    if let Some(v) = common.panels {
        config.plan.panels = v;
    }
    if let Some(v) = common.trials {
        config.plan.trials = v;
    }
    if !common.format.is_empty() {
        config.formats = common
            .format
            .iter()
            .map(|f| match f {
                FormatArg::Json => Format::Json,
                FormatArg::Csv => Format::Csv,
            })
            .collect();
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<bool> {
    let mut config = load(&cli.common)?;
    let seed = config.seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    config.seed = Some(seed);
    let out = cli
        .common
        .output
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("keldysh-out"));
    let mut ctx = run::Context::new(&config, seed, &out)?;
    let steps: &[fn(&mut run::Context) -> Result<()>] = match cli.command {
        Command::Covariance => &[run::covariance],
        Command::Constants => &[run::constants],
        Command::Cumulants => &[run::cumulants],
        Command::Verify => &[run::verify],
        Command::TrotterScan => &[run::trotter],
        Command::VolumeScan => &[run::volume],
        Command::All => &[
            run::covariance,
            run::constants,
            run::cumulants,
            run::verify,
            run::trotter,
            run::volume,
        ],
    };
    for step in steps {
        step(&mut ctx)?;
    }
    println!("seed {seed}, inputs {}", ctx.hash);
    for c in &ctx.checks {
        let status = match (c.mode, c.pass) {
            (_, true) if c.note.is_some() => "NOTE",
            (_, true) => "PASS",
            (config::Mode::Assert, false) => "FAIL",
            (config::Mode::Report, false) => "WARN",
        };
        match &c.note {
            Some(n) => println!("{status} {:<28} {n}", c.name),
            None => println!("{status} {:<28} {:.6e}  ({})", c.name, c.value, c.tolerance),
        }
    }
    for path in ctx.writer.written() {
        println!("wrote {}", path.display());
    }
    Ok(!ctx.checks.iter().any(|c| c.gates()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
