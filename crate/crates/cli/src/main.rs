use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use agepin_core::experiment::{resolve_config, run_experiment, ExperimentConfig, Mode, Scale, Summary, PRESETS};
use agepin_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agepin", version, about = "Age-structured bounded-confidence opinion dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment.
    Run(RunArgs),
    /// Run a τ sweep of steady states.
    Sweep(RunArgs),
    /// Run a reduction check.
    Check(RunArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment to start from.
    #[arg(long)]
    preset: Option<String>,
    /// TOML config; overrides the preset key by key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Numerics profile of the preset.
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points and steady branches.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn load(args: &RunArgs, expected: Option<Mode>) -> Result<ExperimentConfig> {
    if args.preset.is_none() && args.config.is_none() {
        return Err(Error::Validation(vec!["give --preset, --config or both".into()]));
    }
    let mut cfg = resolve_config(args.preset.as_deref(), args.scale.map(Scale::from), args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.numerics.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.outputs.dir = Some(out.clone());
    }
    if let Some(mode) = expected {
        if cfg.mode != mode {
            return Err(Error::Validation(vec![format!(
                "mode: this command runs {}, the config has {}",
                mode_name(mode),
                mode_name(cfg.mode)
            )]));
        }
    }
    Ok(cfg)
}

fn mode_name(m: Mode) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn report(s: &Summary, dir: &std::path::Path) {
    println!("{} ({}) finished in {:.2} s", s.name, mode_name(s.mode), s.runtime_seconds);
    println!("  {:<28}{}", "output", dir.display());
    println!("  {:<28}{:.3e}", "mass drift", s.mass_drift);
    let positions: Vec<String> = s.clusters.positions.iter().map(|p| format!("{p:.4}")).collect();
    println!("  {:<28}{} [{}]", "clusters", s.clusters.count, positions.join(", "));
    for (k, v) in &s.residuals {
        println!("  {k:<28}{v:.3e}");
    }
}

fn execute(args: &RunArgs, expected: Option<Mode>) -> Result<()> {
    let cfg = load(args, expected)?;
    let dir = cfg.output_dir();
    let summary = run_experiment(&cfg, &dir, args.jobs)?;
    report(&summary, &dir);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => execute(a, None),
        Command::Sweep(a) => execute(a, Some(Mode::TauSweep)),
        Command::Check(a) => execute(a, Some(Mode::ReductionCheck)),
        Command::Presets => {
            let mut out = std::io::stdout().lock();
            for p in PRESETS {
                if writeln!(out, "{p}").is_err() {
                    break;
                }
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
