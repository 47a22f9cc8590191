use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use wannier_ipp::config::{self, RunConfig};
use wannier_ipp::runner;

/// Localized generalized Wannier functions from iterated projected position
/// operators: spectra, full runs, charge-center sweeps, and diagnostics.
#[derive(Parser)]
#[command(name = "wannier-ipp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration, or {"preset": "<name>", ...overrides}.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config's threads field).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sorted first-stage projected-position spectrum with cluster ids.
    Spectrum(RunArgs),
    /// Full run: localized functions, localization data, diagnostics.
    Ipp(RunArgs),
    /// Wannier charge center sweep with Chern / Z2 diagnosis.
    Wcc(RunArgs),
    /// Diagnostics-only run (no amplitude or norm dumps).
    Diagnose(RunArgs),
    /// List the built-in presets.
    Presets,
}

fn load(args: &RunArgs) -> wannier_ipp::Result<(RunConfig, PathBuf)> {
    let mut cfg = config::load_config(&args.config)?;
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    let out = runner::resolve_out_dir(&cfg, args.out.as_deref())?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    Ok((cfg, out))
}

fn run() -> wannier_ipp::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Spectrum(args) => {
            let (cfg, out) = load(args)?;
            runner::cmd_spectrum(&cfg, &out)
        }
        Command::Ipp(args) => {
            let (cfg, out) = load(args)?;
            runner::cmd_ipp(&cfg, &out)
        }
        Command::Wcc(args) => {
            let (cfg, out) = load(args)?;
            runner::cmd_wcc(&cfg, &out)
        }
        Command::Diagnose(args) => {
            let (cfg, out) = load(args)?;
            runner::cmd_diagnose(&cfg, &out)
        }
        Command::Presets => {
            for name in config::SCENARIO_PRESETS {
                println!("{name}");
            }
            for name in
                ["wcc_haldane_trivial", "wcc_haldane_chern", "wcc_km_z2_even", "wcc_km_z2_odd"]
            {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
