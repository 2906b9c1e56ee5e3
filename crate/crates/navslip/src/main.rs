use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use navslip::experiment::{plot_data, run_single, sweep_dt, sweep_eps, verify};
use navslip::{ExperimentConfig, HarnessError, Mode};

#[derive(Parser)]
#[command(name = "navslip", version, about = "Implicit compressible Navier-Stokes runs with Navier slip walls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Seed of the random test-function family (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Single run of the configured preset.
    Run { config: PathBuf },
    /// One step at each eps of `eps_sequence`.
    SweepEps { config: PathBuf },
    /// Runs to `final_time` at each dt of `dt_sequence`.
    SweepDt { config: PathBuf },
    /// Rebuilds ledgers from field dumps and compares them with the recorded ones.
    Verify { run_dir: PathBuf },
    /// Writes two-column plot files for a run or sweep directory.
    PlotData { run_dir: PathBuf },
}

fn load(cli: &Cli, path: &Path, mode: Mode) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.mode = mode;
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main_inner(cli: &Cli) -> Result<bool, HarnessError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config, Mode::Run)?;
            let r = run_single(&cfg, &cfg.out)?;
            println!(
                "{} steps of {}, E0 = {:.6e}, ledger {}, weak residuals {}",
                r.states.len() - 1,
                cfg.preset.preset,
                r.ledger.e0,
                if r.ledger_ok { "ok" } else { "FAILED" },
                if r.weak.passes() { "ok" } else { "FAILED" }
            );
            if let Some((k, e)) = &r.failure {
                println!("solver failure at step {k}: {e}");
            }
            Ok(r.ok())
        }
        Command::SweepEps { config } => {
            let cfg = load(cli, config, Mode::SweepEps)?;
            let s = sweep_eps(&cfg, &cfg.out, cli.parallel)?;
            println!(
                "{} eps points, slope of eps*|grad rho| = {:.4}, G gaps decreasing: {}, super-level nonincreasing: {}",
                s.points.len(),
                s.slope,
                s.g_gaps_decreasing,
                s.superlevel_nonincreasing
            );
            Ok(s.ok)
        }
        Command::SweepDt { config } => {
            let cfg = load(cli, config, Mode::SweepDt)?;
            let s = sweep_dt(&cfg, &cfg.out, cli.parallel)?;
            println!(
                "{} dt points, density_increment ratios {:?}, pressure_sum spread {:.3e}, interpolant margin {:.3e}",
                s.runs.len(),
                s.density_increment_ratios,
                s.pressure_sum_spread,
                s.finest_interpolant_margin
            );
            Ok(s.ok)
        }
        Command::Verify { run_dir } => {
            let r = verify(run_dir)?;
            println!("verified {} ledger(s), {} rows", r.runs, r.rows);
            Ok(true)
        }
        Command::PlotData { run_dir } => {
            for p in plot_data(run_dir)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
