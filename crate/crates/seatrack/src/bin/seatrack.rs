//! Thin CLI over the scenario runner. Exit codes: 0 on success, 1 for usage
//! and config problems, 2 for runtime failures.

use clap::{Parser, Subcommand};
use seatrack::evaluation::IcpParams;
use seatrack::runner::{
    compare_matchers, evaluate_csv_files, load_config, run_scenario, sweep_drones, RunError,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "seatrack",
    about = "Multi-drone GNSS tracking of surface marine robots: scenario runner and experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and write truth/estimates/fused CSV logs
    /// plus report.json and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Run the same scenario with IOU-only and hybrid matching and emit a
    /// comparison table.
    CompareMatchers {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Sweep the drone count (3, 2, 1) over a block of seeds and emit the
    /// seed-averaged error table.
    SweepDrones {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds per drone count.
        #[arg(long, default_value_t = 10)]
        seeds: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// ICP-align and score two existing CSV logs (a truth.csv and a
    /// fused.csv) and write report.json.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iterations: u32,
        #[arg(long, default_value_t = 1e-6)]
        epsilon_m: f64,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2))
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            force,
        } => {
            let (mut cfg, mut text) = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
                text = cfg.canonical_text();
            }
            let (report, _) = run_scenario(&cfg, &text, &out, force)?;
            println!(
                "mean_error_m={:.6} std_error_m={:.6} points={} id_switches_per_500m={:.4}",
                report.mean_error_m,
                report.std_error_m,
                report.num_points,
                report.id_switches.mean_per_500m
            );
            println!("outputs written to {}", out.display());
            Ok(())
        }
        Command::CompareMatchers {
            config,
            out,
            seed,
            force,
        } => {
            let (mut cfg, _) = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            let rows = compare_matchers(&cfg, &out, force)?;
            println!("matcher,switches_per_500m,mean_error_m");
            for row in rows {
                println!(
                    "{},{:.4},{:.6}",
                    row.matcher, row.switches_per_500m, row.mean_error_m
                );
            }
            Ok(())
        }
        Command::SweepDrones {
            config,
            out,
            seeds,
            seed,
            force,
        } => {
            let (mut cfg, _) = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            let rows = sweep_drones(&cfg, &out, seeds, force)?;
            println!("n_drones,mean_error_m,std_error_m");
            for row in rows {
                println!(
                    "{},{:.6},{:.6}",
                    row.n_drones, row.mean_error_m, row.std_error_m
                );
            }
            Ok(())
        }
        Command::Eval {
            truth,
            fused,
            out,
            max_iterations,
            epsilon_m,
            force,
        } => {
            let icp = IcpParams {
                max_iterations,
                convergence_epsilon_m: epsilon_m,
            };
            icp.validate()
                .map_err(|e| RunError::Config(format!("icp: {e}")))?;
            let report = evaluate_csv_files(&truth, &fused, &icp, &out, force)?;
            println!(
                "mean_error_m={:.6} std_error_m={:.6} points={}",
                report.mean_error_m, report.std_error_m, report.num_points
            );
            Ok(())
        }
    }
}
