use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plent_harness::grid::{self, ExperimentGrid};
use plent_harness::runner::{self, DATA_ROOT_ENV};
use plent_harness::{plots, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "plent", about = "Train with partial local entropy losses and collect results")]
struct Cli {
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Root directory of the datasets.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    /// Suppress per-epoch progress.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run { config: PathBuf },
    /// Expand a grid and run every cell.
    Sweep { grid: PathBuf },
    /// Write plot tables from run or sweep directories.
    EmitPlots { dirs: Vec<PathBuf> },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Write soft distance and kernel sections.
    KernelCurves {
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        k: Vec<f64>,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), HarnessError> {
    let data_root = cli.data_root.clone().unwrap_or_else(runner::default_data_root);
    match &cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(config)?;
            let quiet = cli.quiet;
            let (res, dir) = runner::run(&cfg, &data_root, &cli.out, &mut |p| {
                if !quiet {
                    match p.test {
                        Some(t) => eprintln!("epoch {:>4}  train {:.5}  test {:.5}  acc {:.4}", p.epoch, p.train_loss, t.loss, t.acc),
                        None => eprintln!("epoch {:>4}  train {:.5}", p.epoch, p.train_loss),
                    }
                }
            })?;
            println!("{}  best_acc {:.4} (epoch {})  final_acc {:.4}", dir.display(), res.report.best_acc, res.report.best_epoch, res.report.final_acc);
        }
        Command::Sweep { grid } => {
            let g = ExperimentGrid::load(grid)?;
            let quiet = cli.quiet;
            let outcome = grid::sweep(&g, &data_root, &cli.out, |m| {
                if !quiet {
                    eprintln!("{m}");
                }
            })?;
            println!(
                "{} cells finished, {} failed; summary in {}",
                outcome.rows.len(),
                outcome.failures.len(),
                cli.out.join(grid::SUMMARY_FILE).display()
            );
        }
        Command::EmitPlots { dirs } => {
            let outcome = plots::emit_plot_data(dirs, &cli.out)?;
            for (d, why) in &outcome.skipped {
                eprintln!("skipped {}: {why}", d.display());
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(config)?;
            cfg.validate().map_err(HarnessError::Validation)?;
            println!("ok  run id {}", cfg.run_id());
        }
        Command::KernelCurves { radius, k, points } => {
            println!("{}", plots::write_kernel_curves(&cli.out, *radius, k, *points)?.display());
        }
    }
    Ok(())
}
