use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use pnpch_cli::table::thread_budget;
use pnpch_cli::{
    exit, load_config, run_mms, run_scenario, validate_scenario, write_table, CliError, MmsOptions,
};
use pnpch_core::mms::ForcingTime;

#[derive(Parser, Debug)]
#[command(
    name = "pnpch",
    version,
    about = "Structure-preserving PNPCH simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario described by a JSON config
    Run { config: PathBuf },
    /// Convergence study against a manufactured solution (1d or 2d)
    Mms {
        case: String,
        /// Comma-separated grid sizes, increasing
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        /// Write the table here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Accepted order window as lo,hi
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        /// Gradient coefficient for the 2d case
        #[arg(long)]
        sigma: Option<f64>,
        /// Time at which the source term is sampled: start or end of the step
        #[arg(long, default_value = "start")]
        forcing_time: ForcingTime,
    },
    /// Parse a config and check neutrality without stepping
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = run_scenario(&cfg)?;
            let last = out.series.last().expect("series holds the initial record");
            info!(
                "{} finished at t = {:.4}: F = {:.10e}, min c = {:?}",
                cfg.name, last.time, last.energy.total, last.min_concentration
            );
            Ok(())
        }
        Command::Mms {
            case,
            levels,
            output,
            window,
            sigma,
            forcing_time,
        } => {
            let window = match window.as_deref() {
                None => None,
                Some(&[lo, hi]) if lo <= hi => Some((lo, hi)),
                Some(_) => {
                    return Err(CliError::Levels(
                        "--window takes lo,hi with lo <= hi".into(),
                    ))
                }
            };
            let opts = MmsOptions {
                levels,
                window,
                sigma,
                forcing_time,
                threads: thread_budget(),
            };
            let study = run_mms(&case, &opts)?;
            let written = match &output {
                Some(p) => File::create(p)
                    .and_then(|f| write_table(&study, BufWriter::new(f)).map_err(io::Error::from)),
                None => write_table(&study, io::stdout().lock()).map_err(io::Error::from),
            };
            written.map_err(|source| CliError::Output {
                path: output.unwrap_or_else(|| "<stdout>".into()),
                source,
            })?;
            if study.passed {
                Ok(())
            } else {
                Err(CliError::OrdersOutOfWindow {
                    lo: study.window.0,
                    hi: study.window.1,
                })
            }
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let residual = validate_scenario(&cfg)?;
            println!(
                "{}: ok ({}D, N = {}, dt = {:.4e}, {} steps, neutrality residual {residual:.3e})",
                cfg.name,
                cfg.grid.dim(),
                cfg.grid.n(),
                cfg.step.dt,
                cfg.n_steps()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
