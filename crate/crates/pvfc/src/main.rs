use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pvfc::{run, Command, Outcome, PvfcError, RunConfig, Selection};

/// Short-term PV production forecasting from production, satellite and NWP data.
#[derive(Parser, Debug)]
#[command(name = "pvfc", version)]
struct Cli {
    command: Command,
    /// Run configuration (key=value).
    #[arg(long)]
    config: PathBuf,
    /// Model name, or several separated by commas.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    site: Option<String>,
}

fn init_threads() -> Result<(), PvfcError> {
    let Ok(v) = std::env::var("PVFC_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| PvfcError::usage(format!("PVFC_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| PvfcError::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|_| {
        let cfg = RunConfig::load(&cli.config)?;
        run(cli.command, &cfg, &Selection { model: cli.model, site: cli.site })
    });
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(o @ Outcome::Partial(_)) => {
            if let Outcome::Partial(warnings) = &o {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
            }
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
