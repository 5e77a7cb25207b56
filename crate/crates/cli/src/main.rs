use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hdg_nsdarcy::{configure_threads, load_config, run, CliError, Command, THREADS_ENV};

#[derive(Parser)]
#[command(name = "hdg-nsdarcy", version, about = "HDG solver for coupled Navier-Stokes/Darcy flow")]
#[command(after_help = format!("Exit status: 0 success, 1 configuration or output error, 2 solver failure, 3 threshold violation.\nSet {THREADS_ENV} to cap the number of worker threads."))]
struct Args {
    /// What to run; must match `command` in the configuration.
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = configure_threads()
        .and_then(|()| load_config(&args.config))
        .and_then(|cfg| run(args.command, &cfg, args.out.as_deref()));
    match result {
        Ok(manifest) => {
            log::info!("wrote {} files in {:.1} s", manifest.outputs.len(), manifest.wall_seconds);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(&e)
        }
    }
}

fn exit(e: &CliError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
