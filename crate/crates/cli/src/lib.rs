//! Configuration-driven driver for the coupled free-flow/porous-media solver:
//! convergence studies, invariant suites, probes and the surface/subsurface
//! scenario.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{Command, RunConfig};
pub use error::CliError;
use output::{Manifest, OutputDir};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HDG_NSDARCY_THREADS";

/// Output directory when neither the command line nor the config names one.
pub const DEFAULT_OUTPUT: &str = "out";

/// Install the global worker pool from [`THREADS_ENV`] if it is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer (got {value:?})")))?;
    // A pool installed earlier in this process stays in place.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text)
}

/// Run `cfg`, writing its tables and `manifest.json` into `out_dir`
/// (falling back to the config's `output`, then [`DEFAULT_OUTPUT`]).
///
/// Gate violations still write every output and the manifest before
/// returning [`CliError::Gate`].
pub fn run(command: Command, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Manifest, CliError> {
    if command != cfg.command {
        return Err(CliError::Config(format!(
            "command line asks for {command} but the configuration is for {}",
            cfg.command
        )));
    }
    let root: PathBuf = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    let mut out = OutputDir::create(&root)?;
    let start = Instant::now();
    let outcome = commands::execute(cfg, &mut out)?;
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        command: cfg.command.to_string(),
        config_sha256: cfg.content_hash(),
        meshes: outcome.meshes,
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        outputs,
        passed: outcome.violations.is_empty(),
    };
    out.write("manifest.json", &manifest.to_json())?;
    for v in &outcome.violations {
        log::error!("{v}");
    }
    if outcome.violations.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::Gate(outcome.violations.join("; ")))
    }
}
