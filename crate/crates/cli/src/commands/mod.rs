//! Subcommand implementations. Each returns the process exit code on
//! success; hard errors bubble up as `CliError` and exit 1.

mod compare;
mod folk_theorem;
mod run;
mod sweep_alpha;
mod verify;

pub use compare::cmd_compare;
pub use folk_theorem::cmd_folk_theorem;
pub use run::cmd_run;
pub use sweep_alpha::cmd_sweep_alpha;
pub use verify::cmd_verify;

use std::path::{Path, PathBuf};

use sdi_core::engine::Engine;
use sdi_core::target::TargetModel;

use crate::config::RunConfig;
use crate::model::build_model;
use crate::{CliError, CliResult};

/// Everything a command needs: parsed config, built target, engine, and
/// the output directory (created on demand; commands never write outside
/// it).
pub struct Workspace {
    pub config: RunConfig,
    pub model: TargetModel,
    pub engine: Engine,
    pub outdir: PathBuf,
}

pub fn prepare(
    config_path: &Path,
    overrides: &[String],
    output_dir: Option<&Path>,
) -> CliResult<Workspace> {
    let config = RunConfig::load(config_path, overrides)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let model = build_model(&config.target, base_dir)?;
    workspace_from(config, model, output_dir)
}

pub fn workspace_from(
    config: RunConfig,
    model: TargetModel,
    output_dir: Option<&Path>,
) -> CliResult<Workspace> {
    let engine = Engine::new(config.engine_config()?)?;
    let outdir = output_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&outdir)?;
    Ok(Workspace {
        config,
        model,
        engine,
        outdir,
    })
}

/// Parse a comma-separated numeric list from a CLI flag.
pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> CliResult<Vec<T>> {
    raw.split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("cannot parse {what} list {raw:?}")))
}
