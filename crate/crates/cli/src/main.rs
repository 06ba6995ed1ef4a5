use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdi_cli::commands::{
    cmd_compare, cmd_folk_theorem, cmd_run, cmd_sweep_alpha, cmd_verify, prepare, workspace_from,
    Workspace,
};
use sdi_cli::config::RunConfig;
use sdi_cli::{exit_code, CliResult};

/// Gaussian approximate inference as smoothed gradient descent:
/// Newton/Laplace, Gaussian VB, α-hybrid iterations and expectation
/// propagation, with deterministic trace/summary exports.
#[derive(Parser)]
#[command(name = "sdi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set engine.gh_order=16
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `[output] dir` from the config, or ./out).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one target; writes trace.csv, summary.json,
    /// final.json. Exits 0 on convergence, 2 on the sweep limit.
    Run(CommonArgs),
    /// Run several methods and write a comparison table with pairwise
    /// natural-parameter distances (comparison.csv).
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated method list, e.g. laplace,gvb,ep_classical.
        #[arg(long)]
        methods: Option<String>,
    },
    /// α-hybrid fixed points across an α grid (sweep_alpha.csv).
    SweepAlpha {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated α values in (0, 1).
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Tempered-site EP versus the reverse-KL fixed point
    /// (folk_theorem.csv).
    FolkTheorem {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated temper factors, e.g. 1,4,16,64.
        #[arg(long)]
        k: Option<String>,
    },
    /// Run the consistency battery and write verify.json. Exits 3 when
    /// any check fails.
    Verify {
        /// Optional TOML configuration (used for its engine block/seed).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn workspace(common: &CommonArgs) -> CliResult<Workspace> {
    prepare(
        &common.config,
        &common.overrides,
        common.output_dir.as_deref(),
    )
}

fn dispatch(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Run(common) => cmd_run(&workspace(&common)?),
        Command::Compare { common, methods } => {
            cmd_compare(&workspace(&common)?, methods.as_deref())
        }
        Command::SweepAlpha { common, alphas } => {
            cmd_sweep_alpha(&workspace(&common)?, alphas.as_deref())
        }
        Command::FolkTheorem { common, k } => cmd_folk_theorem(&workspace(&common)?, k.as_deref()),
        Command::Verify {
            config,
            overrides,
            output_dir,
        } => {
            let ws = match config {
                Some(path) => prepare(&path, &overrides, output_dir.as_deref()),
                None => {
                    // the battery runs on the built-in registry; a target
                    // spec is not required
                    let text = "[target]\nkind = \"gaussian\"\nmu = [0.0]\nsigma = [[1.0]]\n";
                    let config = RunConfig::parse(text, &overrides)?;
                    let model =
                        sdi_cli::model::build_model(&config.target, std::path::Path::new("."))?;
                    workspace_from(config, model, output_dir.as_deref())
                }
            }?;
            cmd_verify(&ws)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code::USAGE)
        }
    }
}
