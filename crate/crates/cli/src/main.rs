use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod config;
mod stages;
mod stamps;

use stages::{StageContext, StageError};

/// Rebuild a dated web corpus for a search query log, compare corpus
/// versions, and evaluate rankers over the reconstructed documents.
#[derive(Parser)]
#[command(name = "retrocorpus", version, about, after_help = stage_list())]
struct Cli {
    /// Pipeline stage to run
    stage: String,

    /// Path to the key=value configuration file
    #[arg(long, value_name = "PATH", default_value = "retrocorpus.conf")]
    config: PathBuf,

    /// Cap crawl worker threads (overrides `jobs` from the config)
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,

    /// Override the configured random seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Append URL tokens to the title text when indexing and ranking
    #[arg(long)]
    include_url: bool,

    /// Print what the stage would do without writing anything
    #[arg(long)]
    dry_run: bool,

    /// Send archive traffic to this endpoint (wins over the environment
    /// variable and the config file)
    #[arg(long, value_name = "URL")]
    mock_endpoint: Option<String>,
}

/// Environment override for the archive endpoint, between the config file
/// and the --mock-endpoint flag in precedence.
const ENDPOINT_ENV: &str = "RETROCORPUS_ARCHIVE_ENDPOINT";

fn stage_list() -> String {
    let mut out = String::from("Stages (in pipeline order):\n");
    for stage in stages::registry() {
        out.push_str(&format!("  {:<14} {}\n", stage.name(), stage.summary()));
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    let mut config = config::load(&cli.config).map_err(StageError::Data)?;
    if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
        if !endpoint.is_empty() {
            config.archive_endpoint = endpoint;
        }
    }
    if let Some(endpoint) = cli.mock_endpoint {
        config.archive_endpoint = endpoint;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.include_url {
        config.include_url = true;
    }
    let config_hash = config.hash();
    let ctx = StageContext { config, config_hash, dry_run: cli.dry_run };
    stages::run_stage(&cli.stage, &ctx)
}
