use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twistop::cli_io::{exit_code, parse_config, qh_norm, run_pipeline, JobConfig, RunPaths, Stage};
use twistop::Result;

#[derive(Parser)]
#[command(name = "twistop", version, about = "Transfer-operator statistics of piecewise expanding maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages and write their artifacts.
    Run {
        config: PathBuf,
        /// Comma-separated stages; dependencies are added automatically.
        #[arg(long)]
        stages: Option<String>,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate the config and report the regularity constants.
    Check {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quasi-Hölder norm of the observable and a Lasota–Yorke probe.
    QhNorm { config: PathBuf },
}

fn load(path: &Path) -> Result<JobConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn paths(config: &JobConfig, config_path: &Path, out: Option<PathBuf>) -> RunPaths {
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = out.unwrap_or_else(|| match &config.output_dir {
        Some(d) => base.join(d),
        None => PathBuf::from("twistop-out"),
    });
    RunPaths { out_dir, base_dir: Some(base) }
}

fn run_stages(config_path: &Path, stages: &[Stage], out: Option<PathBuf>) -> Result<()> {
    let cfg = load(config_path)?;
    let paths = paths(&cfg, config_path, out);
    let summary = run_pipeline(&cfg, stages, &paths)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, stages, out } => {
            let stages = match stages {
                Some(list) => Stage::parse_list(&list)?,
                None => Stage::ALL.to_vec(),
            };
            run_stages(&config, &stages, out)
        }
        Command::Check { config, out } => run_stages(&config, &[Stage::Check], out),
        Command::QhNorm { config } => {
            let report = qh_norm(&load(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("TWISTOP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = dispatch(cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
