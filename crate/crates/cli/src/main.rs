use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prox_admm_cli::config::{parse_config, ExperimentConfig};
use prox_admm_cli::runner;

#[derive(Parser)]
#[command(
    name = "prox-admm",
    version,
    about = "Run proximal ADMM experiments from a config file"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on concurrent subproblem solves
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Stop with exit code 3 on the first failed audit
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Output directory (overrides `output_dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write trace.csv and summary.txt
    Run { config: PathBuf },
    /// Check the parameter condition only
    Validate { config: PathBuf },
    /// Solve with the reference oracle
    Oracle { config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.strict {
        cfg.strict_audits = true;
    }
    if let Some(k) = cli.max_iters {
        if k == 0 {
            return Err("--max-iters must be at least 1".into());
        }
        cfg.params.max_iters = Some(k);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { config } | Command::Validate { config } | Command::Oracle { config } => config,
    };
    let cfg = match load(path, &cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let code = match cli.command {
        Command::Run { .. } => {
            let code = runner::run_experiment(&cfg);
            if code != 1 {
                println!("wrote {}", cfg.output_dir.display());
            }
            code
        }
        Command::Validate { .. } => match runner::validate(&cfg) {
            Ok((text, code)) => {
                print!("{text}");
                code
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Command::Oracle { .. } => match runner::oracle(&cfg) {
            Ok(r) => {
                print!("{}", runner::oracle_text(&r));
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
    };
    ExitCode::from(code as u8)
}
