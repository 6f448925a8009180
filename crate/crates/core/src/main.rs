use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kirchhoff_mp::config::RunConfig;
use kirchhoff_mp::{par, run};

#[derive(Parser)]
#[command(name = "kirchhoff-mp", version, about = "Mountain-pass normalized solutions of the Kirchhoff equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the parallel paths.
        #[arg(long)]
        threads: Option<usize>,
        /// Continue past failed geometry certificates.
        #[arg(long)]
        exploratory: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        threads,
        exploratory,
    } = cli.command;
    let mut cfg = match RunConfig::load(&config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(out) = out {
        cfg.output = out;
    }
    if exploratory {
        cfg.solver.exploratory = true;
    }
    if let Some(t) = threads {
        par::init_threads(t);
    }
    let out_dir = cfg.output.clone();
    match run::execute(&cfg, &out_dir) {
        Ok(outcome) => {
            for v in &outcome.report.violations {
                eprintln!("violated: {v}");
            }
            if let Some(e) = &outcome.report.error {
                eprintln!("error: {e}");
            }
            println!("{:?}: {}", outcome.report.status, out_dir.join("report.json").display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
