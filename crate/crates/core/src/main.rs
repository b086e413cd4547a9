use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use phc_design::cli::{init_threads, run, MANIFEST};
use phc_design::config::parse_config;
use phc_design::Error;

/// Photonic-crystal cavity design runs driven by a TOML configuration.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.output`).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Random seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// More log output; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn report(e: &Error) -> ExitCode {
    eprintln!("error [{}]: {e}", e.module());
    if let Error::Config(issues) = e {
        for i in issues {
            eprintln!("  {i}");
        }
    }
    eprintln!("hint: {}", e.hint());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return report(&Error::Io(e)),
    };
    let result = parse_config(&text).and_then(|mut c| {
        if let Some(o) = args.output {
            c.output = o;
        }
        if let Some(s) = args.seed {
            c.seed = s;
        }
        init_threads()?;
        log::info!("running {} into {}", c.command.name(), c.output.display());
        run(&c).map(|m| (c.output, m))
    });
    match result {
        Ok((dir, m)) => {
            println!("{}", dir.join(MANIFEST).display());
            log::info!("{}", serde_json::to_string_pretty(&m.results).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
