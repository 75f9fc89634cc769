use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use subframe::ensemble::threads_from_env;
use subframe::io::{parse_config, run};

/// Run one seeded open-quantum-system experiment from a JSON configuration.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set model.gamma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = parse_config(&args.config, &args.set).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(d) = &args.out {
            cfg.output.directory = d.clone();
        }
        run(&cfg, threads_from_env())
    });
    match result {
        Ok(m) => {
            println!("{} files written, config sha256 {}", m.files.len(), m.config_sha256);
            println!("{}", serde_json::to_string(&m.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
