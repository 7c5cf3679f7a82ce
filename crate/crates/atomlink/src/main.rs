use std::path::PathBuf;
use std::process::ExitCode;

use atomlink::{run, Mode, RunOptions};
use clap::Parser;

/// Run an atomlink scenario.
#[derive(Debug, Parser)]
#[command(name = "atomlink", version)]
struct Cli {
    mode: Mode,
    /// TOML scenario file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory [default: $ATOMLINK_OUT, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir =
        cli.out.or_else(|| std::env::var_os("ATOMLINK_OUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let opts =
        RunOptions { mode: cli.mode, scenario_path: cli.scenario, out_dir, seed: cli.seed, threads: cli.threads };
    match run(&opts) {
        Ok(man) => {
            println!("{}: wrote {} files to {}", man.mode, man.files.len() + 1, opts.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("atomlink: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
