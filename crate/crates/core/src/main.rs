use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eigenwave::cli::{execute, exit_code, Command, RunOptions};

#[derive(Parser)]
#[command(name = "eigenwave", version, about = "Frequency-domain FWI with diffusion-eigenvector model decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a synthetic model and its (optionally noisy) dataset
    Synth(Common),
    /// Project a model on eigenbases over a grid of scalings and sizes
    Decompose(Common),
    /// Forward-model receiver data and wavefield quick-looks
    Forward(Common),
    /// Run the frequency / basis-size inversion schedule
    Invert(Common),
    /// Write an eigenbasis archive and its eigenvalues
    DumpBasis(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (command, args) = match Cli::parse().command {
        Cmd::Synth(a) => (Command::Synth, a),
        Cmd::Decompose(a) => (Command::Decompose, a),
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Invert(a) => (Command::Invert, a),
        Cmd::DumpBasis(a) => (Command::DumpBasis, a),
    };
    let opts = RunOptions {
        threads: args.threads,
        seed: args.seed,
    };
    match execute(command, &args.config, &opts) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
