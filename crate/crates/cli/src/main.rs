//! Command-line pipelines: render, calibrate, decode, masks, warp, loss,
//! eval. Every run is reproducible: all randomness flows from `--seed`, and
//! any `--threads` count produces byte-identical outputs.

mod commands;
mod runctx;

use clap::{Parser, Subcommand};
use runctx::{exit_code_for, CliError};

#[derive(Parser)]
#[command(
    name = "gatedsim",
    version,
    about = "Gated-imaging simulation, depth decoding, masks, losses, and evaluation"
)]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 picks the hardware default. Output bytes do not
    /// depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render gated frames (plus ground truth and poses) from a scene config.
    Render(commands::render::RenderArgs),
    /// Fit Chebyshev profile coefficients from sample tables.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Recover per-pixel depth/albedo/ambient from a gated frame.
    Decode(commands::decode::DecodeArgs),
    /// Compute the full validity mask stack for a frame and depth map.
    Masks(commands::masks::MasksArgs),
    /// Warp an image into a neighbor view using depth and a relative pose.
    Warp(commands::warp::WarpArgs),
    /// Evaluate photometric, cyclic, or temporal consistency losses.
    Loss(commands::loss::LossArgs),
    /// Depth metrics against ground truth, optionally distance-binned.
    Eval(commands::eval::EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("thread pool: {e}");
    }
    let result = match &cli.command {
        Command::Render(args) => commands::render::run(args, cli.seed),
        Command::Calibrate(args) => commands::calibrate::run(args),
        Command::Decode(args) => commands::decode::run(args),
        Command::Masks(args) => commands::masks::run(args),
        Command::Warp(args) => commands::warp::run(args),
        Command::Loss(args) => commands::loss::run(args),
        Command::Eval(args) => commands::eval::run(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            let code = exit_code_for(&err);
            println!("{}", error_json(&err, code));
            std::process::exit(code);
        }
    }
}

fn error_json(err: &CliError, code: i32) -> String {
    let kind = match code {
        2 => "config",
        3 => "io",
        _ => "numerical",
    };
    serde_json::json!({
        "error": {
            "code": code,
            "kind": kind,
            "message": err.to_string(),
        }
    })
    .to_string()
}
