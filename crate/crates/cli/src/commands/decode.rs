//! `gatedsim decode`: frame in, depth PFM + validity PGM + JSON summary out.

use crate::commands::shared::{
    ensure_dir, load_profiles_or_default, parse_eval_mode, FrameArgs,
};
use crate::runctx::{CliError, CliResult};
use gatedsim_core::inversion::{Solver, SolverParams};
use gatedsim_core::io::{write_pfm, write_pgm_mask};
use serde::Serialize;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, value_name = "TOML")]
    pub profiles: Option<PathBuf>,
    #[arg(long, default_value = "chebyshev")]
    pub eval_mode: String,
    /// Fail (exit 4) when the converged fraction falls below this.
    #[arg(long, default_value_t = 0.0)]
    pub min_valid_fraction: f64,
    /// Also write the recovered albedo and ambient PFMs.
    #[arg(long)]
    pub full_estimate: bool,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct DecodeSummary {
    width: usize,
    height: usize,
    convergence_rate: f64,
    median_residual: f64,
    median_depth_m: f64,
    valid_pixels: usize,
}

pub fn run(args: &DecodeArgs) -> CliResult {
    let frame = args.frame.load()?;
    let profiles = load_profiles_or_default(args.profiles.as_deref())?;
    let mode = parse_eval_mode(&args.eval_mode)?;
    ensure_dir(&args.out_dir)?;

    let solver = Solver::new(&profiles, mode, SolverParams::default());
    let map = solver.solve_frame(&frame, None)?;

    let mut residuals: Vec<f64> = Vec::new();
    let mut depths: Vec<f64> = Vec::new();
    if let Some(estimates) = &map.estimates {
        for (idx, est) in estimates.iter().enumerate() {
            if map.validity.data()[idx] {
                residuals.push(est.residual);
                depths.push(est.depth_m);
            }
        }
    }
    let median = |values: &mut Vec<f64>| -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        }
    };
    let mut residuals = residuals;
    let mut depths = depths;
    let summary = DecodeSummary {
        width: map.width(),
        height: map.height(),
        convergence_rate: map.convergence_rate(),
        median_residual: median(&mut residuals),
        median_depth_m: median(&mut depths),
        valid_pixels: map.validity.count_true(),
    };

    write_pfm(&args.out_dir.join("depth.pfm"), &map.depth)?;
    write_pgm_mask(&args.out_dir.join("validity.pgm"), &map.validity)?;
    if args.full_estimate {
        if let Some(estimates) = &map.estimates {
            let (w, h) = (map.width(), map.height());
            let albedo = gatedsim_core::image::Image::from_vec(
                w,
                h,
                estimates.iter().map(|e| e.albedo).collect::<Vec<_>>(),
            )?;
            let ambient = gatedsim_core::image::Image::from_vec(
                w,
                h,
                estimates.iter().map(|e| e.ambient).collect::<Vec<_>>(),
            )?;
            write_pfm(&args.out_dir.join("albedo.pfm"), &albedo)?;
            write_pfm(&args.out_dir.join("ambient.pfm"), &ambient)?;
        }
    }
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::config(format!("serialize summary: {e}")))?;
    let summary_path = args.out_dir.join("decode_summary.json");
    std::fs::write(&summary_path, format!("{json}\n"))
        .map_err(|e| CliError::io(summary_path.display().to_string(), e))?;
    println!("{json}");

    if summary.convergence_rate < args.min_valid_fraction {
        return Err(CliError::numerical(format!(
            "convergence rate {:.4} below required {:.4}",
            summary.convergence_rate, args.min_valid_fraction
        )));
    }
    Ok(())
}
