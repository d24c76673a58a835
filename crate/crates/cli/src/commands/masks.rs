//! `gatedsim masks`: the full validity-mask stack plus a JSON report.

use crate::commands::shared::{
    ensure_dir, load_depth_map, load_profiles_or_default, parse_eval_mode, FrameArgs,
};
use crate::runctx::{CliError, CliResult};
use gatedsim_core::io::{load_intrinsics, load_thresholds, write_pgm_mask};
use gatedsim_core::masks::{MaskStack, MaskThresholds};
use serde::Serialize;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct MasksArgs {
    #[command(flatten)]
    pub frame: FrameArgs,
    /// Predicted depth PFM (from `decode` or ground truth).
    #[arg(long, value_name = "PFM")]
    pub depth: PathBuf,
    /// Validity PGM; positive finite depths count when omitted.
    #[arg(long, value_name = "PGM")]
    pub validity: Option<PathBuf>,
    #[arg(long, value_name = "TOML")]
    pub intrinsics: PathBuf,
    #[arg(long, value_name = "TOML")]
    pub profiles: Option<PathBuf>,
    /// Threshold config; γ=0.98, θ=0.04, c=0.995 defaults when omitted.
    #[arg(long, value_name = "TOML")]
    pub thresholds: Option<PathBuf>,
    #[arg(long, default_value = "chebyshev")]
    pub eval_mode: String,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct MasksReport {
    pixels: usize,
    count_variance_d: usize,
    count_unsaturated_m: usize,
    count_combined_b_prime: usize,
    count_multipath_e: usize,
    count_valid_b: usize,
    count_s1: usize,
    count_s2: usize,
    count_near_m: usize,
    count_temporal_v: usize,
    crossover_s0_m: Option<f64>,
    crossover_s1_m: Option<f64>,
    median_near_depth_m: Option<f64>,
    theta: f64,
    gamma: f64,
    c_ratio: f64,
}

pub fn run(args: &MasksArgs) -> CliResult {
    let frame = args.frame.load()?;
    let depth = load_depth_map(&args.depth, args.validity.as_deref())?;
    let intrinsics = load_intrinsics(&args.intrinsics)?;
    let profiles = load_profiles_or_default(args.profiles.as_deref())?;
    let thresholds = match &args.thresholds {
        Some(p) => load_thresholds(p)?,
        None => MaskThresholds::default(),
    };
    let mode = parse_eval_mode(&args.eval_mode)?;
    ensure_dir(&args.out_dir)?;

    let stack = MaskStack::compute(&frame, &depth, &intrinsics, &profiles, mode, &thresholds)?;

    let out = |name: &str| args.out_dir.join(name);
    write_pgm_mask(&out("mask_D.pgm"), &stack.modulated)?;
    write_pgm_mask(&out("mask_M.pgm"), &stack.unsaturated)?;
    write_pgm_mask(&out("mask_bprime.pgm"), &stack.combined)?;
    write_pgm_mask(&out("mask_E.pgm"), &stack.multipath)?;
    write_pgm_mask(&out("mask_b.pgm"), &stack.valid)?;
    write_pgm_mask(&out("mask_S1.pgm"), &stack.near_short)?;
    write_pgm_mask(&out("mask_S2.pgm"), &stack.near_mid)?;
    write_pgm_mask(&out("mask_m.pgm"), &stack.near)?;
    write_pgm_mask(&out("mask_v.pgm"), &stack.temporal_valid)?;

    let report = MasksReport {
        pixels: frame.width() * frame.height(),
        count_variance_d: stack.modulated.count_true(),
        count_unsaturated_m: stack.unsaturated.count_true(),
        count_combined_b_prime: stack.combined.count_true(),
        count_multipath_e: stack.multipath.count_true(),
        count_valid_b: stack.valid.count_true(),
        count_s1: stack.near_short.count_true(),
        count_s2: stack.near_mid.count_true(),
        count_near_m: stack.near.count_true(),
        count_temporal_v: stack.temporal_valid.count_true(),
        crossover_s0_m: stack.crossover_s0_m,
        crossover_s1_m: stack.crossover_s1_m,
        median_near_depth_m: stack.median_near_depth_m,
        theta: thresholds.theta,
        gamma: thresholds.gamma,
        c_ratio: thresholds.c_ratio,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("serialize report: {e}")))?;
    let report_path = out("masks_report.json");
    std::fs::write(&report_path, format!("{json}\n"))
        .map_err(|e| CliError::io(report_path.display().to_string(), e))?;
    println!("{json}");
    Ok(())
}
