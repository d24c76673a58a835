//! `gatedsim loss`: photometric, cyclic, or temporal loss as a JSON report,
//! optionally with the analytic depth-gradient PFM for the cyclic loss.

use crate::commands::shared::{
    emit_json, full_mask, load_depth_map, load_profiles_or_default, parse_eval_mode, FrameArgs,
};
use crate::commands::warp::relative_pose;
use crate::runctx::{CliError, CliResult};
use gatedsim_core::io::{
    load_intrinsics, read_pfm, read_pgm, read_pgm_mask, read_poses, write_pfm,
};
use gatedsim_core::losses::{
    cyclic_loss, photometric_loss, temporal_loss, MaskMode, Neighbor, SceneEstimate, SsimParams,
};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct LossArgs {
    /// Which loss to evaluate: photometric | cyclic | temporal.
    #[arg(long)]
    pub kind: String,

    /// Photometric inputs.
    #[arg(long, value_name = "PGM")]
    pub image_a: Option<PathBuf>,
    #[arg(long, value_name = "PGM")]
    pub image_b: Option<PathBuf>,

    /// Cyclic/temporal frame inputs.
    #[command(flatten)]
    pub frame: Option<FrameArgs>,

    /// Cyclic estimate inputs.
    #[arg(long, value_name = "PFM")]
    pub est_depth: Option<PathBuf>,
    #[arg(long, value_name = "PFM")]
    pub est_albedo: Option<PathBuf>,
    #[arg(long, value_name = "PFM")]
    pub est_ambient: Option<PathBuf>,

    /// Temporal inputs: previous/next frame slice PGMs (three each).
    #[arg(long, value_name = "PGM", num_args = 3)]
    pub prev_slices: Option<Vec<PathBuf>>,
    #[arg(long, value_name = "PGM", num_args = 3)]
    pub next_slices: Option<Vec<PathBuf>>,
    #[arg(long, value_name = "PFM")]
    pub depth: Option<PathBuf>,
    #[arg(long, value_name = "PGM")]
    pub validity: Option<PathBuf>,
    #[arg(long, value_name = "TOML")]
    pub intrinsics: Option<PathBuf>,
    #[arg(long, value_name = "TXT")]
    pub poses: Option<PathBuf>,
    /// Frame ids of (previous, current, next) in the pose file.
    #[arg(long, num_args = 3)]
    pub frame_ids: Option<Vec<u64>>,

    /// Mask PGM applied to the loss (b for cyclic, v for temporal).
    #[arg(long, value_name = "PGM")]
    pub mask: Option<PathBuf>,
    #[arg(long, value_name = "TOML")]
    pub profiles: Option<PathBuf>,
    #[arg(long, default_value = "chebyshev")]
    pub eval_mode: String,
    /// literal applies the mask by multiplication as written; restricted
    /// also confines SSIM windows to the mask interior.
    #[arg(long, default_value = "restricted")]
    pub mask_mode: String,
    /// Write the analytic d(loss)/d(depth) PFM (cyclic only).
    #[arg(long, value_name = "PFM")]
    pub gradient_out: Option<PathBuf>,
    /// Write the JSON report here as well as stdout.
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

fn parse_mask_mode(name: &str) -> Result<MaskMode, CliError> {
    match name {
        "literal" => Ok(MaskMode::Literal),
        "restricted" => Ok(MaskMode::Restricted),
        other => Err(CliError::config(format!(
            "unknown mask mode '{other}' (expected 'literal' or 'restricted')"
        ))),
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, kind: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::config(format!("--{flag} is required for --kind {kind}")))
}

pub fn run(args: &LossArgs) -> CliResult {
    let params = SsimParams::default();
    let mask_mode = parse_mask_mode(&args.mask_mode)?;
    match args.kind.as_str() {
        "photometric" => {
            let a = read_pgm(require(&args.image_a, "image-a", "photometric")?)?;
            let b = read_pgm(require(&args.image_b, "image-b", "photometric")?)?;
            let mask = match &args.mask {
                Some(p) => read_pgm_mask(p)?,
                None => full_mask(a.width(), a.height()),
            };
            let report = photometric_loss(&a, &b, &mask, &params, mask_mode)?;
            emit_json(&report, args.out.as_deref())
        }
        "cyclic" => {
            let frame = args
                .frame
                .as_ref()
                .ok_or_else(|| CliError::config("cyclic loss needs the frame PGMs"))?
                .load()?;
            let estimate = SceneEstimate::new(
                read_pfm(require(&args.est_depth, "est-depth", "cyclic")?)?,
                read_pfm(require(&args.est_albedo, "est-albedo", "cyclic")?)?,
                read_pfm(require(&args.est_ambient, "est-ambient", "cyclic")?)?,
            )?;
            let profiles = load_profiles_or_default(args.profiles.as_deref())?;
            let mode = parse_eval_mode(&args.eval_mode)?;
            let mask = match &args.mask {
                Some(p) => read_pgm_mask(p)?,
                None => full_mask(frame.width(), frame.height()),
            };
            let report = cyclic_loss(
                &frame,
                &estimate,
                &profiles,
                mode,
                &mask,
                &params,
                mask_mode,
                args.gradient_out.is_some(),
            )?;
            if let (Some(path), Some(gradient)) = (&args.gradient_out, &report.gradient) {
                write_pfm(path, gradient)?;
            }
            emit_json(&report, args.out.as_deref())
        }
        "temporal" => {
            let frame = args
                .frame
                .as_ref()
                .ok_or_else(|| CliError::config("temporal loss needs the frame PGMs"))?
                .load()?;
            let prev = require(&args.prev_slices, "prev-slices", "temporal")?;
            let next = require(&args.next_slices, "next-slices", "temporal")?;
            let load_neighbor = |paths: &[PathBuf]| -> Result<_, CliError> {
                Ok([read_pgm(&paths[0])?, read_pgm(&paths[1])?, read_pgm(&paths[2])?])
            };
            let prev_slices = load_neighbor(prev)?;
            let next_slices = load_neighbor(next)?;
            // Neighbor frames reuse the current passive as a placeholder;
            // the temporal loss reads slices only.
            let passive = frame.passive.clone();
            let prev_frame = gatedsim_core::formation::GatedFrame::new(
                prev_slices,
                passive.clone(),
                0.0,
                0,
            )?;
            let next_frame =
                gatedsim_core::formation::GatedFrame::new(next_slices, passive, 0.0, 0)?;
            let depth = load_depth_map(
                require(&args.depth, "depth", "temporal")?,
                args.validity.as_deref(),
            )?;
            let intrinsics = load_intrinsics(require(&args.intrinsics, "intrinsics", "temporal")?)?;
            let poses = read_poses(require(&args.poses, "poses", "temporal")?)?;
            let ids = require(&args.frame_ids, "frame-ids", "temporal")?;
            let mask = match &args.mask {
                Some(p) => read_pgm_mask(p)?,
                None => full_mask(frame.width(), frame.height()),
            };
            let neighbors = [
                Neighbor {
                    frame: &prev_frame,
                    pose_to_neighbor: relative_pose(&poses, ids[1], ids[0])?,
                },
                Neighbor {
                    frame: &next_frame,
                    pose_to_neighbor: relative_pose(&poses, ids[1], ids[2])?,
                },
            ];
            let report = temporal_loss(
                &frame, &neighbors, &depth, &mask, &intrinsics, &params, mask_mode,
            )?;
            emit_json(&report, args.out.as_deref())
        }
        other => Err(CliError::config(format!(
            "unknown loss kind '{other}' (expected photometric | cyclic | temporal)"
        ))),
    }
}
