//! `gatedsim warp`: resample an image into the current view from a neighbor.

use crate::commands::shared::{ensure_dir, load_depth_map};
use crate::runctx::{CliError, CliResult};
use gatedsim_core::geometry::{sample_bilinear, warp_coordinates, RigidPose};
use gatedsim_core::io::{load_intrinsics, read_pgm, read_poses, write_pgm, write_pgm_mask};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct WarpArgs {
    /// Image captured in the neighbor view (PGM) to pull into this view.
    #[arg(long, value_name = "PGM")]
    pub image: PathBuf,
    /// Depth of the current view (PFM).
    #[arg(long, value_name = "PFM")]
    pub depth: PathBuf,
    #[arg(long, value_name = "PGM")]
    pub validity: Option<PathBuf>,
    #[arg(long, value_name = "TOML")]
    pub intrinsics: PathBuf,
    /// Camera-to-world pose rows.
    #[arg(long, value_name = "TXT")]
    pub poses: PathBuf,
    /// Frame id of the current view in the pose file.
    #[arg(long)]
    pub from: u64,
    /// Frame id of the neighbor view in the pose file.
    #[arg(long)]
    pub to: u64,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

/// Relative pose mapping `from`-frame points into the `to` frame:
/// `pose_to⁻¹ ∘ pose_from` over camera-to-world rows.
pub fn relative_pose(
    poses: &[gatedsim_core::io::PoseEntry],
    from: u64,
    to: u64,
) -> Result<RigidPose, CliError> {
    let find = |id: u64| {
        poses
            .iter()
            .find(|p| p.frame_id == id)
            .map(|p| p.pose.clone())
            .ok_or_else(|| CliError::config(format!("frame id {id} not in pose file")))
    };
    let pose_from = find(from)?;
    let pose_to = find(to)?;
    Ok(pose_to.inverse().compose(&pose_from))
}

pub fn run(args: &WarpArgs) -> CliResult {
    let image = read_pgm(&args.image)?;
    let depth = load_depth_map(&args.depth, args.validity.as_deref())?;
    let intrinsics = load_intrinsics(&args.intrinsics)?;
    let poses = read_poses(&args.poses)?;
    let pose = relative_pose(&poses, args.from, args.to)?;
    ensure_dir(&args.out_dir)?;

    let coords = warp_coordinates(&intrinsics, &pose, &depth);
    let (warped, valid) = sample_bilinear(&image, &coords);
    write_pgm(&args.out_dir.join("warped.pgm"), &warped)?;
    write_pgm_mask(&args.out_dir.join("warp_valid.pgm"), &valid)?;
    Ok(())
}
