//! `gatedsim render`: scene config in, gated frames + ground truth out.

use crate::commands::shared::{ensure_dir, load_profiles_or_default, parse_eval_mode};
use crate::runctx::{CliError, CliResult};
use gatedsim_core::formation::{
    apply_noise, make_test_scene, render_noiseless, NoiseModel, SceneKind, SceneParams,
};
use gatedsim_core::geometry::{Intrinsics, RigidPose};
use gatedsim_core::io::{save_intrinsics, write_pfm, write_pgm, write_poses, PoseEntry};
use gatedsim_core::rng::derive_seed;
use nalgebra::Vector3;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct RenderArgs {
    /// Scene config document (TOML).
    #[arg(long, value_name = "TOML")]
    pub scene: PathBuf,
    /// Profile config; built-in defaults when omitted.
    #[arg(long, value_name = "TOML")]
    pub profiles: Option<PathBuf>,
    /// Profile representation used for rendering.
    #[arg(long, default_value = "chebyshev")]
    pub eval_mode: String,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    scene: SceneSection,
    noise: Option<NoiseSection>,
    sequence: Option<SequenceSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSection {
    kind: String,
    width: usize,
    height: usize,
    albedo: Option<f64>,
    ambient: Option<f64>,
    distance_m: Option<f64>,
    near_m: Option<f64>,
    far_m: Option<f64>,
    camera_height_m: Option<f64>,
    focal_px: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    gaussian_sigma: f64,
    poisson_scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceSection {
    frames: usize,
    dz_per_frame_m: f64,
}

impl SceneSection {
    fn params(&self, camera_advance_m: f64) -> SceneParams {
        let defaults = SceneParams::default();
        SceneParams {
            albedo: self.albedo.unwrap_or(defaults.albedo),
            ambient: self.ambient.unwrap_or(defaults.ambient),
            distance_m: self.distance_m.unwrap_or(defaults.distance_m),
            near_m: self.near_m.unwrap_or(defaults.near_m),
            far_m: self.far_m.unwrap_or(defaults.far_m),
            camera_height_m: self.camera_height_m.unwrap_or(defaults.camera_height_m),
            camera_advance_m,
            focal_px: self.focal_px,
        }
    }
}

pub fn run(args: &RenderArgs, seed: u64) -> CliResult {
    let text = std::fs::read_to_string(&args.scene)
        .map_err(|e| CliError::io(args.scene.display().to_string(), e))?;
    let doc: SceneDoc =
        toml::from_str(&text).map_err(|e| CliError::config(format!("scene config: {e}")))?;
    let kind = SceneKind::parse(&doc.scene.kind)?;
    let mode = parse_eval_mode(&args.eval_mode)?;
    let profiles = load_profiles_or_default(args.profiles.as_deref())?;
    ensure_dir(&args.out_dir)?;

    let (frames, dz) = match &doc.sequence {
        Some(seq) => {
            if seq.frames == 0 {
                return Err(CliError::config("sequence.frames must be positive"));
            }
            (seq.frames, seq.dz_per_frame_m)
        }
        None => (1, 0.0),
    };

    let mut pose_rows = Vec::with_capacity(frames);
    for k in 0..frames {
        let advance = dz * k as f64;
        let scene = make_test_scene(kind, doc.scene.width, doc.scene.height, &doc.scene.params(advance))?;
        let mut frame = render_noiseless(&scene, &profiles, mode)?;
        frame.frame_id = k as u64;
        frame.timestamp_s = 0.1 * k as f64; // 10 Hz capture cadence

        if let Some(noise) = &doc.noise {
            // One independent noise stream per frame, all derived from --seed.
            let frame_seed = derive_seed(seed, &[k as u64]);
            let model = NoiseModel::new(noise.gaussian_sigma, noise.poisson_scale, frame_seed)?;
            frame = apply_noise(&frame, &model);
        }
        let stem = |name: &str| args.out_dir.join(format!("frame_{k:03}_{name}"));
        for (i, slice) in frame.slices.iter().enumerate() {
            write_pgm(&stem(&format!("slice{i}.pgm")), slice)?;
        }
        write_pgm(&stem("passive.pgm"), &frame.passive)?;
        write_pfm(&stem("depth.pfm"), scene.depth())?;
        // Camera-to-world: the camera advanced k·dz along +z.
        pose_rows.push(PoseEntry {
            frame_id: k as u64,
            pose: RigidPose::from_translation(Vector3::new(0.0, 0.0, advance)),
        });
    }
    write_poses(&args.out_dir.join("poses.txt"), &pose_rows)?;
    let intr = Intrinsics::default_for(doc.scene.width, doc.scene.height);
    save_intrinsics(&args.out_dir.join("intrinsics.toml"), &intr)?;
    Ok(())
}
