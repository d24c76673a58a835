//! File formats: 16-bit PGM slices, float PFM depth, TOML config documents,
//! plain-text pose rows and ground-truth point lists.

pub mod config;
pub mod pfm;
pub mod pgm;
pub mod points;
pub mod poses;

pub use config::{
    load_intrinsics, load_noise, load_profiles, load_thresholds, save_intrinsics, save_noise,
    save_profiles, save_thresholds,
};
pub use pfm::{read_pfm, write_pfm};
pub use pgm::{read_pgm, read_pgm_mask, write_pgm, write_pgm_mask};
pub use points::{points_from_depth_image, read_points, write_points};
pub use poses::{read_poses, write_poses, PoseEntry};
