//! Helpers shared by the subcommands.

use crate::runctx::{CliError, CliResult};
use gatedsim_core::formation::GatedFrame;
use gatedsim_core::image::Image;
use gatedsim_core::inversion::DepthMap;
use gatedsim_core::io::{read_pfm, read_pgm, read_pgm_mask};
use gatedsim_core::profile::{default_profiles, EvalMode, ProfileSet};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Frame input: the three slice PGMs plus the passive PGM.
#[derive(clap::Args, Debug)]
pub struct FrameArgs {
    #[arg(long, value_name = "PGM")]
    pub slice0: PathBuf,
    #[arg(long, value_name = "PGM")]
    pub slice1: PathBuf,
    #[arg(long, value_name = "PGM")]
    pub slice2: PathBuf,
    #[arg(long, value_name = "PGM")]
    pub passive: PathBuf,
}

impl FrameArgs {
    pub fn load(&self) -> Result<GatedFrame, CliError> {
        let frame = GatedFrame::new(
            [
                read_pgm(&self.slice0)?,
                read_pgm(&self.slice1)?,
                read_pgm(&self.slice2)?,
            ],
            read_pgm(&self.passive)?,
            0.0,
            0,
        )?;
        Ok(frame)
    }
}

/// Loads a depth PFM plus optional validity PGM; without one, pixels with
/// positive finite depth count as valid.
pub fn load_depth_map(depth: &Path, validity: Option<&Path>) -> Result<DepthMap, CliError> {
    let depth_img = read_pfm(depth)?;
    let validity_img = match validity {
        Some(p) => read_pgm_mask(p)?,
        None => depth_img.map(|&d| d.is_finite() && d > 0.0),
    };
    Ok(DepthMap::new(depth_img, validity_img)?)
}

/// Loads a profile config, or the built-in defaults when no path is given.
pub fn load_profiles_or_default(path: Option<&Path>) -> Result<ProfileSet, CliError> {
    match path {
        Some(p) => Ok(gatedsim_core::io::load_profiles(p)?),
        None => Ok(default_profiles()),
    }
}

pub fn parse_eval_mode(name: &str) -> Result<EvalMode, CliError> {
    match name {
        "chebyshev" => Ok(EvalMode::Chebyshev),
        "analytic" => Ok(EvalMode::Analytic),
        other => Err(CliError::config(format!(
            "unknown eval mode '{other}' (expected 'chebyshev' or 'analytic')"
        ))),
    }
}

/// Serializes a report to pretty JSON, writes it to `path` when given, and
/// always prints it to stdout.
pub fn emit_json<T: Serialize>(report: &T, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::config(format!("serialize report: {e}")))?;
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n"))
            .map_err(|e| CliError::io(p.display().to_string(), e))?;
    }
    println!("{text}");
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

/// All-true mask sized like the reference image.
pub fn full_mask(width: usize, height: usize) -> gatedsim_core::image::BoolImage {
    Image::new(width, height, true)
}
