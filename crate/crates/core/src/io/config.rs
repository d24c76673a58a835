//! TOML config documents for profiles, intrinsics, noise, and mask
//! thresholds. Unknown keys are rejected. Floats round-trip through the
//! shortest-representation printer, so a save/load cycle reproduces the
//! original bits.

use crate::formation::NoiseModel;
use crate::geometry::Intrinsics;
use crate::masks::MaskThresholds;
use crate::profile::{GateTiming, ProfileSet, RangeIntensityProfile, CHEB_COEFFS};
use crate::{Error, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileEntry {
    slice_index: u8,
    delay_s: f64,
    gate_duration_s: f64,
    pulse_duration_s: f64,
    peak_response: f64,
    domain_lo_m: f64,
    domain_hi_m: f64,
    cheb_coeffs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    profile: Vec<ProfileEntry>,
}

/// Saves three slice profiles as a profile config document.
pub fn save_profiles(path: &Path, profiles: &ProfileSet) -> Result<()> {
    let doc = ProfileDoc {
        profile: profiles
            .iter()
            .map(|p| ProfileEntry {
                slice_index: p.slice_index,
                delay_s: p.timing.delay_s,
                gate_duration_s: p.timing.gate_duration_s,
                pulse_duration_s: p.timing.pulse_duration_s,
                peak_response: p.timing.peak_response,
                domain_lo_m: p.domain_m.0,
                domain_hi_m: p.domain_m.1,
                cheb_coeffs: p.cheb_coeffs.to_vec(),
            })
            .collect(),
    };
    let text = toml::to_string(&doc)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    write_string(path, &text)
}

/// Loads a profile config document. The three entries must carry slice
/// indices 0, 1, 2 in order.
pub fn load_profiles(path: &Path) -> Result<ProfileSet> {
    let doc: ProfileDoc = parse(path, &read_to_string(path)?)?;
    if doc.profile.len() != 3 {
        return Err(Error::format(
            path.display().to_string(),
            format!("expected 3 profiles, found {}", doc.profile.len()),
        ));
    }
    let mut out = Vec::with_capacity(3);
    for entry in doc.profile {
        if entry.cheb_coeffs.len() != CHEB_COEFFS {
            return Err(Error::format(
                path.display().to_string(),
                format!(
                    "profile {} carries {} coefficients, expected {CHEB_COEFFS}",
                    entry.slice_index,
                    entry.cheb_coeffs.len()
                ),
            ));
        }
        let timing = GateTiming::new(
            entry.delay_s,
            entry.gate_duration_s,
            entry.pulse_duration_s,
            entry.peak_response,
        )?;
        let mut coeffs = [0.0; CHEB_COEFFS];
        coeffs.copy_from_slice(&entry.cheb_coeffs);
        out.push(RangeIntensityProfile::new(
            timing,
            coeffs,
            (entry.domain_lo_m, entry.domain_hi_m),
            entry.slice_index,
        )?);
    }
    ProfileSet::new([out[0].clone(), out[1].clone(), out[2].clone()])
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsDoc {
    intrinsics: IntrinsicsEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsEntry {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

pub fn save_intrinsics(path: &Path, k: &Intrinsics) -> Result<()> {
    let doc = IntrinsicsDoc {
        intrinsics: IntrinsicsEntry {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        },
    };
    let text = toml::to_string(&doc)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    write_string(path, &text)
}

pub fn load_intrinsics(path: &Path) -> Result<Intrinsics> {
    let doc: IntrinsicsDoc = parse(path, &read_to_string(path)?)?;
    let e = doc.intrinsics;
    Intrinsics::new(e.fx, e.fy, e.cx, e.cy, e.width, e.height)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    noise: NoiseEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseEntry {
    gaussian_sigma: f64,
    /// `inf` disables the Poisson term.
    poisson_scale: f64,
    seed: u64,
}

pub fn save_noise(path: &Path, noise: &NoiseModel) -> Result<()> {
    let doc = NoiseDoc {
        noise: NoiseEntry {
            gaussian_sigma: noise.gaussian_sigma,
            poisson_scale: noise.poisson_scale,
            seed: noise.seed,
        },
    };
    let text = toml::to_string(&doc)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    write_string(path, &text)
}

pub fn load_noise(path: &Path) -> Result<NoiseModel> {
    let doc: NoiseDoc = parse(path, &read_to_string(path)?)?;
    NoiseModel::new(doc.noise.gaussian_sigma, doc.noise.poisson_scale, doc.noise.seed)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsDoc {
    thresholds: ThresholdsEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsEntry {
    theta: f64,
    gamma: f64,
    c_ratio: f64,
    plane_height_h: f64,
    plane_normal: [f64; 3],
}

pub fn save_thresholds(path: &Path, t: &MaskThresholds) -> Result<()> {
    let doc = ThresholdsDoc {
        thresholds: ThresholdsEntry {
            theta: t.theta,
            gamma: t.gamma,
            c_ratio: t.c_ratio,
            plane_height_h: t.plane_height_h,
            plane_normal: [t.plane_normal.x, t.plane_normal.y, t.plane_normal.z],
        },
    };
    let text = toml::to_string(&doc)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    write_string(path, &text)
}

pub fn load_thresholds(path: &Path) -> Result<MaskThresholds> {
    let doc: ThresholdsDoc = parse(path, &read_to_string(path)?)?;
    let e = doc.thresholds;
    MaskThresholds::new(
        e.theta,
        e.gamma,
        e.c_ratio,
        e.plane_height_h,
        Vector3::new(e.plane_normal[0], e.plane_normal[1], e.plane_normal[2]),
    )
}
