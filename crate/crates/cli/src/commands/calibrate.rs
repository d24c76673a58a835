//! `gatedsim calibrate`: fits order-6 Chebyshev coefficients to per-slice
//! sample tables and writes a profile config.

use crate::commands::shared::ensure_dir;
use crate::runctx::{CliError, CliResult};
use gatedsim_core::io::save_profiles;
use gatedsim_core::profile::{
    fit_chebyshev, GateTiming, ProfileSet, RangeIntensityProfile, DOMAIN_MARGIN_M,
};
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct CalibrateArgs {
    /// Three sample tables (`range_m intensity` per line), slices 0, 1, 2.
    #[arg(long, value_name = "TXT", num_args = 3)]
    pub samples: Vec<PathBuf>,
    /// Visible range `r_min r_max` per slice (6 numbers, slice order).
    /// Inferred from the samples' nonzero span when omitted.
    #[arg(long, value_name = "M", num_args = 6)]
    pub ranges: Option<Vec<f64>>,
    /// Plateau amplitude written into each profile.
    #[arg(long, default_value_t = 1.0)]
    pub peak_response: f64,
    #[arg(long, value_name = "TOML")]
    pub out: PathBuf,
}

fn read_samples(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(CliError::config(format!(
                "{}: line {}: expected 'range intensity'",
                path.display(),
                lineno + 1
            )));
        }
        let r: f64 = fields[0].parse().map_err(|_| {
            CliError::config(format!("{}: line {}: bad range", path.display(), lineno + 1))
        })?;
        let v: f64 = fields[1].parse().map_err(|_| {
            CliError::config(format!(
                "{}: line {}: bad intensity",
                path.display(),
                lineno + 1
            ))
        })?;
        samples.push((r, v));
    }
    Ok(samples)
}

/// Span of samples carrying signal; the whole sample span for flat tables.
fn inferred_visible_range(samples: &[(f64, f64)]) -> Result<(f64, f64), CliError> {
    let peak = samples.iter().map(|s| s.1).fold(0.0f64, f64::max);
    let active: Vec<f64> = samples
        .iter()
        .filter(|s| s.1 > 1e-12 * peak.max(1e-300))
        .map(|s| s.0)
        .collect();
    let source: &[f64] = if active.is_empty() {
        return Err(CliError::numerical(
            "calibration error: all sample intensities are zero".to_string(),
        ));
    } else {
        &active
    };
    let lo = source.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = source.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(CliError::numerical(
            "calibration error: samples do not span a range".to_string(),
        ));
    }
    Ok((lo, hi))
}

pub fn run(args: &CalibrateArgs) -> CliResult {
    if args.samples.len() != 3 {
        return Err(CliError::config("calibrate needs exactly three --samples files"));
    }
    if let Some(r) = &args.ranges {
        if r.len() != 6 {
            return Err(CliError::config("--ranges needs six numbers"));
        }
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    let mut profiles = Vec::with_capacity(3);
    for (i, path) in args.samples.iter().enumerate() {
        let samples = read_samples(path)?;
        if samples.len() < 2 {
            return Err(CliError::Core(gatedsim_core::Error::Calibration(format!(
                "{}: need more than {} sample(s)",
                path.display(),
                samples.len()
            ))));
        }
        let (r_min, r_max) = match &args.ranges {
            Some(r) => (r[2 * i], r[2 * i + 1]),
            None => inferred_visible_range(&samples)?,
        };
        let timing = GateTiming::from_visible_range(r_min, r_max, args.peak_response)?;
        let domain = ((r_min - DOMAIN_MARGIN_M).max(0.0), r_max + DOMAIN_MARGIN_M);
        let coeffs = fit_chebyshev(&samples, domain)?;
        profiles.push(RangeIntensityProfile::new(timing, coeffs, domain, i as u8)?);
    }
    let set = ProfileSet::new([
        profiles[0].clone(),
        profiles[1].clone(),
        profiles[2].clone(),
    ])?;
    save_profiles(&args.out, &set)?;
    Ok(())
}
