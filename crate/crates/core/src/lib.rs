//! Gated-imaging simulation and inverse-rendering toolkit.
//!
//! A gated camera pairs a pulsed flash illuminator with a sensor that only
//! integrates photons arriving inside a delayed temporal gate. Each gate
//! delay yields a *range-intensity profile* `C_i(r)`: the intensity returned
//! from a unit-albedo surface at range `r`. Relative slice intensities
//! therefore encode depth. This crate provides:
//!
//! * [`profile`] — analytic range-intensity profiles (the convolution of a
//!   rectangular gate and pulse) plus their order-6 Chebyshev representation
//!   with derivative access.
//! * [`formation`] — a forward renderer `Z^i = clamp(α·β·C_i(r) + Λ)` with a
//!   deterministic Poisson+Gaussian sensor noise model, and canned test
//!   scenes.
//! * [`inversion`] — per-pixel recovery of `(r̂, α̂, Λ̂)` from a gated frame by
//!   Gauss-Newton on the forward model, seeded by a ratio-based lookup.
//! * [`masks`] — the validity masks used by the consistency losses: variance,
//!   saturation, ground-plane multipath, and the infinity-correction sets.
//! * [`geometry`] — pinhole intrinsics, rigid poses, back-projection, the
//!   view-synthesis warp, and bilinear sampling.
//! * [`losses`] — SSIM/L1 photometric loss, the cyclic gated-consistency
//!   loss, the temporal min-reprojection loss, and analytic depth gradients.
//! * [`metrics`] — RMSE/MAE/ARD/δ depth metrics with distance-binned reports.
//! * [`io`] — 16-bit PGM, float PFM, TOML config documents, pose and point
//!   files.
//!
//! # Example
//!
//! Render a synthetic ramp and invert it back:
//!
//! ```
//! use gatedsim_core::formation::{make_test_scene, render_noiseless, SceneKind, SceneParams};
//! use gatedsim_core::inversion::{Solver, SolverParams};
//! use gatedsim_core::profile::{default_profiles, EvalMode};
//!
//! let profiles = default_profiles();
//! let scene = make_test_scene(SceneKind::DepthRamp, 16, 12, &SceneParams::default())?;
//! let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev)?;
//! let solver = Solver::new(&profiles, EvalMode::Chebyshev, SolverParams::default());
//! let map = solver.solve_frame(&frame, None)?;
//! assert!(map.convergence_rate() > 0.5);
//! # Ok::<(), gatedsim_core::Error>(())
//! ```

pub mod error;
pub mod formation;
pub mod geometry;
pub mod image;
pub mod inversion;
pub mod io;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod profile;
pub mod rng;

pub use error::Error;
pub use image::{BoolImage, Image, ScalarImage};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Convenience alias for fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;
