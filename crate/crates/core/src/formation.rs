//! Forward image formation: renders synthetic gated frames from a scene.
//!
//! Per pixel, slice `i` measures `Z^i = clamp(α·β·C_i(r) + Λ, 0, 1)` and the
//! passive exposure measures `Z^p = clamp(Λ, 0, 1)`; the hard clamp is the
//! saturation model on normalized intensities. Sensor noise adds a
//! signal-dependent Poisson term and a Gaussian term.

use crate::image::{Image, ScalarImage};
use crate::profile::{EvalMode, ProfileSet};
use crate::rng::CounterRng;
use crate::{Error, Result};
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

/// Per-pixel ground truth consumed by the renderer.
///
/// `albedo` is the surface reflectance (physically in [0, 1]; retroreflective
/// targets exceed 1 and are accepted), `depth` the per-pixel range in metres,
/// `ambient` the unmodulated contribution in normalized intensity units, and
/// `attenuation_beta` the path attenuation in (0, 1], unity without
/// participating media.
#[derive(Debug, Clone)]
pub struct SceneModel {
    albedo: ScalarImage,
    depth: ScalarImage,
    ambient: ScalarImage,
    attenuation_beta: ScalarImage,
}

impl SceneModel {
    pub fn new(
        albedo: ScalarImage,
        depth: ScalarImage,
        ambient: ScalarImage,
        attenuation_beta: Option<ScalarImage>,
    ) -> Result<Self> {
        albedo.expect_same_size(&depth, "depth")?;
        albedo.expect_same_size(&ambient, "ambient")?;
        let beta = match attenuation_beta {
            Some(b) => {
                albedo.expect_same_size(&b, "attenuation_beta")?;
                b
            }
            None => Image::new(albedo.width(), albedo.height(), 1.0),
        };
        for &a in albedo.data() {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::invalid("albedo must be finite and >= 0"));
            }
        }
        for &d in depth.data() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::invalid("depth must be finite and strictly positive"));
            }
        }
        for &l in ambient.data() {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::invalid("ambient must be finite and >= 0"));
            }
        }
        for &b in beta.data() {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::invalid("attenuation beta must lie in (0, 1]"));
            }
        }
        Ok(SceneModel {
            albedo,
            depth,
            ambient,
            attenuation_beta: beta,
        })
    }

    pub fn width(&self) -> usize {
        self.albedo.width()
    }

    pub fn height(&self) -> usize {
        self.albedo.height()
    }

    pub fn albedo(&self) -> &ScalarImage {
        &self.albedo
    }

    pub fn depth(&self) -> &ScalarImage {
        &self.depth
    }

    pub fn ambient(&self) -> &ScalarImage {
        &self.ambient
    }

    pub fn attenuation_beta(&self) -> &ScalarImage {
        &self.attenuation_beta
    }
}

/// Sensor noise: `Z' = Poisson(poisson_scale · Z)/poisson_scale + N(0, σ)`,
/// clamped to [0, 1]. `poisson_scale = ∞` together with `gaussian_sigma = 0`
/// is the noiseless sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    pub poisson_scale: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(gaussian_sigma: f64, poisson_scale: f64, seed: u64) -> Result<Self> {
        if !(gaussian_sigma >= 0.0) || !gaussian_sigma.is_finite() {
            return Err(Error::invalid("gaussian_sigma must be finite and >= 0"));
        }
        if !(poisson_scale > 0.0) {
            return Err(Error::invalid("poisson_scale must be > 0 (infinity disables it)"));
        }
        Ok(NoiseModel {
            gaussian_sigma,
            poisson_scale,
            seed,
        })
    }

    /// Sensible CMOS-like defaults: σ = 0.002, 5000 photons per unit intensity.
    pub fn default_with_seed(seed: u64) -> Self {
        NoiseModel {
            gaussian_sigma: 0.002,
            poisson_scale: 5000.0,
            seed,
        }
    }

    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            gaussian_sigma: 0.0,
            poisson_scale: f64::INFINITY,
            seed,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.poisson_scale.is_infinite()
    }
}

/// Three gated slices plus the unmodulated passive exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFrame {
    pub slices: [ScalarImage; 3],
    pub passive: ScalarImage,
    pub timestamp_s: f64,
    pub frame_id: u64,
}

impl GatedFrame {
    pub fn new(
        slices: [ScalarImage; 3],
        passive: ScalarImage,
        timestamp_s: f64,
        frame_id: u64,
    ) -> Result<Self> {
        for s in &slices {
            passive.expect_same_size(s, "gated slice")?;
        }
        for img in slices.iter().chain(std::iter::once(&passive)) {
            for &v in img.data() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid("frame intensities must lie in [0, 1]"));
                }
            }
        }
        Ok(GatedFrame {
            slices,
            passive,
            timestamp_s,
            frame_id,
        })
    }

    pub fn width(&self) -> usize {
        self.passive.width()
    }

    pub fn height(&self) -> usize {
        self.passive.height()
    }
}

/// Renders a noiseless frame: `Z^i = clamp(α·β·C_i(r) + Λ)`, `Z^p = clamp(Λ)`.
pub fn render_noiseless(
    scene: &SceneModel,
    profiles: &ProfileSet,
    mode: EvalMode,
) -> Result<GatedFrame> {
    let (w, h) = (scene.width(), scene.height());
    let render_slice = |i: usize| -> ScalarImage {
        let mut data = vec![0.0; w * h];
        data.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let alpha = scene.albedo.data()[idx];
            let beta = scene.attenuation_beta.data()[idx];
            let r = scene.depth.data()[idx];
            let lam = scene.ambient.data()[idx];
            let c = profiles.slice(i).eval(r, mode);
            *out = (alpha * beta * c + lam).clamp(0.0, 1.0);
        });
        Image::from_vec(w, h, data).expect("sized buffer")
    };
    let slices = [render_slice(0), render_slice(1), render_slice(2)];
    let passive = scene.ambient.map(|&l| l.clamp(0.0, 1.0));
    GatedFrame::new(slices, passive, 0.0, 0)
}

/// Applies the noise model to every slice and the passive image.
///
/// Each (image, pixel) pair draws from its own counter-based stream keyed by
/// the seed, so output is identical for any pixel evaluation order. The
/// noiseless sentinel returns the input unchanged.
pub fn apply_noise(frame: &GatedFrame, noise: &NoiseModel) -> GatedFrame {
    if noise.is_noiseless() {
        return frame.clone();
    }
    let noisy_image = |img: &ScalarImage, image_idx: u64| -> ScalarImage {
        let mut data = img.data().to_vec();
        data.par_iter_mut().enumerate().for_each(|(idx, z)| {
            let mut rng = CounterRng::for_stream(noise.seed, &[image_idx, idx as u64]);
            let mut value = *z;
            if noise.poisson_scale.is_finite() {
                let rate = noise.poisson_scale * value;
                // Poisson(0) is identically zero.
                let counts = if rate > 0.0 {
                    Poisson::new(rate).expect("positive rate").sample(&mut rng)
                } else {
                    0.0
                };
                value = counts / noise.poisson_scale;
            }
            if noise.gaussian_sigma > 0.0 {
                value += Normal::new(0.0, noise.gaussian_sigma)
                    .expect("valid sigma")
                    .sample(&mut rng);
            }
            *z = value.clamp(0.0, 1.0);
        });
        Image::from_vec(img.width(), img.height(), data).expect("sized buffer")
    };
    GatedFrame {
        slices: [
            noisy_image(&frame.slices[0], 0),
            noisy_image(&frame.slices[1], 1),
            noisy_image(&frame.slices[2], 2),
        ],
        passive: noisy_image(&frame.passive, 3),
        timestamp_s: frame.timestamp_s,
        frame_id: frame.frame_id,
    }
}

/// Canned deterministic test scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Frontal wall at `distance_m`.
    FlatWall,
    /// Depth increasing linearly down the rows from `near_m` to `far_m`.
    DepthRamp,
    /// Background wall with three boxes at different depths and albedos.
    Boxes,
    /// Camera at `camera_height_m` above a ground plane; sky above the horizon.
    GroundPlane,
    /// A super-unit reflective sign plus a multipath-contaminated bright
    /// ground stripe whose stored depth carries the sign's pulse distance.
    Retroreflector,
}

impl SceneKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "flat_wall" => Ok(SceneKind::FlatWall),
            "depth_ramp" => Ok(SceneKind::DepthRamp),
            "boxes" => Ok(SceneKind::Boxes),
            "ground_plane" => Ok(SceneKind::GroundPlane),
            "retroreflector" => Ok(SceneKind::Retroreflector),
            other => Err(Error::invalid(format!("unknown scene kind '{other}'"))),
        }
    }
}

/// Parameters shared by the scene generators. Fields irrelevant to a given
/// kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Base surface albedo.
    pub albedo: f64,
    /// Uniform ambient level.
    pub ambient: f64,
    /// Wall distance for `FlatWall`.
    pub distance_m: f64,
    /// Ramp endpoints for `DepthRamp`; also the far background for the rest.
    pub near_m: f64,
    pub far_m: f64,
    /// Camera height above the ground plane.
    pub camera_height_m: f64,
    /// Camera translation along +z applied to scene depths (sequences).
    pub camera_advance_m: f64,
    /// Vertical focal length in pixels for ray geometry; defaults to 0.8×width.
    pub focal_px: Option<f64>,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            albedo: 0.6,
            ambient: 0.05,
            distance_m: 50.0,
            near_m: 5.0,
            far_m: 170.0,
            camera_height_m: 1.3,
            camera_advance_m: 0.0,
            focal_px: None,
        }
    }
}

/// Builds one of the documented deterministic scenes.
pub fn make_test_scene(
    kind: SceneKind,
    width: usize,
    height: usize,
    params: &SceneParams,
) -> Result<SceneModel> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("scene dimensions must be positive"));
    }
    if !(params.albedo >= 0.0) {
        return Err(Error::invalid("albedo must be >= 0"));
    }
    if !(params.ambient >= 0.0) {
        return Err(Error::invalid("ambient must be >= 0"));
    }
    let ambient = Image::new(width, height, params.ambient);
    let focal = params.focal_px.unwrap_or(0.8 * width as f64);
    let cy = (height as f64 - 1.0) / 2.0;

    match kind {
        SceneKind::FlatWall => {
            let d = params.distance_m - params.camera_advance_m;
            if !(d > 0.0) {
                return Err(Error::invalid("flat wall must stay in front of the camera"));
            }
            SceneModel::new(
                Image::new(width, height, params.albedo),
                Image::new(width, height, d),
                ambient,
                None,
            )
        }
        SceneKind::DepthRamp => {
            if !(params.near_m > 0.0 && params.near_m < params.far_m) {
                return Err(Error::invalid("need 0 < near < far for the ramp"));
            }
            let depth = Image::from_fn(width, height, |_, y| {
                let t = if height > 1 {
                    y as f64 / (height as f64 - 1.0)
                } else {
                    0.0
                };
                let d = params.near_m + (params.far_m - params.near_m) * t
                    - params.camera_advance_m;
                d.max(0.1)
            });
            SceneModel::new(Image::new(width, height, params.albedo), depth, ambient, None)
        }
        SceneKind::Boxes => {
            if !(params.near_m > 0.0 && params.near_m < params.far_m) {
                return Err(Error::invalid("need 0 < near < far for boxes"));
            }
            let span = params.far_m - params.near_m;
            // (x0, y0, x1, y1) as image fractions, depth fraction, albedo.
            let boxes = [
                (0.10, 0.25, 0.30, 0.70, 0.25, 0.3),
                (0.40, 0.35, 0.60, 0.80, 0.50, 0.6),
                (0.70, 0.15, 0.90, 0.55, 0.75, 0.9),
            ];
            let mut depth = Image::new(width, height, params.far_m);
            let mut albedo = Image::new(width, height, params.albedo);
            for y in 0..height {
                for x in 0..width {
                    let fx = x as f64 / width as f64;
                    let fy = y as f64 / height as f64;
                    for &(x0, y0, x1, y1, df, a) in &boxes {
                        if fx >= x0 && fx < x1 && fy >= y0 && fy < y1 {
                            depth.set(x, y, params.near_m + df * span);
                            albedo.set(x, y, a);
                        }
                    }
                }
            }
            SceneModel::new(albedo, depth, ambient, None)
        }
        SceneKind::GroundPlane => {
            if !(params.camera_height_m > 0.0) {
                return Err(Error::invalid("camera height must be positive"));
            }
            let depth = Image::from_fn(width, height, |_, y| {
                ground_or_sky_depth(y, cy, focal, params.camera_height_m, params.far_m)
            });
            SceneModel::new(Image::new(width, height, params.albedo), depth, ambient, None)
        }
        SceneKind::Retroreflector => {
            let wall = 66.0 - params.camera_advance_m;
            if !(wall > 0.0) {
                return Err(Error::invalid("retroreflector wall behind camera"));
            }
            let mut depth = Image::from_fn(width, height, |_, y| {
                let d = ground_or_sky_depth(y, cy, focal, params.camera_height_m, wall);
                d
            });
            let mut albedo = Image::new(width, height, params.albedo);
            // Retroreflective sign: all three gates are active near 66 m, so a
            // super-unit reflector saturates every slice there.
            let (sx0, sx1) = (width * 2 / 5, width * 3 / 5);
            let (sy0, sy1) = (height / 4, height * 2 / 5);
            // Bright ground stripe carrying the sign's multipath distance.
            let (gy0, gy1) = (height * 4 / 5, height * 9 / 10);
            for y in 0..height {
                for x in 0..width {
                    if x >= sx0 && x < sx1 && y >= sy0 && y < sy1 {
                        depth.set(x, y, wall);
                        albedo.set(x, y, 5.0);
                    } else if y >= gy0 && y < gy1 {
                        depth.set(x, y, wall);
                        albedo.set(x, y, 0.9);
                    }
                }
            }
            SceneModel::new(albedo, depth, ambient, None)
        }
    }
}

/// Depth of the ground plane seen through image row `y`, nudged so that
/// `depth · v <= height` holds exactly (points land on, never below, the
/// plane despite rounding); rows at or above the horizon get `far`.
fn ground_or_sky_depth(y: usize, cy: f64, focal: f64, height_m: f64, far_m: f64) -> f64 {
    let v = (y as f64 - cy) / focal;
    if v > height_m / far_m {
        let mut d = height_m / v;
        while d * v > height_m {
            d = f64::next_down(d);
        }
        d
    } else {
        far_m
    }
}
