//! Pinhole camera geometry and the view-synthesis warp.
//!
//! Depth convention: a depth image stores one scalar per pixel that is used
//! literally as the multiplier of the unnormalized ray, `P = d · K⁻¹ (x, y, 1)`,
//! so `P_z = d` (z-depth). The same scalar feeds the range-intensity
//! profiles during rendering and the ground-plane back-projection test; no
//! conversion factor is applied anywhere, and each use is pinned by a test.

use crate::image::{BoolImage, Image, ScalarImage};
use crate::inversion::DepthMap;
use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// Pinhole intrinsics. Pixel centers sit at integer coordinates; the image
/// spans `[0, width-1] x [0, height-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::invalid("focal lengths must be positive and finite"));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Simple default for synthetic scenes: centered principal point,
    /// focal length 0.8×width.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = 0.8 * width as f64;
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Exact closed-form inverse of K.
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Unnormalized ray direction `K⁻¹ (x, y, 1)`.
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }
}

/// Back-projects pixel `(x, y)` at depth `d` to the camera-frame point
/// `d · K⁻¹ (x, y, 1)`.
pub fn backproject(intrinsics: &Intrinsics, x: f64, y: f64, depth_m: f64) -> Vector3<f64> {
    intrinsics.ray(x, y) * depth_m
}

/// Projects a camera-frame point to pixel coordinates (perspective divide).
/// `None` when the point is at or behind the camera plane.
pub fn project(intrinsics: &Intrinsics, point: &Vector3<f64>) -> Option<(f64, f64)> {
    if point.z <= 0.0 {
        return None;
    }
    Some((
        intrinsics.fx * point.x / point.z + intrinsics.cx,
        intrinsics.fy * point.y / point.z + intrinsics.cy,
    ))
}

/// Rigid 6-DoF transform: `P' = R P + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPose {
    const ORTHONORMALITY_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if residual > Self::ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal (|RᵀR − I| = {residual:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > Self::ORTHONORMALITY_TOL {
            return Err(Error::invalid(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(RigidPose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidPose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major R followed by t, as stored in pose files.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        RigidPose::new(rotation, Vector3::new(v[9], v[10], v[11]))
    }
}

/// Per-pixel coordinates in the neighbor frame plus an in-view flag.
#[derive(Debug, Clone)]
pub struct WarpField {
    pub x: ScalarImage,
    pub y: ScalarImage,
    /// False where the depth was invalid or the transformed point has z ≤ 0.
    pub in_view: BoolImage,
}

/// Maps every pixel of the current frame into a neighbor view:
/// `x_n ~ K · X_{t→n} · d · K⁻¹ · x_t` with perspective divide.
///
/// Pixels without a valid depth or whose transformed point lies at or behind
/// the camera are flagged out-of-view, never clamped.
pub fn warp_coordinates(intrinsics: &Intrinsics, pose: &RigidPose, depth: &DepthMap) -> WarpField {
    let (w, h) = (depth.width(), depth.height());
    let mut xs = Image::new(w, h, 0.0);
    let mut ys = Image::new(w, h, 0.0);
    let mut in_view = Image::new(w, h, false);
    // The identity warp must be the identity map exactly, which float
    // round-tripping through K⁻¹ and K cannot guarantee.
    let is_identity =
        *pose.rotation() == Matrix3::identity() && *pose.translation() == Vector3::zeros();
    for y in 0..h {
        for x in 0..w {
            if !*depth.validity.get(x, y) {
                continue;
            }
            let d = *depth.depth.get(x, y);
            if !(d > 0.0) || !d.is_finite() {
                continue;
            }
            if is_identity {
                xs.set(x, y, x as f64);
                ys.set(x, y, y as f64);
                in_view.set(x, y, true);
                continue;
            }
            let p = backproject(intrinsics, x as f64, y as f64, d);
            let q = pose.transform(&p);
            if let Some((xn, yn)) = project(intrinsics, &q) {
                xs.set(x, y, xn);
                ys.set(x, y, yn);
                in_view.set(x, y, true);
            }
        }
    }
    WarpField { x: xs, y: ys, in_view }
}

/// Bilinear sampling of `image` at the warped coordinates. Samples whose
/// 2×2 corner footprint leaves the image (or that were out of view) are
/// marked invalid and excluded from losses.
pub fn sample_bilinear(image: &ScalarImage, coords: &WarpField) -> (ScalarImage, BoolImage) {
    let (w, h) = (coords.x.width(), coords.x.height());
    let mut out = Image::new(w, h, 0.0);
    let mut valid = Image::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*coords.in_view.get(x, y) {
                continue;
            }
            let sx = *coords.x.get(x, y);
            let sy = *coords.y.get(x, y);
            let x0 = sx.floor();
            let y0 = sy.floor();
            let x1 = x0 + 1.0;
            let y1 = y0 + 1.0;
            // Integer coordinates sample exactly; their ceil corner may sit
            // one past the border, so treat the degenerate axis separately.
            let (x0i, x1i) = if sx == x0 {
                (x0 as isize, x0 as isize)
            } else {
                (x0 as isize, x1 as isize)
            };
            let (y0i, y1i) = if sy == y0 {
                (y0 as isize, y0 as isize)
            } else {
                (y0 as isize, y1 as isize)
            };
            let inside = x0i >= 0
                && y0i >= 0
                && (x1i as usize) < image.width()
                && (y1i as usize) < image.height()
                && x1i >= 0
                && y1i >= 0;
            if !inside {
                continue;
            }
            let tx = sx - x0;
            let ty = sy - y0;
            let v00 = *image.get(x0i as usize, y0i as usize);
            let v10 = *image.get(x1i as usize, y0i as usize);
            let v01 = *image.get(x0i as usize, y1i as usize);
            let v11 = *image.get(x1i as usize, y1i as usize);
            let top = v00 * (1.0 - tx) + v10 * tx;
            let bottom = v01 * (1.0 - tx) + v11 * tx;
            out.set(x, y, top * (1.0 - ty) + bottom * ty);
            valid.set(x, y, true);
        }
    }
    (out, valid)
}
