//! Photometric, cyclic gated-consistency, and temporal consistency losses.
//!
//! The per-pixel photometric loss is `0.85·(1−SSIM)/2 + 0.15·|z − ẑ|` with a
//! uniform (box) SSIM window and valid-window border cropping. The cyclic
//! loss reconstructs every gated slice from an estimate via
//! `Ẑⁱ = α̂·C_i(r̂) + Λ̂` (unclamped, so it stays differentiable), masks both
//! sides with `b`, sums the three slice losses, and adds an unmasked ambient
//! term against the passive frame. The temporal loss warps each neighbor
//! into the current view and keeps the per-pixel minimum of the
//! summed-over-slices loss across the two neighbors.
//!
//! Mask handling comes in two variants. `Literal` multiplies both images by
//! the mask before windowing, exactly as the loss is written. `Restricted`
//! (the default) computes window statistics on the raw images and averages
//! only over pixels whose whole window lies inside the mask, so masked-out
//! zeros cannot dilute the SSIM statistics. Aggregation is the mean over the
//! valid pixel set in both variants, reduced with fixed-order pairwise
//! summation.

use crate::formation::GatedFrame;
use crate::geometry::{sample_bilinear, warp_coordinates, Intrinsics, RigidPose};
use crate::image::{pairwise_sum, BoolImage, Image, IntegralImage, ScalarImage};
use crate::inversion::DepthMap;
use crate::profile::{EvalMode, ProfileSet};
use crate::{Error, Result};

/// SSIM window and stabilization constants on the [0, 1] intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Odd window edge length in pixels.
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    pub fn new(window: usize, c1: f64, c2: f64) -> Result<Self> {
        if window < 3 || window % 2 == 0 {
            return Err(Error::invalid("SSIM window must be odd and >= 3"));
        }
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::invalid("SSIM constants must be positive"));
        }
        Ok(SsimParams { window, c1, c2 })
    }
}

impl Default for SsimParams {
    /// Window 7, c1 = 0.01², c2 = 0.03².
    fn default() -> Self {
        SsimParams {
            window: 7,
            c1: 1e-4,
            c2: 9e-4,
        }
    }
}

/// How a mask enters the photometric loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// Multiply both images by the mask, then window over everything inside
    /// the mask (windows may straddle the mask boundary).
    Literal,
    /// Window over raw images; aggregate only pixels whose full window lies
    /// inside the mask.
    #[default]
    Restricted,
}

/// Weights of the photometric loss `0.85·(1−SSIM)/2 + 0.15·L1`.
pub const SSIM_WEIGHT: f64 = 0.85;
pub const L1_WEIGHT: f64 = 0.15;

/// Scalar loss plus its decomposition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LossReport {
    pub total: f64,
    pub per_slice: [f64; 3],
    pub ambient_term: f64,
    pub valid_pixel_count: usize,
    /// True when no pixel survived masking; the affected terms are zero.
    pub empty_mask: bool,
    /// d total / d depth, when requested.
    #[serde(skip)]
    pub gradient: Option<ScalarImage>,
}

impl LossReport {
    fn scalar(total: f64, count: usize, empty: bool) -> Self {
        LossReport {
            total,
            per_slice: [0.0; 3],
            ambient_term: 0.0,
            valid_pixel_count: count,
            empty_mask: empty,
            gradient: None,
        }
    }
}

/// Windowed box statistics for an image pair.
struct WindowStats {
    mean_x: ScalarImage,
    mean_y: ScalarImage,
    var_x: ScalarImage,
    var_y: ScalarImage,
    cov: ScalarImage,
    /// True where the full window fits in the image.
    window_valid: BoolImage,
}

fn window_stats(x: &ScalarImage, y: &ScalarImage, params: &SsimParams) -> WindowStats {
    let (w, h) = (x.width(), x.height());
    let rad = params.window / 2;
    let n = (params.window * params.window) as f64;
    let ix = IntegralImage::build(x, |&v| v);
    let iy = IntegralImage::build(y, |&v| v);
    let ixx = IntegralImage::build(x, |&v| v * v);
    let iyy = IntegralImage::build(y, |&v| v * v);
    let ixy_src: Vec<f64> = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| a * b)
        .collect();
    let ixy = IntegralImage::build(&Image::from_vec(w, h, ixy_src).expect("sized"), |&v| v);

    let mut mean_x = Image::new(w, h, 0.0);
    let mut mean_y = Image::new(w, h, 0.0);
    let mut var_x = Image::new(w, h, 0.0);
    let mut var_y = Image::new(w, h, 0.0);
    let mut cov = Image::new(w, h, 0.0);
    let mut window_valid = Image::new(w, h, false);
    if w < params.window || h < params.window {
        return WindowStats {
            mean_x,
            mean_y,
            var_x,
            var_y,
            cov,
            window_valid,
        };
    }
    for py in rad..h - rad {
        for px in rad..w - rad {
            let (x0, y0, x1, y1) = (px - rad, py - rad, px + rad, py + rad);
            let mx = ix.rect_sum(x0, y0, x1, y1) / n;
            let my = iy.rect_sum(x0, y0, x1, y1) / n;
            mean_x.set(px, py, mx);
            mean_y.set(px, py, my);
            var_x.set(px, py, (ixx.rect_sum(x0, y0, x1, y1) / n - mx * mx).max(0.0));
            var_y.set(px, py, (iyy.rect_sum(x0, y0, x1, y1) / n - my * my).max(0.0));
            cov.set(px, py, ixy.rect_sum(x0, y0, x1, y1) / n - mx * my);
            window_valid.set(px, py, true);
        }
    }
    WindowStats {
        mean_x,
        mean_y,
        var_x,
        var_y,
        cov,
        window_valid,
    }
}

/// Windowed SSIM map of two images. The boolean image is true where the full
/// window fits (valid-window cropping); the map is zero outside it.
pub fn ssim(a: &ScalarImage, b: &ScalarImage, params: &SsimParams) -> (ScalarImage, BoolImage) {
    assert!(a.same_size(b), "ssim inputs must share dimensions");
    let stats = window_stats(a, b, params);
    let (w, h) = (a.width(), a.height());
    let map = Image::from_fn(w, h, |x, y| {
        if !*stats.window_valid.get(x, y) {
            return 0.0;
        }
        let mx = *stats.mean_x.get(x, y);
        let my = *stats.mean_y.get(x, y);
        let a1 = 2.0 * mx * my + params.c1;
        let a2 = 2.0 * *stats.cov.get(x, y) + params.c2;
        let b1 = mx * mx + my * my + params.c1;
        let b2 = *stats.var_x.get(x, y) + *stats.var_y.get(x, y) + params.c2;
        (a1 * a2) / (b1 * b2)
    });
    (map, stats.window_valid)
}

/// Elementwise mask multiply.
fn masked(img: &ScalarImage, mask: &BoolImage) -> ScalarImage {
    Image::from_fn(img.width(), img.height(), |x, y| {
        if *mask.get(x, y) {
            *img.get(x, y)
        } else {
            0.0
        }
    })
}

/// True where the full window around the pixel lies inside the mask.
fn window_inside_mask(mask: &BoolImage, window: usize) -> BoolImage {
    let (w, h) = (mask.width(), mask.height());
    let rad = window / 2;
    let n = (window * window) as f64;
    let integral = IntegralImage::build(mask, |&b| if b { 1.0 } else { 0.0 });
    Image::from_fn(w, h, |x, y| {
        if x < rad || y < rad || x + rad >= w || y + rad >= h {
            return false;
        }
        integral.rect_sum(x - rad, y - rad, x + rad, y + rad) >= n - 0.5
    })
}

/// The per-pixel loss field and its aggregation set for one image pair.
///
/// `extra_valid` marks pixels whose ẑ sample is usable (bilinear validity);
/// it joins the mask in both variants.
fn photometric_field(
    z: &ScalarImage,
    z_hat: &ScalarImage,
    mask: &BoolImage,
    extra_valid: Option<&BoolImage>,
    params: &SsimParams,
    mode: MaskMode,
) -> (ScalarImage, BoolImage) {
    let effective = match extra_valid {
        Some(v) => mask.and(v),
        None => mask.clone(),
    };
    let (x_img, y_img) = match mode {
        MaskMode::Literal => (masked(z, &effective), masked(z_hat, &effective)),
        MaskMode::Restricted => (z.clone(), z_hat.clone()),
    };
    let (ssim_map, window_valid) = ssim(&x_img, &y_img, params);
    let aggregation = match mode {
        MaskMode::Literal => effective.and(&window_valid),
        MaskMode::Restricted => window_inside_mask(&effective, params.window),
    };
    let (w, h) = (z.width(), z.height());
    let field = Image::from_fn(w, h, |x, y| {
        if !*aggregation.get(x, y) {
            return 0.0;
        }
        let s = *ssim_map.get(x, y);
        let diff = (*x_img.get(x, y) - *y_img.get(x, y)).abs();
        SSIM_WEIGHT * (1.0 - s) / 2.0 + L1_WEIGHT * diff
    });
    (field, aggregation)
}

fn mean_over(field: &ScalarImage, set: &BoolImage) -> (f64, usize) {
    let values: Vec<f64> = field
        .data()
        .iter()
        .zip(set.data())
        .filter(|(_, &keep)| keep)
        .map(|(&v, _)| v)
        .collect();
    if values.is_empty() {
        (0.0, 0)
    } else {
        (pairwise_sum(&values) / values.len() as f64, values.len())
    }
}

/// Mean photometric loss of one image pair over a mask. An empty mask yields
/// total 0 with a diagnostic flag.
pub fn photometric_loss(
    z: &ScalarImage,
    z_hat: &ScalarImage,
    mask: &BoolImage,
    params: &SsimParams,
    mode: MaskMode,
) -> Result<LossReport> {
    z.expect_same_size(z_hat, "z_hat")?;
    z.expect_same_size(mask, "mask")?;
    let (field, set) = photometric_field(z, z_hat, mask, None, params, mode);
    let (mean, count) = mean_over(&field, &set);
    Ok(LossReport::scalar(mean, count, count == 0))
}

/// A per-pixel scene estimate `(r̂, α̂, Λ̂)` used to reconstruct gated slices.
#[derive(Debug, Clone)]
pub struct SceneEstimate {
    pub depth: ScalarImage,
    pub albedo: ScalarImage,
    pub ambient: ScalarImage,
}

impl SceneEstimate {
    pub fn new(depth: ScalarImage, albedo: ScalarImage, ambient: ScalarImage) -> Result<Self> {
        depth.expect_same_size(&albedo, "albedo")?;
        depth.expect_same_size(&ambient, "ambient")?;
        Ok(SceneEstimate {
            depth,
            albedo,
            ambient,
        })
    }

    /// Reconstructs slice `i`: `α̂·C_i(r̂) + Λ̂`, unclamped.
    pub fn reconstruct_slice(
        &self,
        profiles: &ProfileSet,
        slice: usize,
        mode: EvalMode,
    ) -> ScalarImage {
        Image::from_fn(self.depth.width(), self.depth.height(), |x, y| {
            let c = profiles.slice(slice).eval(*self.depth.get(x, y), mode);
            *self.albedo.get(x, y) * c + *self.ambient.get(x, y)
        })
    }
}

/// Cyclic gated-consistency loss:
/// `Σ_i L_p(b⊙Z^i, b⊙Ẑ^i) + L_p(Λ̂, Z^p)`, with the ambient term unmasked.
pub fn cyclic_loss(
    frame: &GatedFrame,
    estimate: &SceneEstimate,
    profiles: &ProfileSet,
    eval_mode: EvalMode,
    mask_b: &BoolImage,
    params: &SsimParams,
    mask_mode: MaskMode,
    want_gradient: bool,
) -> Result<LossReport> {
    frame.passive.expect_same_size(&estimate.depth, "estimate")?;
    frame.passive.expect_same_size(mask_b, "mask b")?;
    let all = Image::new(frame.width(), frame.height(), true);

    let mut per_slice = [0.0; 3];
    let mut count = 0usize;
    for i in 0..3 {
        let z_hat = estimate.reconstruct_slice(profiles, i, eval_mode);
        let (field, set) = photometric_field(&frame.slices[i], &z_hat, mask_b, None, params, mask_mode);
        let (mean, n) = mean_over(&field, &set);
        per_slice[i] = mean;
        count = n;
    }
    let (ambient_field, ambient_set) =
        photometric_field(&frame.passive, &estimate.ambient, &all, None, params, mask_mode);
    let (ambient_term, _) = mean_over(&ambient_field, &ambient_set);

    let gradient = if want_gradient {
        Some(cyclic_loss_depth_gradient(
            frame, estimate, profiles, eval_mode, mask_b, params, mask_mode,
        )?)
    } else {
        None
    };

    Ok(LossReport {
        total: per_slice.iter().sum::<f64>() + ambient_term,
        per_slice,
        ambient_term,
        valid_pixel_count: count,
        empty_mask: count == 0,
        gradient,
    })
}

/// Analytic gradient of [`cyclic_loss`] with respect to the per-pixel depth.
///
/// Only the slice terms depend on depth, through `Ẑ = α̂·C_i(r̂) + Λ̂`:
/// the L1 part contributes `0.15·sign(ẑ−z)/N` at aggregated pixels, and the
/// SSIM part propagates the windowed quotient rule. For a window centred at
/// `p`, `∂s(p)/∂ẑ_q` is affine in `(z_q, ẑ_q)`, so the sum over all windows
/// containing `q` reduces to three box sums.
pub fn cyclic_loss_depth_gradient(
    frame: &GatedFrame,
    estimate: &SceneEstimate,
    profiles: &ProfileSet,
    eval_mode: EvalMode,
    mask_b: &BoolImage,
    params: &SsimParams,
    mask_mode: MaskMode,
) -> Result<ScalarImage> {
    frame.passive.expect_same_size(&estimate.depth, "estimate")?;
    let (w, h) = (frame.width(), frame.height());
    let mut grad = Image::new(w, h, 0.0);
    for i in 0..3 {
        let z_hat = estimate.reconstruct_slice(profiles, i, eval_mode);
        let (x_img, y_img) = match mask_mode {
            MaskMode::Literal => (masked(&frame.slices[i], mask_b), masked(&z_hat, mask_b)),
            MaskMode::Restricted => (frame.slices[i].clone(), z_hat.clone()),
        };
        let aggregation = match mask_mode {
            MaskMode::Literal => {
                let (_, window_valid) = ssim(&x_img, &y_img, params);
                mask_b.and(&window_valid)
            }
            MaskMode::Restricted => window_inside_mask(mask_b, params.window),
        };
        let n_agg = aggregation.count_true();
        if n_agg == 0 {
            continue;
        }
        let d_dyhat = photometric_grad_wrt_estimate(&x_img, &y_img, &aggregation, params, n_agg);
        for y in 0..h {
            for x in 0..w {
                let chain_mask = match mask_mode {
                    MaskMode::Literal => {
                        if *mask_b.get(x, y) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    MaskMode::Restricted => 1.0,
                };
                let slope = *estimate.albedo.get(x, y)
                    * profiles.slice(i).derivative(*estimate.depth.get(x, y));
                let g = grad.get(x, y) + d_dyhat.get(x, y) * chain_mask * slope;
                grad.set(x, y, g);
            }
        }
    }
    Ok(grad)
}

/// `∂/∂y_q` of `(1/N)·Σ_{p∈A} [0.425·(1 − s(p)) + 0.15·|x_p − y_p|]`.
fn photometric_grad_wrt_estimate(
    x_img: &ScalarImage,
    y_img: &ScalarImage,
    aggregation: &BoolImage,
    params: &SsimParams,
    n_agg: usize,
) -> ScalarImage {
    let (w, h) = (x_img.width(), x_img.height());
    let stats = window_stats(x_img, y_img, params);
    let n_win = (params.window * params.window) as f64;
    let rad = params.window / 2;

    // Per-centre affine pieces of ∂s(p)/∂y_q = u(p) + v(p)·x_q + w(p)·y_q.
    let mut u_map = Image::new(w, h, 0.0);
    let mut v_map = Image::new(w, h, 0.0);
    let mut w_map = Image::new(w, h, 0.0);
    for py in 0..h {
        for px in 0..w {
            if !*aggregation.get(px, py) || !*stats.window_valid.get(px, py) {
                continue;
            }
            let mx = *stats.mean_x.get(px, py);
            let my = *stats.mean_y.get(px, py);
            let a1 = 2.0 * mx * my + params.c1;
            let a2 = 2.0 * *stats.cov.get(px, py) + params.c2;
            let b1 = mx * mx + my * my + params.c1;
            let b2 = *stats.var_x.get(px, py) + *stats.var_y.get(px, py) + params.c2;
            let denom = n_win * b1 * b2;
            let u1 = 2.0 * mx * (a2 - a1) / denom;
            let u2 = -2.0 * my * a1 * a2 * (b2 - b1) / (denom * b1 * b2);
            u_map.set(px, py, u1 + u2);
            v_map.set(px, py, 2.0 * a1 / denom);
            w_map.set(px, py, -2.0 * a1 * a2 / (denom * b2));
        }
    }
    let iu = IntegralImage::build(&u_map, |&v| v);
    let iv = IntegralImage::build(&v_map, |&v| v);
    let iw = IntegralImage::build(&w_map, |&v| v);

    Image::from_fn(w, h, |x, y| {
        // Centres whose window contains (x, y) form the same-size box.
        let x0 = x.saturating_sub(rad);
        let y0 = y.saturating_sub(rad);
        let x1 = (x + rad).min(w - 1);
        let y1 = (y + rad).min(h - 1);
        let u = iu.rect_sum(x0, y0, x1, y1);
        let v = iv.rect_sum(x0, y0, x1, y1);
        let ww = iw.rect_sum(x0, y0, x1, y1);
        let xv = *x_img.get(x, y);
        let yv = *y_img.get(x, y);
        let ssim_part = -(SSIM_WEIGHT / 2.0) * (u + v * xv + ww * yv);
        let l1_part = if *aggregation.get(x, y) {
            let d = yv - xv;
            let sgn = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            L1_WEIGHT * sgn
        } else {
            0.0
        };
        (ssim_part + l1_part) / n_agg as f64
    })
}

/// Central-difference depth gradient of an arbitrary scalar loss closure;
/// the independent oracle for [`cyclic_loss_depth_gradient`] and a
/// diagnostic for any other differentiable pipeline.
pub fn finite_difference_depth_gradient(
    mut loss: impl FnMut(&ScalarImage) -> f64,
    depth: &ScalarImage,
    step_m: f64,
) -> ScalarImage {
    let mut grad = Image::new(depth.width(), depth.height(), 0.0);
    let mut work = depth.clone();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = *depth.get(x, y);
            work.set(x, y, d + step_m);
            let plus = loss(&work);
            work.set(x, y, d - step_m);
            let minus = loss(&work);
            work.set(x, y, d);
            grad.set(x, y, (plus - minus) / (2.0 * step_m));
        }
    }
    grad
}

/// One temporal neighbor: its frame and the pose mapping current-frame
/// points into it.
pub struct Neighbor<'a> {
    pub frame: &'a GatedFrame,
    pub pose_to_neighbor: RigidPose,
}

/// Temporal min-reprojection loss: warps each neighbor's slices into the
/// current view and takes the per-pixel minimum over neighbors of the
/// summed-over-slices photometric loss, masked by `v`. Pixels with no valid
/// sample in any neighbor are excluded from the mean.
pub fn temporal_loss(
    frame_t: &GatedFrame,
    neighbors: &[Neighbor<'_>],
    depth: &DepthMap,
    mask_v: &BoolImage,
    intrinsics: &Intrinsics,
    params: &SsimParams,
    mask_mode: MaskMode,
) -> Result<LossReport> {
    if neighbors.is_empty() {
        return Err(Error::invalid("temporal loss needs at least one neighbor"));
    }
    frame_t.passive.expect_same_size(&depth.depth, "depth")?;
    frame_t.passive.expect_same_size(mask_v, "mask v")?;
    let (w, h) = (frame_t.width(), frame_t.height());

    // Per-neighbor composite field: sum over slices, defined where every
    // slice term is defined.
    let mut composites: Vec<(ScalarImage, BoolImage, [ScalarImage; 3])> = Vec::new();
    for nb in neighbors {
        let coords = warp_coordinates(intrinsics, &nb.pose_to_neighbor, depth);
        let mut slice_fields: Vec<ScalarImage> = Vec::with_capacity(3);
        let mut defined = Image::new(w, h, true);
        for i in 0..3 {
            let (sampled, sample_valid) = sample_bilinear(&nb.frame.slices[i], &coords);
            let (field, set) = photometric_field(
                &frame_t.slices[i],
                &sampled,
                mask_v,
                Some(&sample_valid),
                params,
                mask_mode,
            );
            defined = defined.and(&set);
            slice_fields.push(field);
        }
        let composite = Image::from_fn(w, h, |x, y| {
            slice_fields.iter().map(|f| *f.get(x, y)).sum::<f64>()
        });
        composites.push((
            composite,
            defined,
            [
                slice_fields[0].clone(),
                slice_fields[1].clone(),
                slice_fields[2].clone(),
            ],
        ));
    }

    // Per-pixel min over neighbors where defined.
    let mut min_values: Vec<f64> = Vec::new();
    let mut per_slice_sums = [0.0; 3];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(f64, usize)> = None;
            for (k, (composite, defined, _)) in composites.iter().enumerate() {
                if *defined.get(x, y) {
                    let v = *composite.get(x, y);
                    if best.map_or(true, |(bv, _)| v < bv) {
                        best = Some((v, k));
                    }
                }
            }
            if let Some((v, k)) = best {
                min_values.push(v);
                for i in 0..3 {
                    per_slice_sums[i] += *composites[k].2[i].get(x, y);
                }
            }
        }
    }

    let count = min_values.len();
    let (total, per_slice) = if count == 0 {
        (0.0, [0.0; 3])
    } else {
        (
            pairwise_sum(&min_values) / count as f64,
            [
                per_slice_sums[0] / count as f64,
                per_slice_sums[1] / count as f64,
                per_slice_sums[2] / count as f64,
            ],
        )
    };
    Ok(LossReport {
        total,
        per_slice,
        ambient_term: 0.0,
        valid_pixel_count: count,
        empty_mask: count == 0,
        gradient: None,
    })
}

/// Single-neighbor pair loss with the same masking; used by the
/// min-selection checks.
pub fn temporal_pair_field(
    frame_t: &GatedFrame,
    neighbor: &Neighbor<'_>,
    depth: &DepthMap,
    mask_v: &BoolImage,
    intrinsics: &Intrinsics,
    params: &SsimParams,
    mask_mode: MaskMode,
) -> (ScalarImage, BoolImage) {
    let (w, h) = (frame_t.width(), frame_t.height());
    let coords = warp_coordinates(intrinsics, &neighbor.pose_to_neighbor, depth);
    let mut total = Image::new(w, h, 0.0);
    let mut defined = Image::new(w, h, true);
    for i in 0..3 {
        let (sampled, sample_valid) = sample_bilinear(&neighbor.frame.slices[i], &coords);
        let (field, set) = photometric_field(
            &frame_t.slices[i],
            &sampled,
            mask_v,
            Some(&sample_valid),
            params,
            mask_mode,
        );
        defined = defined.and(&set);
        for y in 0..h {
            for x in 0..w {
                total.set(x, y, total.get(x, y) + field.get(x, y));
            }
        }
    }
    (total, defined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::{make_test_scene, render_noiseless, SceneKind, SceneParams};
    use crate::profile::default_profiles;
    use approx::assert_relative_eq;

    fn constant_pair(w: usize, h: usize, a: f64, b: f64) -> (ScalarImage, ScalarImage) {
        (Image::new(w, h, a), Image::new(w, h, b))
    }

    #[test]
    fn ssim_self_is_one() {
        let img = Image::from_fn(16, 12, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let (map, valid) = ssim(&img, &img, &SsimParams::default());
        for (x, y, &s) in map.enumerate() {
            if *valid.get(x, y) {
                assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = Image::from_fn(16, 12, |x, y| ((x * 5 + y) % 13) as f64 / 12.0);
        let b = Image::from_fn(16, 12, |x, y| ((x + 2 * y) % 9) as f64 / 8.0);
        let (ab, _) = ssim(&a, &b, &SsimParams::default());
        let (ba, _) = ssim(&b, &a, &SsimParams::default());
        for (x, y, &s) in ab.enumerate() {
            assert!((s - *ba.get(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_constant_images_match_closed_form() {
        let params = SsimParams::default();
        let (a, b) = constant_pair(12, 12, 0.3, 0.4);
        let (map, valid) = ssim(&a, &b, &params);
        let expected =
            ((2.0 * 0.3 * 0.4 + params.c1) * params.c2) / ((0.09 + 0.16 + params.c1) * params.c2);
        for (x, y, &s) in map.enumerate() {
            if *valid.get(x, y) {
                assert_relative_eq!(s, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn photometric_identical_images_is_zero() {
        let img = Image::from_fn(16, 12, |x, y| ((x + y) % 7) as f64 / 6.0);
        let mask = Image::new(16, 12, true);
        for mode in [MaskMode::Literal, MaskMode::Restricted] {
            let report =
                photometric_loss(&img, &img, &mask, &SsimParams::default(), mode).unwrap();
            assert_relative_eq!(report.total, 0.0, epsilon = 1e-12);
            assert!(!report.empty_mask);
        }
    }

    #[test]
    fn photometric_constant_offset_matches_scalar_formula() {
        let params = SsimParams::default();
        let (a, b) = constant_pair(12, 12, 0.5, 0.6);
        let mask = Image::new(12, 12, true);
        let s = ((2.0 * 0.5 * 0.6 + params.c1) * params.c2)
            / ((0.25 + 0.36 + params.c1) * params.c2);
        let expected = SSIM_WEIGHT * (1.0 - s) / 2.0 + L1_WEIGHT * 0.1;
        for mode in [MaskMode::Literal, MaskMode::Restricted] {
            let report = photometric_loss(&a, &b, &mask, &params, mode).unwrap();
            assert_relative_eq!(report.total, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn l1_weight_is_015() {
        // With the SSIM contribution subtracted, a 0.2 offset costs 0.03.
        let params = SsimParams::default();
        let (a, b) = constant_pair(10, 10, 0.5, 0.7);
        let mask = Image::new(10, 10, true);
        let s = ((2.0 * 0.5 * 0.7 + params.c1) * params.c2)
            / ((0.25 + 0.49 + params.c1) * params.c2);
        let report =
            photometric_loss(&a, &b, &mask, &params, MaskMode::Restricted).unwrap();
        let l1_part = report.total - SSIM_WEIGHT * (1.0 - s) / 2.0;
        assert_relative_eq!(l1_part, 0.03, epsilon = 1e-9);
    }

    #[test]
    fn empty_mask_reports_diagnostic() {
        let (a, b) = constant_pair(8, 8, 0.2, 0.4);
        let mask = Image::new(8, 8, false);
        let report =
            photometric_loss(&a, &b, &mask, &SsimParams::default(), MaskMode::Restricted)
                .unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(report.valid_pixel_count, 0);
        assert!(report.empty_mask);
    }

    #[test]
    fn mask_variants_agree_away_from_boundaries() {
        // On an all-true mask the two variants coincide.
        let a = Image::from_fn(14, 14, |x, y| ((x * 3 + y * 5) % 10) as f64 / 9.0);
        let b = Image::from_fn(14, 14, |x, y| ((x * 3 + y * 5 + 2) % 10) as f64 / 9.0);
        let mask = Image::new(14, 14, true);
        let params = SsimParams::default();
        let lit = photometric_loss(&a, &b, &mask, &params, MaskMode::Literal).unwrap();
        let res = photometric_loss(&a, &b, &mask, &params, MaskMode::Restricted).unwrap();
        assert_relative_eq!(lit.total, res.total, epsilon = 1e-12);
        assert_eq!(lit.valid_pixel_count, res.valid_pixel_count);
    }

    #[test]
    fn mask_variants_pinned_on_half_mask() {
        // A half-plane mask: literal windows straddle the boundary and see
        // zeros; restricted windows stay inside. Pin both behaviours.
        let a = Image::new(16, 16, 0.5);
        let b = Image::new(16, 16, 0.5);
        let mask = Image::from_fn(16, 16, |x, _| x >= 8);
        let params = SsimParams::default();
        let lit = photometric_loss(&a, &b, &mask, &params, MaskMode::Literal).unwrap();
        let res = photometric_loss(&a, &b, &mask, &params, MaskMode::Restricted).unwrap();
        // Identical images: restricted sees only interior windows, loss 0.
        assert_relative_eq!(res.total, 0.0, epsilon = 1e-12);
        // Literal masks both images identically, so the L1 part is still 0,
        // but boundary windows mix zeros into the SSIM statistics of both
        // images symmetrically; ssim(x, x) = 1 still holds.
        assert_relative_eq!(lit.total, 0.0, epsilon = 1e-12);
        // The aggregation sets differ: restricted is strictly smaller.
        assert!(res.valid_pixel_count < lit.valid_pixel_count);
    }

    #[test]
    fn per_pixel_loss_subset_under_smaller_mask() {
        // The per-pixel loss values under a smaller mask are a subset of
        // those under a larger mask (restricted windows are unchanged).
        let a = Image::from_fn(18, 18, |x, y| ((x * 2 + y) % 12) as f64 / 11.0);
        let b = Image::from_fn(18, 18, |x, y| ((x + 3 * y) % 8) as f64 / 7.0);
        let params = SsimParams::default();
        let large = Image::new(18, 18, true);
        let small = Image::from_fn(18, 18, |x, y| x < 12 && y < 12);
        let (field_l, set_l) = photometric_field(&a, &b, &large, None, &params, MaskMode::Restricted);
        let (field_s, set_s) = photometric_field(&a, &b, &small, None, &params, MaskMode::Restricted);
        for (x, y, &keep) in set_s.enumerate() {
            if keep {
                assert!(*set_l.get(x, y));
                assert_relative_eq!(*field_s.get(x, y), *field_l.get(x, y), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_loss_zero_for_exact_estimate() {
        let profiles = default_profiles();
        let params = SceneParams {
            ambient: 0.05,
            albedo: 0.5,
            ..SceneParams::default()
        };
        let scene = make_test_scene(SceneKind::DepthRamp, 16, 24, &params).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let estimate = SceneEstimate::new(
            scene.depth().clone(),
            scene.albedo().clone(),
            scene.ambient().clone(),
        )
        .unwrap();
        let mask = Image::new(16, 24, true);
        let report = cyclic_loss(
            &frame,
            &estimate,
            &profiles,
            EvalMode::Chebyshev,
            &mask,
            &SsimParams::default(),
            MaskMode::Restricted,
            false,
        )
        .unwrap();
        assert_relative_eq!(report.total, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn cyclic_loss_increases_with_depth_error_on_ramp() {
        let profiles = default_profiles();
        let params = SceneParams {
            ambient: 0.05,
            albedo: 0.5,
            distance_m: 40.0,
            ..SceneParams::default()
        };
        // 40 m sits on slice 1's rising ramp: depth perturbations move C_1.
        let scene = make_test_scene(SceneKind::FlatWall, 16, 16, &params).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let mask = Image::new(16, 16, true);
        let loss_at = |offset: f64| {
            let estimate = SceneEstimate::new(
                scene.depth().map(|&d| d + offset),
                scene.albedo().clone(),
                scene.ambient().clone(),
            )
            .unwrap();
            cyclic_loss(
                &frame,
                &estimate,
                &profiles,
                EvalMode::Chebyshev,
                &mask,
                &SsimParams::default(),
                MaskMode::Restricted,
                false,
            )
            .unwrap()
            .total
        };
        let l0 = loss_at(0.0);
        let l5 = loss_at(5.0);
        assert!(l5 > l0, "loss must grow with depth error: {l0} -> {l5}");
    }

    #[test]
    fn cyclic_all_false_mask_leaves_only_ambient_term() {
        let profiles = default_profiles();
        let scene = make_test_scene(SceneKind::FlatWall, 12, 12, &SceneParams::default()).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let estimate = SceneEstimate::new(
            scene.depth().clone(),
            scene.albedo().clone(),
            scene.ambient().map(|&l| l + 0.02),
        )
        .unwrap();
        let mask = Image::new(12, 12, false);
        let report = cyclic_loss(
            &frame,
            &estimate,
            &profiles,
            EvalMode::Chebyshev,
            &mask,
            &SsimParams::default(),
            MaskMode::Restricted,
            false,
        )
        .unwrap();
        assert!(report.empty_mask);
        assert_eq!(report.per_slice, [0.0; 3]);
        assert!(report.ambient_term > 0.0);
        assert_relative_eq!(report.total, report.ambient_term);
    }

    #[test]
    fn gradient_zero_outside_all_gates() {
        let profiles = default_profiles();
        let (w, h) = (10, 10);
        let frame = render_noiseless(
            &make_test_scene(
                SceneKind::FlatWall,
                w,
                h,
                &SceneParams {
                    distance_m: 40.0,
                    ..SceneParams::default()
                },
            )
            .unwrap(),
            &profiles,
            EvalMode::Chebyshev,
        )
        .unwrap();
        // Estimate far outside every gate: C'_i = 0 there.
        let estimate = SceneEstimate::new(
            Image::new(w, h, 200.0),
            Image::new(w, h, 0.5),
            Image::new(w, h, 0.05),
        )
        .unwrap();
        let grad = cyclic_loss_depth_gradient(
            &frame,
            &estimate,
            &profiles,
            EvalMode::Chebyshev,
            &Image::new(w, h, true),
            &SsimParams::default(),
            MaskMode::Restricted,
        )
        .unwrap();
        for &g in grad.data() {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let profiles = default_profiles();
        let (w, h) = (12, 10);
        let scene_params = SceneParams {
            albedo: 0.55,
            ambient: 0.06,
            near_m: 25.0,
            far_m: 95.0,
            ..SceneParams::default()
        };
        let scene = make_test_scene(SceneKind::DepthRamp, w, h, &scene_params).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        // Offset estimate so residuals are nonzero almost everywhere.
        let est_depth = scene.depth().map(|&d| d + 1.7);
        let estimate = SceneEstimate::new(
            est_depth.clone(),
            scene.albedo().clone(),
            scene.ambient().clone(),
        )
        .unwrap();
        let mask = Image::new(w, h, true);
        let ssim_params = SsimParams::default();
        let analytic = cyclic_loss_depth_gradient(
            &frame,
            &estimate,
            &profiles,
            EvalMode::Chebyshev,
            &mask,
            &ssim_params,
            MaskMode::Restricted,
        )
        .unwrap();
        let numeric = finite_difference_depth_gradient(
            |depth| {
                let est = SceneEstimate::new(
                    depth.clone(),
                    scene.albedo().clone(),
                    scene.ambient().clone(),
                )
                .unwrap();
                cyclic_loss(
                    &frame,
                    &est,
                    &profiles,
                    EvalMode::Chebyshev,
                    &mask,
                    &ssim_params,
                    MaskMode::Restricted,
                    false,
                )
                .unwrap()
                .total
            },
            &est_depth,
            1e-3,
        );
        let mut checked = 0usize;
        let mut ok = 0usize;
        for (idx, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
            if a.abs() > 1e-8 {
                checked += 1;
                if (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) {
                    ok += 1;
                } else {
                    eprintln!("pixel {idx}: analytic {a} vs numeric {n}");
                }
            }
        }
        assert!(checked > 0);
        assert!(
            ok as f64 >= 0.99 * checked as f64,
            "{ok}/{checked} gradients matched"
        );
    }

    #[test]
    fn literal_mode_gradient_matches_finite_differences() {
        let profiles = default_profiles();
        let (w, h) = (12, 10);
        let scene_params = SceneParams {
            albedo: 0.5,
            ambient: 0.04,
            near_m: 30.0,
            far_m: 90.0,
            ..SceneParams::default()
        };
        let scene = make_test_scene(SceneKind::DepthRamp, w, h, &scene_params).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let est_depth = scene.depth().map(|&d| d - 2.1);
        let estimate = SceneEstimate::new(
            est_depth.clone(),
            scene.albedo().clone(),
            scene.ambient().clone(),
        )
        .unwrap();
        // A mask with a hole so literal windows straddle the boundary.
        let mask = Image::from_fn(w, h, |x, y| !(x >= 4 && x < 7 && y >= 3 && y < 6));
        let ssim_params = SsimParams::default();
        let analytic = cyclic_loss_depth_gradient(
            &frame,
            &estimate,
            &profiles,
            EvalMode::Chebyshev,
            &mask,
            &ssim_params,
            MaskMode::Literal,
        )
        .unwrap();
        let numeric = finite_difference_depth_gradient(
            |depth| {
                let est = SceneEstimate::new(
                    depth.clone(),
                    scene.albedo().clone(),
                    scene.ambient().clone(),
                )
                .unwrap();
                cyclic_loss(
                    &frame,
                    &est,
                    &profiles,
                    EvalMode::Chebyshev,
                    &mask,
                    &ssim_params,
                    MaskMode::Literal,
                    false,
                )
                .unwrap()
                .total
            },
            &est_depth,
            1e-3,
        );
        let mut checked = 0usize;
        let mut ok = 0usize;
        for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
            if a.abs() > 1e-8 {
                checked += 1;
                if (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) {
                    ok += 1;
                }
            }
        }
        assert!(checked > 50);
        assert!(ok as f64 >= 0.99 * checked as f64, "{ok}/{checked}");
    }

    #[test]
    fn temporal_loss_zero_for_static_identity() {
        let profiles = default_profiles();
        let (w, h) = (16, 16);
        let scene = make_test_scene(SceneKind::FlatWall, w, h, &SceneParams::default()).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let depth = DepthMap::new(scene.depth().clone(), Image::new(w, h, true)).unwrap();
        let intr = Intrinsics::default_for(w, h);
        let mask = Image::new(w, h, true);
        let report = temporal_loss(
            &frame,
            &[
                Neighbor {
                    frame: &frame,
                    pose_to_neighbor: RigidPose::identity(),
                },
                Neighbor {
                    frame: &frame,
                    pose_to_neighbor: RigidPose::identity(),
                },
            ],
            &depth,
            &mask,
            &intr,
            &SsimParams::default(),
            MaskMode::Restricted,
        )
        .unwrap();
        assert_relative_eq!(report.total, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn temporal_min_selects_clean_neighbor() {
        let profiles = default_profiles();
        let (w, h) = (16, 16);
        let scene = make_test_scene(SceneKind::FlatWall, w, h, &SceneParams::default()).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        // Corrupt one neighbor heavily.
        let mut corrupted = frame.clone();
        for s in corrupted.slices.iter_mut() {
            for v in s.data_mut() {
                *v = (*v + 0.4).min(1.0);
            }
        }
        let depth = DepthMap::new(scene.depth().clone(), Image::new(w, h, true)).unwrap();
        let intr = Intrinsics::default_for(w, h);
        let mask = Image::new(w, h, true);
        let params = SsimParams::default();
        let clean = Neighbor {
            frame: &frame,
            pose_to_neighbor: RigidPose::identity(),
        };
        let dirty = Neighbor {
            frame: &corrupted,
            pose_to_neighbor: RigidPose::identity(),
        };
        let min_report = temporal_loss(
            &frame,
            &[
                Neighbor {
                    frame: &frame,
                    pose_to_neighbor: RigidPose::identity(),
                },
                Neighbor {
                    frame: &corrupted,
                    pose_to_neighbor: RigidPose::identity(),
                },
            ],
            &depth,
            &mask,
            &intr,
            &params,
            MaskMode::Restricted,
        )
        .unwrap();
        // Two-pass oracle: each pair loss separately.
        let (clean_field, clean_def) =
            temporal_pair_field(&frame, &clean, &depth, &mask, &intr, &params, MaskMode::Restricted);
        let (dirty_field, dirty_def) =
            temporal_pair_field(&frame, &dirty, &depth, &mask, &intr, &params, MaskMode::Restricted);
        let mean = |f: &ScalarImage, s: &BoolImage| {
            let vals: Vec<f64> = f
                .data()
                .iter()
                .zip(s.data())
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .collect();
            pairwise_sum(&vals) / vals.len() as f64
        };
        let clean_mean = mean(&clean_field, &clean_def);
        let dirty_mean = mean(&dirty_field, &dirty_def);
        assert!(dirty_mean > clean_mean);
        assert_relative_eq!(min_report.total, clean_mean, epsilon = 1e-12);
        // Pixelwise: min field <= each pair field.
        for (x, y, &d) in clean_def.enumerate() {
            if d && *dirty_def.get(x, y) {
                let m = clean_field.get(x, y).min(*dirty_field.get(x, y));
                assert!(m <= *clean_field.get(x, y) + 1e-15);
                assert!(m <= *dirty_field.get(x, y) + 1e-15);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn photometric_loss_is_nonnegative(
            a_vals in proptest::collection::vec(0.0f64..=1.0, 100),
            b_vals in proptest::collection::vec(0.0f64..=1.0, 100),
        ) {
            let a = Image::from_vec(10, 10, a_vals).unwrap();
            let b = Image::from_vec(10, 10, b_vals).unwrap();
            let mask = Image::new(10, 10, true);
            for mode in [MaskMode::Literal, MaskMode::Restricted] {
                let r = photometric_loss(&a, &b, &mask, &SsimParams::default(), mode).unwrap();
                proptest::prop_assert!(r.total >= 0.0);
            }
        }
    }

    #[test]
    fn temporal_all_false_mask_is_empty_diagnostic() {
        let profiles = default_profiles();
        let (w, h) = (12, 12);
        let scene = make_test_scene(SceneKind::FlatWall, w, h, &SceneParams::default()).unwrap();
        let frame = render_noiseless(&scene, &profiles, EvalMode::Chebyshev).unwrap();
        let depth = DepthMap::new(scene.depth().clone(), Image::new(w, h, true)).unwrap();
        let report = temporal_loss(
            &frame,
            &[Neighbor {
                frame: &frame,
                pose_to_neighbor: RigidPose::identity(),
            }],
            &depth,
            &Image::new(w, h, false),
            &Intrinsics::default_for(w, h),
            &SsimParams::default(),
            MaskMode::Restricted,
        )
        .unwrap();
        assert_eq!(report.total, 0.0);
        assert!(report.empty_mask);
    }
}
