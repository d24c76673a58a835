//! Per-pixel inverse rendering: recovers `(r̂, α̂, Λ̂)` from a gated frame.
//!
//! For fixed depth the model `z_i = a·C_i(r) + l` is linear in `(a, l)`, so
//! those two have a closed-form least-squares solution; depth is refined by
//! Gauss-Newton with the exact Chebyshev derivative, seeded by a
//! ratio-based lookup: the ambient-subtracted slice triple is normalized to
//! be scale-free and matched against normalized profile triples on a
//! precomputed range grid. Where fewer than two gates are active, `(r, a)`
//! are confounded; such pixels keep the ratio estimate with
//! `converged = false` rather than a silently wrong answer.

use crate::formation::GatedFrame;
use crate::image::{BoolImage, Image, ScalarImage};
use crate::profile::{EvalMode, ProfileSet};
use crate::Result;
use rayon::prelude::*;

/// Minimum profile value for a gate to count as "active" when classifying
/// identifiability (fraction of peak).
pub const ACTIVE_GATE_FLOOR: f64 = 0.02;

/// Box constraints and stopping rules for the per-pixel solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Depth search box, metres.
    pub r_min_m: f64,
    pub r_max_m: f64,
    /// Albedo box upper bound; 1.5 absorbs retroreflectors without clamping
    /// the solve (the reported albedo is clamped to [0, 1] with a flag).
    pub albedo_max: f64,
    /// Gauss-Newton stops when the depth step falls below this, metres.
    pub step_tol_m: f64,
    pub max_iterations: usize,
    /// Modulated-signal floor θ: below it a pixel is treated as unmodulated.
    pub signal_floor: f64,
    /// Lookup-grid spacing for the ratio-based coarse depth, metres.
    pub grid_spacing_m: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            r_min_m: 3.0,
            r_max_m: 176.0,
            albedo_max: 1.5,
            step_tol_m: 1e-3,
            max_iterations: 50,
            signal_floor: 0.04,
            grid_spacing_m: 0.5,
        }
    }
}

/// Result of one pixel inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelEstimate {
    /// Recovered range, metres, within the solver box.
    pub depth_m: f64,
    /// Recovered albedo, reported clamped to [0, 1].
    pub albedo: f64,
    /// True if the internal albedo solution exceeded 1 before reporting.
    pub albedo_clamped: bool,
    /// Recovered ambient, in [0, 1].
    pub ambient: f64,
    /// Sum of squared slice residuals at the solution.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PixelEstimate {
    fn unconverged(depth_m: f64) -> Self {
        PixelEstimate {
            depth_m,
            albedo: 0.0,
            albedo_clamped: false,
            ambient: 0.0,
            residual: 0.0,
            converged: false,
            iterations: 0,
        }
    }
}

/// Recovered depth with per-pixel validity.
#[derive(Debug, Clone)]
pub struct DepthMap {
    /// Depth in metres; 0.0 where no estimate was produced.
    pub depth: ScalarImage,
    /// False wherever the solve did not converge or a mask excluded the pixel.
    pub validity: BoolImage,
    /// Full per-pixel estimates, when the producer kept them.
    pub estimates: Option<Vec<PixelEstimate>>,
}

impl DepthMap {
    pub fn new(depth: ScalarImage, validity: BoolImage) -> Result<Self> {
        depth.expect_same_size(&validity, "validity")?;
        Ok(DepthMap {
            depth,
            validity,
            estimates: None,
        })
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    /// Fraction of pixels with a valid estimate.
    pub fn convergence_rate(&self) -> f64 {
        self.validity.count_true() as f64 / self.validity.len().max(1) as f64
    }
}

/// Component of `g` orthogonal to span{c, (1,1,1)} — the Jacobian of the
/// reduced (albedo/ambient-eliminated) residual.
fn project_out_linear_span(g: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let inv_sqrt3 = 1.0 / 3f64.sqrt();
    let q1 = [inv_sqrt3; 3];
    let c_dot_q1: f64 = c.iter().map(|v| v * inv_sqrt3).sum();
    let mut q2 = [
        c[0] - c_dot_q1 * q1[0],
        c[1] - c_dot_q1 * q1[1],
        c[2] - c_dot_q1 * q1[2],
    ];
    let n2: f64 = q2.iter().map(|v| v * v).sum();
    if n2 > 1e-24 {
        let inv = n2.sqrt().recip();
        for v in &mut q2 {
            *v *= inv;
        }
    } else {
        q2 = [0.0; 3];
    }
    let g_q1: f64 = g.iter().zip(&q1).map(|(a, b)| a * b).sum();
    let g_q2: f64 = g.iter().zip(&q2).map(|(a, b)| a * b).sum();
    [
        g[0] - g_q1 * q1[0] - g_q2 * q2[0],
        g[1] - g_q1 * q1[1] - g_q2 * q2[1],
        g[2] - g_q1 * q1[2] - g_q2 * q2[2],
    ]
}

/// Normalized profile triples on a regular range grid, shared read-only by
/// all pixel solves.
#[derive(Debug, Clone)]
struct LookupGrid {
    ranges: Vec<f64>,
    normalized: Vec<[f64; 3]>,
}

impl LookupGrid {
    fn build(profiles: &ProfileSet, mode: EvalMode, params: &SolverParams) -> Self {
        let n = ((params.r_max_m - params.r_min_m) / params.grid_spacing_m).round() as usize;
        let mut ranges = Vec::with_capacity(n + 1);
        let mut normalized = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let r = params.r_min_m + i as f64 * params.grid_spacing_m;
            let c = profiles.eval_triple(r, mode);
            let sum = c[0] + c[1] + c[2];
            if sum > 1e-12 {
                ranges.push(r);
                normalized.push([c[0] / sum, c[1] / sum, c[2] / sum]);
            }
        }
        LookupGrid { ranges, normalized }
    }

    /// Grid range whose normalized triple is nearest to `t` in squared
    /// distance; `None` when no grid point carries profile signal (profiles
    /// that never overlap the solver box). Ties break toward the smallest
    /// range.
    fn nearest(&self, t: [f64; 3]) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (r, q) in self.ranges.iter().zip(&self.normalized) {
            let d = (t[0] - q[0]).powi(2) + (t[1] - q[1]).powi(2) + (t[2] - q[2]).powi(2);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, *r));
            }
        }
        best.map(|(_, r)| r)
    }
}

/// Frame inverter: owns the profile set reference, evaluation mode, solver
/// parameters, and the shared lookup grid.
pub struct Solver<'a> {
    profiles: &'a ProfileSet,
    mode: EvalMode,
    params: SolverParams,
    grid: LookupGrid,
}

impl<'a> Solver<'a> {
    pub fn new(profiles: &'a ProfileSet, mode: EvalMode, params: SolverParams) -> Self {
        let grid = LookupGrid::build(profiles, mode, &params);
        Solver {
            profiles,
            mode,
            params,
        grid,
        }
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// True where at least two gates return signal at range `r`, i.e. the
    /// pixel is uniquely invertible.
    pub fn identifiable(&self, r_m: f64) -> bool {
        self.profiles
            .eval_triple(r_m, self.mode)
            .iter()
            .filter(|&&c| c >= ACTIVE_GATE_FLOOR)
            .count()
            >= 2
    }

    /// Ratio-based coarse depth for one pixel; `None` when the summed
    /// ambient-subtracted signal is below the floor θ.
    fn ratio_depth_pixel(&self, z: [f64; 3], zp: f64) -> Option<f64> {
        let s = [z[0] - zp, z[1] - zp, z[2] - zp];
        let sum = s[0] + s[1] + s[2];
        if sum < self.params.signal_floor {
            return None;
        }
        self.grid.nearest([s[0] / sum, s[1] / sum, s[2] / sum])
    }

    /// Approximate depth map r̃ from slice intensity ratios. Pixels without
    /// modulated signal carry the +∞ sentinel.
    pub fn approx_depth_ratio(&self, frame: &GatedFrame) -> ScalarImage {
        let (w, h) = (frame.width(), frame.height());
        let mut data = vec![f64::INFINITY; w * h];
        data.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let z = [
                frame.slices[0].data()[idx],
                frame.slices[1].data()[idx],
                frame.slices[2].data()[idx],
            ];
            if let Some(r) = self.ratio_depth_pixel(z, frame.passive.data()[idx]) {
                *out = r;
            }
        });
        Image::from_vec(w, h, data).expect("sized buffer")
    }

    fn triple(&self, r: f64) -> [f64; 3] {
        self.profiles.eval_triple(r, self.mode)
    }

    /// Closed-form box-constrained least squares for `(a, l)` at fixed depth.
    fn best_albedo_ambient(&self, z: [f64; 3], zp: f64, r: f64) -> (f64, f64) {
        let c = self.triple(r);
        let sc: f64 = c.iter().sum();
        let sc2: f64 = c.iter().map(|v| v * v).sum();
        let sz: f64 = z.iter().sum();
        let scz: f64 = c.iter().zip(&z).map(|(a, b)| a * b).sum();
        let a_max = self.params.albedo_max;

        if sc2 < 1e-18 {
            // No gate signal at this range: albedo unconstrained, explain
            // everything as ambient.
            return (0.0, (sz / 3.0).clamp(0.0, 1.0));
        }
        let det = 3.0 * sc2 - sc * sc;
        if det < 1e-12 * sc2 {
            // All gates equal: (a, l) confounded; anchor ambient at the
            // passive measurement.
            let l = zp.clamp(0.0, 1.0);
            let a = ((sz / 3.0 - l) / (sc / 3.0)).clamp(0.0, a_max);
            return (a, l);
        }
        let mut a = (3.0 * scz - sc * sz) / det;
        let mut l = (sc2 * sz - sc * scz) / det;
        if !(0.0..=a_max).contains(&a) {
            a = a.clamp(0.0, a_max);
            l = ((sz - a * sc) / 3.0).clamp(0.0, 1.0);
        } else if !(0.0..=1.0).contains(&l) {
            l = l.clamp(0.0, 1.0);
            a = ((scz - l * sc) / sc2).clamp(0.0, a_max);
        }
        (a, l)
    }

    fn sse(&self, z: [f64; 3], r: f64, a: f64, l: f64) -> f64 {
        let c = self.triple(r);
        (0..3).map(|i| (z[i] - (a * c[i] + l)).powi(2)).sum()
    }

    fn sse_at(&self, z: [f64; 3], zp: f64, r: f64) -> f64 {
        let (a, l) = self.best_albedo_ambient(z, zp, r);
        self.sse(z, r, a, l)
    }

    /// Golden-section fallback: coarse scan of the lookup grid, then a
    /// golden-section refinement of the best cell.
    fn golden_section(&self, z: [f64; 3], zp: f64) -> (f64, usize) {
        let mut best_r = self.params.r_min_m;
        let mut best = f64::INFINITY;
        for &r in &self.grid.ranges {
            let v = self.sse_at(z, zp, r);
            if v < best {
                best = v;
                best_r = r;
            }
        }
        let mut lo = (best_r - self.params.grid_spacing_m).max(self.params.r_min_m);
        let mut hi = (best_r + self.params.grid_spacing_m).min(self.params.r_max_m);
        let inv_phi = 0.618_033_988_749_894_9;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = self.sse_at(z, zp, x1);
        let mut f2 = self.sse_at(z, zp, x2);
        let mut evals = 2;
        while hi - lo > self.params.step_tol_m {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = self.sse_at(z, zp, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = self.sse_at(z, zp, x2);
            }
            evals += 1;
        }
        (0.5 * (lo + hi), evals)
    }

    /// Inverts one pixel. `init` overrides the ratio-based depth seed.
    pub fn solve_pixel(&self, z: [f64; 3], zp: f64, init: Option<f64>) -> PixelEstimate {
        let spread = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - z.iter().cloned().fold(f64::INFINITY, f64::min);
        let seed = init
            .or_else(|| self.ratio_depth_pixel(z, zp))
            .map(|r| r.clamp(self.params.r_min_m, self.params.r_max_m));
        if spread <= self.params.signal_floor {
            // Unmodulated (or saturated-flat) pixel: no depth information.
            return PixelEstimate::unconverged(seed.unwrap_or(self.params.r_max_m));
        }
        let Some(seed) = seed else {
            return PixelEstimate::unconverged(self.params.r_max_m);
        };

        let mut r = seed;
        let (mut a, mut l) = self.best_albedo_ambient(z, zp, r);
        let mut sse = self.sse(z, r, a, l);
        let mut converged = false;
        let mut iterations = 0;

        'outer: for it in 0..self.params.max_iterations {
            iterations = it + 1;
            if sse < 1e-22 {
                converged = true;
                break;
            }
            let c = self.triple(r);
            // Variable-projection Gauss-Newton: (a, l) re-solve exactly at
            // every r, so the reduced residual's Jacobian is the raw slope
            // a·C'(r) projected orthogonal to span{C(r), 1}.
            let mut g = [0.0; 3];
            for i in 0..3 {
                g[i] = a * self.profiles.slice(i).derivative(r);
            }
            let g = project_out_linear_span(g, c);
            let mut jtj = 0.0;
            let mut jte = 0.0;
            for i in 0..3 {
                let e = z[i] - (a * c[i] + l);
                jtj += g[i] * g[i];
                jte += -g[i] * e;
            }
            if jtj < 1e-18 {
                // Flat Jacobian (outside every ramp): Gauss-Newton cannot
                // move; search the range directly.
                let (rg, extra) = self.golden_section(z, zp);
                r = rg;
                (a, l) = self.best_albedo_ambient(z, zp, r);
                sse = self.sse(z, r, a, l);
                iterations += extra;
                converged = true;
                break 'outer;
            }
            let mut step = -jte / jtj;
            let mut accepted = false;
            let sse_before = sse;
            for _ in 0..12 {
                let r_try = (r + step).clamp(self.params.r_min_m, self.params.r_max_m);
                let (a_try, l_try) = self.best_albedo_ambient(z, zp, r_try);
                let sse_try = self.sse(z, r_try, a_try, l_try);
                if sse_try <= sse + 1e-15 {
                    let moved = (r_try - r).abs();
                    r = r_try;
                    a = a_try;
                    l = l_try;
                    sse = sse_try;
                    accepted = true;
                    if moved < self.params.step_tol_m {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                step *= 0.5;
            }
            // Divergence or stagnation (box clamps can stall the projected
            // step): hand over to the direct range search.
            let stalled = accepted && it >= 4 && sse > 1e-3 * sse_before;
            if !accepted || stalled {
                let (rg, extra) = self.golden_section(z, zp);
                r = rg;
                (a, l) = self.best_albedo_ambient(z, zp, r);
                sse = self.sse(z, r, a, l);
                iterations += extra;
                converged = true;
                break 'outer;
            }
        }

        // Single-gate pixels are reported but flagged: (r, a) confounded.
        if !self.identifiable(r) {
            converged = false;
        }

        PixelEstimate {
            depth_m: r,
            albedo: a.min(1.0),
            albedo_clamped: a > 1.0,
            ambient: l,
            residual: sse,
            converged,
            iterations,
        }
    }

    /// Inverts every pixel the mask permits (or all pixels when `allow` is
    /// `None`). Validity is `converged ∧ allowed`.
    pub fn solve_frame(&self, frame: &GatedFrame, allow: Option<&BoolImage>) -> Result<DepthMap> {
        let (w, h) = (frame.width(), frame.height());
        if let Some(mask) = allow {
            frame.passive.expect_same_size(mask, "mask b")?;
        }
        let estimates: Vec<PixelEstimate> = (0..w * h)
            .into_par_iter()
            .map(|idx| {
                let allowed = allow.map_or(true, |m| m.data()[idx]);
                if !allowed {
                    return PixelEstimate::unconverged(0.0);
                }
                let z = [
                    frame.slices[0].data()[idx],
                    frame.slices[1].data()[idx],
                    frame.slices[2].data()[idx],
                ];
                self.solve_pixel(z, frame.passive.data()[idx], None)
            })
            .collect();
        let depth =
            Image::from_vec(w, h, estimates.iter().map(|e| e.depth_m).collect::<Vec<_>>())?;
        let validity = Image::from_vec(
            w,
            h,
            estimates
                .iter()
                .enumerate()
                .map(|(idx, e)| e.converged && allow.map_or(true, |m| m.data()[idx]))
                .collect::<Vec<_>>(),
        )?;
        Ok(DepthMap {
            depth,
            validity,
            estimates: Some(estimates),
        })
    }
}
