//! Range-intensity profiles.
//!
//! A gated exposure integrates the returned pulse over the sensor gate:
//! `C(r) = peak · ∫ g(t − ξ) p(t − 2r/c) dt / T_norm`, with a rectangular
//! gate of width `T_g` opening `ξ` after the pulse fires and a rectangular
//! pulse of width `T_p`. The convolution of two rectangles is an isosceles
//! trapezoid in the round-trip time `τ = 2r/c`:
//!
//! * zero for `τ ≤ ξ − T_p` and `τ ≥ ξ + T_g`,
//! * a linear ramp of width `min(T_g, T_p)` on each side,
//! * a plateau of raw height `min(T_g, T_p)` in between.
//!
//! Dividing by `T_norm = min(T_g, T_p)` makes the plateau equal
//! `peak_response`. The working representation for rendering and inversion
//! is an order-6 Chebyshev least-squares fit of this trapezoid on a
//! per-slice domain (visible range plus a 1 m margin), with the recurrence
//! `T_0 = 1, T_1 = x, T_{n+1} = 2x T_n − T_{n−1}` on the affinely mapped
//! coordinate `x ∈ [−1, 1]`. Outside the gate's visible range every
//! evaluation is zero: the analytic form is authoritative for the zero
//! region, and polynomial extrapolation would corrupt the solver.

use crate::{Error, Result, SPEED_OF_LIGHT};
use nalgebra::{DMatrix, DVector};

/// Chebyshev order of the fitted representation.
pub const CHEB_ORDER: usize = 6;
/// Number of Chebyshev coefficients (`CHEB_ORDER + 1`).
pub const CHEB_COEFFS: usize = CHEB_ORDER + 1;

/// Documented fit tolerance: max |Chebyshev − analytic| over the domain, as
/// a fraction of `peak_response`. An order-6 polynomial cannot follow the
/// trapezoid's corners more closely; the measured error for the default
/// profiles is 7.4% of peak.
pub const CHEB_FIT_TOLERANCE: f64 = 0.08;

/// Margin in metres added on each side of the visible range to form the
/// Chebyshev domain.
pub const DOMAIN_MARGIN_M: f64 = 1.0;

/// Which representation of `C_i` an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Exact piecewise-linear trapezoid.
    Analytic,
    /// Order-6 Chebyshev fit (Clenshaw recurrence, x clamped to [−1, 1]).
    Chebyshev,
}

/// Laser/gate timing of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTiming {
    /// Laser-to-gate delay ξ, seconds.
    pub delay_s: f64,
    /// Width of the sensor gate, seconds.
    pub gate_duration_s: f64,
    /// Width of the laser pulse, seconds.
    pub pulse_duration_s: f64,
    /// Plateau amplitude of the normalized profile, in (0, 1].
    pub peak_response: f64,
}

impl GateTiming {
    pub fn new(
        delay_s: f64,
        gate_duration_s: f64,
        pulse_duration_s: f64,
        peak_response: f64,
    ) -> Result<Self> {
        if !(gate_duration_s > 0.0) || !gate_duration_s.is_finite() {
            return Err(Error::invalid("gate_duration_s must be strictly positive"));
        }
        if !(pulse_duration_s > 0.0) || !pulse_duration_s.is_finite() {
            return Err(Error::invalid("pulse_duration_s must be strictly positive"));
        }
        if !(delay_s >= 0.0) || !delay_s.is_finite() {
            return Err(Error::invalid("delay_s must be non-negative"));
        }
        if !(peak_response > 0.0 && peak_response <= 1.0) {
            return Err(Error::invalid("peak_response must lie in (0, 1]"));
        }
        let t = GateTiming {
            delay_s,
            gate_duration_s,
            pulse_duration_s,
            peak_response,
        };
        let (lo, hi) = t.visible_range();
        if !(lo < hi) {
            return Err(Error::invalid("visible range is empty"));
        }
        Ok(t)
    }

    /// Back-solves timings from a visible range `[r_min, r_max]` with the
    /// equal-thirds closure: ramp, plateau, and ramp each span a third of the
    /// range, i.e. `gate_duration = 2 · pulse_duration`.
    pub fn from_visible_range(r_min_m: f64, r_max_m: f64, peak_response: f64) -> Result<Self> {
        if !(r_min_m >= 0.0 && r_min_m < r_max_m) {
            return Err(Error::invalid("need 0 <= r_min < r_max"));
        }
        let span_t = 2.0 * (r_max_m - r_min_m) / SPEED_OF_LIGHT;
        let pulse = span_t / 3.0;
        let gate = 2.0 * pulse;
        let delay = 2.0 * r_min_m / SPEED_OF_LIGHT + pulse;
        GateTiming::new(delay, gate, pulse, peak_response)
    }

    /// Range interval on which the profile is nonzero:
    /// `[c(ξ − T_p)/2, c(ξ + T_g)/2]`, floored at zero.
    pub fn visible_range(&self) -> (f64, f64) {
        let lo = 0.5 * SPEED_OF_LIGHT * (self.delay_s - self.pulse_duration_s);
        let hi = 0.5 * SPEED_OF_LIGHT * (self.delay_s + self.gate_duration_s);
        (lo.max(0.0), hi)
    }
}

/// Exact trapezoid value of a single gated exposure at range `r`.
///
/// Piecewise closed form in `τ = 2r/c` with gate `[ξ, ξ + T_g]` and pulse
/// `[τ, τ + T_p]`: `overlap(τ) = max(0, min(ξ + T_g, τ + T_p) − max(ξ, τ))`,
/// normalized by `min(T_g, T_p)` and scaled by `peak_response`.
pub fn analytic_profile(timing: &GateTiming, r_m: f64) -> f64 {
    if r_m < 0.0 {
        return 0.0;
    }
    let tau = 2.0 * r_m / SPEED_OF_LIGHT;
    let gate_open = timing.delay_s;
    let gate_close = timing.delay_s + timing.gate_duration_s;
    let overlap = (gate_close.min(tau + timing.pulse_duration_s) - gate_open.max(tau)).max(0.0);
    timing.peak_response * overlap / timing.gate_duration_s.min(timing.pulse_duration_s)
}

/// One slice's profile: timing plus its Chebyshev representation.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeIntensityProfile {
    pub timing: GateTiming,
    /// Coefficients of `Σ c_k T_k(x)`.
    pub cheb_coeffs: [f64; CHEB_COEFFS],
    /// Range interval mapped affinely onto x ∈ [−1, 1].
    pub domain_m: (f64, f64),
    /// Which gated slice this profile belongs to (0, 1, or 2).
    pub slice_index: u8,
}

impl RangeIntensityProfile {
    pub fn new(
        timing: GateTiming,
        cheb_coeffs: [f64; CHEB_COEFFS],
        domain_m: (f64, f64),
        slice_index: u8,
    ) -> Result<Self> {
        if !(domain_m.0 < domain_m.1) {
            return Err(Error::invalid("profile domain must satisfy r_lo < r_hi"));
        }
        if slice_index > 2 {
            return Err(Error::invalid("slice_index must be 0, 1, or 2"));
        }
        if cheb_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("Chebyshev coefficients must be finite"));
        }
        Ok(RangeIntensityProfile {
            timing,
            cheb_coeffs,
            domain_m,
            slice_index,
        })
    }

    /// Calibrates a profile by sampling its analytic trapezoid on the domain
    /// (visible range extended by [`DOMAIN_MARGIN_M`]) and least-squares
    /// fitting the Chebyshev coefficients.
    pub fn calibrated(timing: GateTiming, slice_index: u8) -> Result<Self> {
        let (r_min, r_max) = timing.visible_range();
        let domain = ((r_min - DOMAIN_MARGIN_M).max(0.0), r_max + DOMAIN_MARGIN_M);
        let n = 2048;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let r = domain.0 + (domain.1 - domain.0) * i as f64 / (n - 1) as f64;
                (r, analytic_profile(&timing, r))
            })
            .collect();
        let coeffs = fit_chebyshev(&samples, domain)?;
        RangeIntensityProfile::new(timing, coeffs, domain, slice_index)
    }

    #[inline]
    fn to_x(&self, r_m: f64) -> f64 {
        let (lo, hi) = self.domain_m;
        (2.0 * (r_m - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    /// Evaluates `C_i(r)`. Zero outside the gate's visible range in both
    /// modes; never negative.
    pub fn eval(&self, r_m: f64, mode: EvalMode) -> f64 {
        let (lo, hi) = self.timing.visible_range();
        if r_m < lo || r_m > hi {
            return 0.0;
        }
        match mode {
            EvalMode::Analytic => analytic_profile(&self.timing, r_m),
            EvalMode::Chebyshev => clenshaw(&self.cheb_coeffs, self.to_x(r_m)).max(0.0),
        }
    }

    /// Exact derivative of the Chebyshev series w.r.t. range, in 1/m
    /// (series derivative scaled by the affine map slope `2/(r_hi − r_lo)`).
    /// Zero outside the visible range, matching [`Self::eval`].
    pub fn derivative(&self, r_m: f64) -> f64 {
        let (lo, hi) = self.timing.visible_range();
        if r_m < lo || r_m > hi {
            return 0.0;
        }
        let deriv = cheb_derivative_coeffs(&self.cheb_coeffs);
        let (dlo, dhi) = self.domain_m;
        clenshaw(&deriv, self.to_x(r_m)) * 2.0 / (dhi - dlo)
    }

    /// Max |Chebyshev − analytic| over a dense grid on the domain, as used
    /// by the fit-tolerance checks. Compares the raw polynomial against the
    /// trapezoid so the zero-region override cannot mask fit error.
    pub fn max_fit_error(&self, grid_points: usize) -> f64 {
        let (lo, hi) = self.domain_m;
        (0..grid_points)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / (grid_points - 1) as f64;
                let fit = clenshaw(&self.cheb_coeffs, self.to_x(r));
                (fit - analytic_profile(&self.timing, r)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Clenshaw recurrence for `Σ c_k T_k(x)`.
pub fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b;
    }
    x * b1 - b2 + coeffs[0]
}

/// Coefficients of the derivative series: `d_{k−1} = d_{k+1} + 2k·c_k`,
/// downward from `k = N`, with `d_0` halved at the end.
fn cheb_derivative_coeffs(coeffs: &[f64; CHEB_COEFFS]) -> [f64; CHEB_COEFFS] {
    let mut d = [0.0; CHEB_COEFFS];
    for k in (1..CHEB_COEFFS).rev() {
        let upper = if k + 1 < CHEB_COEFFS { d[k + 1] } else { 0.0 };
        d[k - 1] = upper + 2.0 * k as f64 * coeffs[k];
    }
    d[0] *= 0.5;
    d
}

/// Least-squares fit of `CHEB_COEFFS` Chebyshev coefficients to samples of
/// `(r, intensity)` on `domain`, minimizing the sum of squared residuals.
pub fn fit_chebyshev(samples: &[(f64, f64)], domain_m: (f64, f64)) -> Result<[f64; CHEB_COEFFS]> {
    let (lo, hi) = domain_m;
    if !(lo < hi) {
        return Err(Error::Calibration("domain must satisfy r_lo < r_hi".into()));
    }
    if samples.len() < CHEB_COEFFS + 1 {
        return Err(Error::Calibration(format!(
            "need at least {} samples, got {}",
            CHEB_COEFFS + 1,
            samples.len()
        )));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < CHEB_COEFFS {
        return Err(Error::Calibration(format!(
            "rank-deficient sample set: {} distinct ranges for {} coefficients",
            distinct.len(),
            CHEB_COEFFS
        )));
    }

    let n = samples.len();
    let mut design = DMatrix::zeros(n, CHEB_COEFFS);
    let mut rhs = DVector::zeros(n);
    for (i, &(r, v)) in samples.iter().enumerate() {
        let x = (2.0 * (r - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
        let mut t_prev = 1.0;
        let mut t_cur = x;
        design[(i, 0)] = 1.0;
        design[(i, 1)] = x;
        for k in 2..CHEB_COEFFS {
            let t_next = 2.0 * x * t_cur - t_prev;
            design[(i, k)] = t_next;
            t_prev = t_cur;
            t_cur = t_next;
        }
        rhs[i] = v;
    }

    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * max_sv {
        return Err(Error::Calibration(
            "rank-deficient sample set: design matrix is numerically singular".into(),
        ));
    }
    let solution = svd
        .solve(&rhs, 1e-12 * max_sv)
        .map_err(|e| Error::Calibration(e.to_string()))?;
    let mut coeffs = [0.0; CHEB_COEFFS];
    for k in 0..CHEB_COEFFS {
        coeffs[k] = solution[k];
    }
    Ok(coeffs)
}

/// Visible ranges of the three default gates, metres.
pub const DEFAULT_GATE_RANGES_M: [(f64, f64); 3] = [(3.0, 72.0), (18.0, 123.0), (57.0, 176.0)];

/// The three calibrated slice profiles used together by the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: [RangeIntensityProfile; 3],
}

impl ProfileSet {
    pub fn new(profiles: [RangeIntensityProfile; 3]) -> Result<Self> {
        for (i, p) in profiles.iter().enumerate() {
            if p.slice_index as usize != i {
                return Err(Error::invalid(format!(
                    "profile at position {i} has slice_index {}",
                    p.slice_index
                )));
            }
        }
        Ok(ProfileSet { profiles })
    }

    #[inline]
    pub fn slice(&self, i: usize) -> &RangeIntensityProfile {
        &self.profiles[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RangeIntensityProfile> {
        self.profiles.iter()
    }

    /// `[C_0(r), C_1(r), C_2(r)]`.
    pub fn eval_triple(&self, r_m: f64, mode: EvalMode) -> [f64; 3] {
        [
            self.profiles[0].eval(r_m, mode),
            self.profiles[1].eval(r_m, mode),
            self.profiles[2].eval(r_m, mode),
        ]
    }

    /// Overall range covered by any gate.
    pub fn full_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.profiles {
            let (a, b) = p.timing.visible_range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    /// Finds `s` with `C_first(s) = c_ratio · C_2(s)` by scanning for a sign
    /// change of the difference and bisecting it. Brackets that straddle a
    /// support-edge discontinuity are rejected by the residual check, so only
    /// genuine crossings qualify. Returns the smallest such `s`, or `None`.
    pub fn crossover_with_last(&self, first: usize, c_ratio: f64, mode: EvalMode) -> Option<f64> {
        assert!(first < 2, "crossover compares slice 0 or 1 against slice 2");
        let f = |s: f64| {
            self.profiles[first].eval(s, mode) - c_ratio * self.profiles[2].eval(s, mode)
        };
        let (lo, hi) = self.full_range();
        let steps = ((hi - lo) / 0.05).ceil() as usize;
        let mut prev_s = lo;
        let mut prev_f = f(lo);
        for i in 1..=steps {
            let s = lo + (hi - lo) * i as f64 / steps as f64;
            let fs = f(s);
            if prev_f > 0.0 && fs <= 0.0 {
                let (mut a, mut b) = (prev_s, s);
                for _ in 0..100 {
                    let mid = 0.5 * (a + b);
                    if f(mid) > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let root = 0.5 * (a + b);
                if f(root).abs() < 1e-9 {
                    return Some(root);
                }
            }
            prev_s = s;
            prev_f = fs;
        }
        None
    }
}

/// The three default profiles with the visible ranges 3–72 m, 18–123 m, and
/// 57–176 m, timings back-solved with the equal-thirds closure, peak 1.0,
/// calibrated against their analytic trapezoids.
pub fn default_profiles() -> ProfileSet {
    let mut profiles = Vec::with_capacity(3);
    for (i, &(r_min, r_max)) in DEFAULT_GATE_RANGES_M.iter().enumerate() {
        let timing = GateTiming::from_visible_range(r_min, r_max, 1.0)
            .expect("default gate ranges are valid");
        profiles.push(
            RangeIntensityProfile::calibrated(timing, i as u8)
                .expect("default calibration succeeds"),
        );
    }
    ProfileSet::new([
        profiles[0].clone(),
        profiles[1].clone(),
        profiles[2].clone(),
    ])
    .expect("slice indices are ordered")
}
