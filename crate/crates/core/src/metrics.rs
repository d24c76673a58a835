//! Depth evaluation metrics and distance-binned reporting.
//!
//! RMSE, MAE, ARD, and δ accuracies over sparse ground-truth points within a
//! range window (default 3–80 m, half-open), plus completeness: the fraction
//! of in-range ground-truth points covered by a valid prediction. Binned
//! reports assign points to half-open bins by ground-truth depth and average
//! each metric over non-empty bins with equal weight.

use crate::image::pairwise_sum;
use crate::inversion::DepthMap;
use crate::{Error, Result};
use serde::Serialize;

/// δᵢ threshold convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaConvention {
    /// `max(pred/gt, gt/pred) < 1.25^i` — the usual convention.
    #[default]
    PowerOfBase,
    /// `max(pred/gt, gt/pred) < 1.25·i` — the literal reading.
    MultipleOfBase,
}

impl DeltaConvention {
    fn threshold(&self, i: u32) -> f64 {
        match self {
            DeltaConvention::PowerOfBase => 1.25f64.powi(i as i32),
            DeltaConvention::MultipleOfBase => 1.25 * i as f64,
        }
    }
}

/// One ground-truth sample: a pixel location and its metric depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthPoint {
    pub x: usize,
    pub y: usize,
    pub depth_m: f64,
}

/// Depth error metrics over one point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse_m: f64,
    pub mae_m: f64,
    pub ard: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub completeness: f64,
    pub n_points: usize,
    pub range_m: (f64, f64),
}

/// Per-bin metrics plus their unweighted aggregate.
#[derive(Debug, Clone, Serialize)]
pub struct BinnedReport {
    pub bin_edges_m: Vec<f64>,
    /// One entry per bin; `None` where the bin holds no usable point.
    pub per_bin: Vec<Option<MetricsReport>>,
    /// Unweighted mean of each metric over non-empty bins.
    pub aggregate: MetricsReport,
}

/// Default evaluation range, metres.
pub const DEFAULT_RANGE_M: (f64, f64) = (3.0, 80.0);

/// Default bin edges: 11 equal 7 m bins over [3, 80].
pub fn default_bin_edges() -> Vec<f64> {
    (0..=11).map(|i| 3.0 + 7.0 * i as f64).collect()
}

fn metrics_over(
    pairs: &[(f64, f64)],
    in_range: usize,
    range_m: (f64, f64),
    convention: DeltaConvention,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::NoUsablePoints {
            in_range,
            valid: 0,
        });
    }
    let n = pairs.len() as f64;
    let sq: Vec<f64> = pairs.iter().map(|&(p, g)| (p - g) * (p - g)).collect();
    let abs: Vec<f64> = pairs.iter().map(|&(p, g)| (p - g).abs()).collect();
    let rel: Vec<f64> = pairs.iter().map(|&(p, g)| (p - g).abs() / g).collect();
    let ratio_ok = |i: u32| -> f64 {
        let t = convention.threshold(i);
        pairs
            .iter()
            .filter(|&&(p, g)| (p / g).max(g / p) < t)
            .count() as f64
            / n
    };
    Ok(MetricsReport {
        rmse_m: (pairwise_sum(&sq) / n).sqrt(),
        mae_m: pairwise_sum(&abs) / n,
        ard: pairwise_sum(&rel) / n,
        delta1: ratio_ok(1),
        delta2: ratio_ok(2),
        delta3: ratio_ok(3),
        completeness: pairs.len() as f64 / in_range as f64,
        n_points: pairs.len(),
        range_m,
    })
}

fn usable_pairs(
    pred: &DepthMap,
    gt: &[GroundTruthPoint],
    range_m: (f64, f64),
) -> Result<(Vec<(f64, f64)>, usize)> {
    let mut pairs = Vec::new();
    let mut in_range = 0usize;
    for point in gt {
        if point.x >= pred.width() || point.y >= pred.height() {
            return Err(Error::invalid(format!(
                "ground-truth point ({}, {}) outside the {}x{} prediction",
                point.x,
                point.y,
                pred.width(),
                pred.height()
            )));
        }
        if !(point.depth_m > 0.0) || !point.depth_m.is_finite() {
            return Err(Error::invalid("ground-truth depth must be positive"));
        }
        if point.depth_m < range_m.0 || point.depth_m >= range_m.1 {
            continue;
        }
        in_range += 1;
        let p = *pred.depth.get(point.x, point.y);
        if *pred.validity.get(point.x, point.y) && p.is_finite() && p > 0.0 {
            pairs.push((p, point.depth_m));
        }
    }
    Ok((pairs, in_range))
}

/// Metrics of a prediction against sparse ground truth, restricted to
/// `range_m` (half-open). Errors with [`Error::NoUsablePoints`] instead of
/// producing NaN when nothing survives the filters.
pub fn compute_metrics(
    pred: &DepthMap,
    gt: &[GroundTruthPoint],
    range_m: (f64, f64),
    convention: DeltaConvention,
) -> Result<MetricsReport> {
    if !(range_m.0 < range_m.1) {
        return Err(Error::invalid("metrics range must satisfy min < max"));
    }
    let (pairs, in_range) = usable_pairs(pred, gt, range_m)?;
    metrics_over(&pairs, in_range, range_m, convention)
}

/// Binned metrics over half-open bins `[e_j, e_{j+1})` of ground-truth depth.
/// The aggregate weights every non-empty bin equally.
pub fn binned_metrics(
    pred: &DepthMap,
    gt: &[GroundTruthPoint],
    edges_m: &[f64],
    convention: DeltaConvention,
) -> Result<BinnedReport> {
    if edges_m.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if edges_m.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("bin edges must be strictly increasing"));
    }
    let range = (edges_m[0], *edges_m.last().unwrap());
    let n_bins = edges_m.len() - 1;
    let mut per_bin_points: Vec<Vec<GroundTruthPoint>> = vec![Vec::new(); n_bins];
    for point in gt {
        if point.depth_m < range.0 || point.depth_m >= range.1 {
            continue;
        }
        let bin = edges_m
            .windows(2)
            .position(|w| point.depth_m >= w[0] && point.depth_m < w[1])
            .expect("in-range point falls in some bin");
        per_bin_points[bin].push(*point);
    }

    let mut per_bin: Vec<Option<MetricsReport>> = Vec::with_capacity(n_bins);
    for (j, points) in per_bin_points.iter().enumerate() {
        let bin_range = (edges_m[j], edges_m[j + 1]);
        let report = if points.is_empty() {
            None
        } else {
            compute_metrics(pred, points, bin_range, convention).ok()
        };
        per_bin.push(report);
    }

    let filled: Vec<&MetricsReport> = per_bin.iter().flatten().collect();
    if filled.is_empty() {
        let (_, in_range) = usable_pairs(pred, gt, range)?;
        return Err(Error::NoUsablePoints {
            in_range,
            valid: 0,
        });
    }
    let k = filled.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| filled.iter().map(|r| f(r)).sum::<f64>() / k;
    let aggregate = MetricsReport {
        rmse_m: mean(|r| r.rmse_m),
        mae_m: mean(|r| r.mae_m),
        ard: mean(|r| r.ard),
        delta1: mean(|r| r.delta1),
        delta2: mean(|r| r.delta2),
        delta3: mean(|r| r.delta3),
        completeness: mean(|r| r.completeness),
        n_points: filled.iter().map(|r| r.n_points).sum(),
        range_m: range,
    };
    Ok(BinnedReport {
        bin_edges_m: edges_m.to_vec(),
        per_bin,
        aggregate,
    })
}
