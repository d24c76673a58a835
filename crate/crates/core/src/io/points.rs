//! Ground-truth depth points: `x_pixel y_pixel depth_m` per line, or a dense
//! PFM where non-positive / non-finite values mean "no measurement".

use crate::image::ScalarImage;
use crate::metrics::GroundTruthPoint;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_points(path: &Path, points: &[GroundTruthPoint]) -> Result<()> {
    let mut out = String::new();
    for p in points {
        writeln!(out, "{} {} {}", p.x, p.y, p.depth_m).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_points(path: &Path) -> Result<Vec<GroundTruthPoint>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(
                &display,
                format!("line {}: expected 'x y depth'", lineno + 1),
            ));
        }
        let x: usize = fields[0].parse().map_err(|_| {
            Error::format(&display, format!("line {}: bad x", lineno + 1))
        })?;
        let y: usize = fields[1].parse().map_err(|_| {
            Error::format(&display, format!("line {}: bad y", lineno + 1))
        })?;
        let depth_m: f64 = fields[2].parse().map_err(|_| {
            Error::format(&display, format!("line {}: bad depth", lineno + 1))
        })?;
        points.push(GroundTruthPoint { x, y, depth_m });
    }
    Ok(points)
}

/// Treats a dense depth image as sparse ground truth; pixels with
/// non-positive or non-finite values carry no measurement.
pub fn points_from_depth_image(depth: &ScalarImage) -> Vec<GroundTruthPoint> {
    let mut points = Vec::new();
    for (x, y, &d) in depth.enumerate() {
        if d.is_finite() && d > 0.0 {
            points.push(GroundTruthPoint { x, y, depth_m: d });
        }
    }
    points
}
