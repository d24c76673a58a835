//! Plain-text pose rows: `frame_id r00 r01 r02 r10 ... r22 tx ty tz`, one
//! camera-to-world pose per line. The relative transform from frame `t` to
//! frame `n` is `pose_n⁻¹ ∘ pose_t`. Blank lines and `#` comments allowed.

use crate::geometry::RigidPose;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct PoseEntry {
    pub frame_id: u64,
    pub pose: RigidPose,
}

pub fn write_poses(path: &Path, poses: &[PoseEntry]) -> Result<()> {
    let mut out = String::new();
    for entry in poses {
        let v = entry.pose.to_row_major();
        write!(out, "{}", entry.frame_id).unwrap();
        for x in v {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseEntry>> {
    let display = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(Error::format(
                &display,
                format!("line {}: expected 13 fields, found {}", lineno + 1, fields.len()),
            ));
        }
        let frame_id: u64 = fields[0].parse().map_err(|_| {
            Error::format(&display, format!("line {}: bad frame id", lineno + 1))
        })?;
        let mut values = [0.0; 12];
        for (i, f) in fields[1..].iter().enumerate() {
            values[i] = f.parse().map_err(|_| {
                Error::format(&display, format!("line {}: bad number '{f}'", lineno + 1))
            })?;
        }
        entries.push(PoseEntry {
            frame_id,
            pose: RigidPose::from_row_major(&values)?,
        });
    }
    Ok(entries)
}
