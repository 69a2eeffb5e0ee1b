//! TUM text trajectories: `timestamp tx ty tz qx qy qz qw` per line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::eval::{EvalError, Trajectory};
use crate::geometry::RigidTransform;

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] EvalError),
}

/// One line per pose, timestamps with nanosecond resolution.
pub fn format_tum(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.len() * 96);
    for (t, pose) in traj.entries() {
        let p = pose.translation;
        let q = pose.rotation.quaternion();
        writeln!(
            out,
            "{:.9} {:.10} {:.10} {:.10} {:.10} {:.10} {:.10} {:.10}",
            t, p.x, p.y, p.z, q.i, q.j, q.k, q.w
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Blank lines and lines starting with `#` are skipped.
pub fn parse_tum(text: &str) -> Result<Trajectory, TrajectoryFileError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(TrajectoryFileError::Parse {
                line: line_no,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 8];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| TrajectoryFileError::Parse {
                    line: line_no,
                    message: format!("invalid number `{field}`"),
                })?;
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if q.norm() < 1e-6 {
            return Err(TrajectoryFileError::Parse {
                line: line_no,
                message: "zero quaternion".into(),
            });
        }
        entries.push((
            v[0],
            RigidTransform::new(UnitQuaternion::from_quaternion(q), Vector3::new(v[1], v[2], v[3])),
        ));
    }
    Ok(Trajectory::from_entries(entries)?)
}

pub fn read_tum(path: &Path) -> Result<Trajectory, TrajectoryFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_tum(&text)
}

pub fn write_tum(path: &Path, traj: &Trajectory) -> Result<(), TrajectoryFileError> {
    std::fs::write(path, format_tum(traj)).map_err(|source| TrajectoryFileError::Io {
        path: path.display().to_string(),
        source,
    })
}
