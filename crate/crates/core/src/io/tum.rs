//! `timestamp tx ty tz qx qy qz qw` trajectory files.

use std::io::{BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{fmt_time, fmt_value, Tokens};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Stamped, Trajectory};

pub const TUM_HEADER: &str = "# timestamp tx ty tz qx qy qz qw";

pub fn render_pose_fields(line: &mut String, pose: &Pose) {
    let q = pose.orientation.quaternion();
    for v in [pose.position.x, pose.position.y, pose.position.z, q.i, q.j, q.k, q.w] {
        line.push(' ');
        line.push_str(&fmt_value(v));
    }
}

pub fn render_sample(t: f64, pose: &Pose) -> String {
    let mut line = fmt_time(t);
    render_pose_fields(&mut line, pose);
    line
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "{TUM_HEADER}")?;
    for s in traj.iter() {
        writeln!(out, "{}", render_sample(s.t, &s.pose))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads seven pose fields; quaternions within 1e-9 of unit norm are kept
/// exactly as written so files round-trip.
pub(crate) fn parse_pose_fields(tokens: &mut Tokens<'_>) -> Result<Pose> {
    let x = tokens.float("tx")?;
    let y = tokens.float("ty")?;
    let z = tokens.float("tz")?;
    let qx = tokens.float("qx")?;
    let qy = tokens.float("qy")?;
    let qz = tokens.float("qz")?;
    let qw = tokens.float("qw")?;
    let q = Quaternion::new(qw, qx, qy, qz);
    let norm = q.norm();
    if norm < 1e-12 {
        return Err(Error::parse(tokens.line, "", "zero quaternion"));
    }
    let orientation = if (norm - 1.0).abs() <= 1e-9 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    };
    Ok(Pose {
        position: Vector3::new(x, y, z),
        orientation,
    })
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<Trajectory> {
    let mut samples: Vec<Stamped> = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let Some(mut tokens) = Tokens::data_line(&line, k + 1) else {
            continue;
        };
        let t = tokens.float("timestamp")?;
        let pose = parse_pose_fields(&mut tokens)?;
        tokens.finish()?;
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(Error::parse(k + 1, fmt_time(t), "timestamp not strictly increasing"));
            }
        }
        samples.push(Stamped { t, pose });
    }
    Trajectory::from_samples(samples)
}
