//! Trajectory file I/O: the CSV format demonstrations are recorded in and
//! synthetic demonstration generation.
//!
//! Columns: `t,px,py,pz,qw,qx,qy,qz[,vx,vy,vz,wx,wy,wz]` — header required,
//! timestamps strictly increasing, quaternions unit norm to 1e-6. All parsing
//! and formatting is locale-independent (`.` decimal point, UTF-8).

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::dmp::Demonstration;
use crate::minjerk;
use crate::quat::{self, RotVec, UnitQuaternion};

#[derive(Debug, Error)]
pub enum TrajIoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trajectory file is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One pose sample, optionally with twist.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRow {
    pub t: f64,
    pub p: Vector3<f64>,
    pub q: UnitQuaternion,
    pub pdot: Option<Vector3<f64>>,
    pub omega: Option<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryFile {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryFile {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, TrajIoError> {
        let mut rows = Vec::new();
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(TrajIoError::Empty),
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((n, Ok(l))) => break (n, l),
                Some((n, Err(e))) => {
                    return Err(TrajIoError::Parse { line: n + 1, msg: e.to_string() })
                }
            }
        };
        let cols = header.1.split(',').count();
        if !header.1.starts_with("t,") || (cols != 8 && cols != 14) {
            return Err(TrajIoError::Parse {
                line: header.0 + 1,
                msg: format!(
                    "expected header t,px,py,pz,qw,qx,qy,qz[,vx,vy,vz,wx,wy,wz], got '{}'",
                    header.1
                ),
            });
        }
        for (n, line) in lines {
            let line = line.map_err(|e| TrajIoError::Parse { line: n + 1, msg: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrajIoError::Parse { line: n + 1, msg: e.to_string() })?;
            if vals.len() != cols {
                return Err(TrajIoError::Parse {
                    line: n + 1,
                    msg: format!("expected {cols} columns, got {}", vals.len()),
                });
            }
            let qn = (vals[4] * vals[4] + vals[5] * vals[5] + vals[6] * vals[6]
                + vals[7] * vals[7])
                .sqrt();
            if (qn - 1.0).abs() > 1e-6 {
                return Err(TrajIoError::Parse {
                    line: n + 1,
                    msg: format!("quaternion norm {qn} deviates from 1 beyond 1e-6"),
                });
            }
            if let Some(prev) = rows.last() {
                let prev: &TrajectoryRow = prev;
                if vals[0] <= prev.t {
                    return Err(TrajIoError::Parse {
                        line: n + 1,
                        msg: "timestamps must be strictly increasing".into(),
                    });
                }
            }
            rows.push(TrajectoryRow {
                t: vals[0],
                p: Vector3::new(vals[1], vals[2], vals[3]),
                q: UnitQuaternion::from_wxyz([vals[4], vals[5], vals[6], vals[7]]),
                pdot: (cols == 14).then(|| Vector3::new(vals[8], vals[9], vals[10])),
                omega: (cols == 14).then(|| Vector3::new(vals[11], vals[12], vals[13])),
            });
        }
        if rows.is_empty() {
            return Err(TrajIoError::Empty);
        }
        Ok(TrajectoryFile { rows })
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let with_twist = self.rows.first().is_some_and(|r| r.pdot.is_some());
        if with_twist {
            writeln!(w, "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz")?;
        } else {
            writeln!(w, "t,px,py,pz,qw,qx,qy,qz")?;
        }
        for r in &self.rows {
            let q = r.q.wxyz();
            write!(w, "{},{},{},{},{},{},{},{}", r.t, r.p.x, r.p.y, r.p.z, q[0], q[1], q[2], q[3])?;
            if with_twist {
                let v = r.pdot.unwrap_or_default();
                let om = r.omega.unwrap_or_default();
                write!(w, ",{},{},{},{},{},{}", v.x, v.y, v.z, om.x, om.y, om.z)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_demonstration(&self) -> Demonstration {
        Demonstration {
            t: self.rows.iter().map(|r| r.t).collect(),
            positions: self.rows.iter().map(|r| r.p).collect(),
            orientations: self.rows.iter().map(|r| r.q).collect(),
            velocities: None,
            accelerations: None,
        }
    }
}

/// Synthetic minimum-jerk demonstration: straight-line translation plus a
/// fixed-axis rotation, both on the same minimum-jerk profile.
pub fn synthetic_demo(
    p0: Vector3<f64>,
    p_goal: Vector3<f64>,
    rot_axis_angle: Vector3<f64>,
    duration: f64,
    dt: f64,
) -> TrajectoryFile {
    let n = (duration / dt).round() as usize + 1;
    let rows = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let (s, sdot, _) = minjerk::profile(t, duration);
            TrajectoryRow {
                t,
                p: p0 + s * (p_goal - p0),
                q: quat::exp(RotVec(s * rot_axis_angle)).expect("rotation within domain"),
                pdot: Some(sdot * (p_goal - p0)),
                omega: Some(sdot * rot_axis_angle),
            }
        })
        .collect();
    TrajectoryFile { rows }
}

/// The demonstration used by the verification suites and the smoke tests.
pub fn standard_demo() -> TrajectoryFile {
    synthetic_demo(
        Vector3::new(0.0, -0.3, 0.15),
        Vector3::new(0.4, 0.25, 0.6),
        Vector3::new(0.1, 0.2, std::f64::consts::FRAC_PI_3),
        4.7,
        0.002,
    )
}
