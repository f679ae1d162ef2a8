//! Reference trajectories: closed-form synthetic profiles and a CSV ingester
//! for externally recorded ground truth.
//!
//! A trajectory is a list of `(InsState, ImuSample)` pairs at the IMU rate:
//! the exact (bias-free) state at each sample time together with the exact
//! body-frame inputs that reproduce the motion. For synthetic profiles the
//! inputs are evaluated analytically at the midpoint of each sample interval
//! (the ideal zero-order-hold equivalent, making single-exponential
//! propagation second-order accurate); for CSV files they are recovered by
//! central differences of the recorded poses.

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::ins::{ImuSample, InsState};
use crate::lie::so3;

/// Parameters of the smooth figure-eight profile: a 1:2 Lissajous loop in
/// the horizontal plane with a sinusoidal altitude and a phase-staggered
/// sinusoidal attitude sweep on all three axes.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureEightParams {
    /// Half-width of the figure eight, m.
    pub horizontal_amplitude: f64,
    /// Altitude oscillation amplitude, m.
    pub vertical_amplitude: f64,
    /// Time for one full loop, s.
    pub period: f64,
    /// Attitude oscillation amplitude per axis, rad.
    pub attitude_amplitude: Vector3<f64>,
    /// Attitude oscillation period, s.
    pub attitude_period: f64,
}

impl Default for FigureEightParams {
    fn default() -> Self {
        FigureEightParams {
            horizontal_amplitude: 5.0,
            vertical_amplitude: 1.0,
            period: 12.0,
            attitude_amplitude: Vector3::new(0.4, 0.35, 0.6),
            attitude_period: 10.0,
        }
    }
}

/// Closed-form motion profiles.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// Figure-eight loop with oscillating attitude.
    FigureEight(FigureEightParams),
    /// Constant-velocity level flight with identity attitude.
    StraightLine {
        /// World-frame velocity, m/s.
        velocity: Vector3<f64>,
    },
}

impl Profile {
    /// Rotation-vector attitude path and its time derivative.
    fn theta(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Profile::FigureEight(p) => {
                let w = 2.0 * std::f64::consts::PI / p.attitude_period;
                let a = &p.attitude_amplitude;
                let ph = 2.0 * std::f64::consts::FRAC_PI_3;
                let th = Vector3::new(
                    a.x * (w * t).sin(),
                    a.y * (w * t + ph).sin(),
                    a.z * (w * t + 2.0 * ph).sin(),
                );
                let dth = Vector3::new(
                    a.x * w * (w * t).cos(),
                    a.y * w * (w * t + ph).cos(),
                    a.z * w * (w * t + 2.0 * ph).cos(),
                );
                (th, dth)
            }
            Profile::StraightLine { .. } => (Vector3::zeros(), Vector3::zeros()),
        }
    }

    /// Position path with its first two time derivatives.
    fn translation(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        match self {
            Profile::FigureEight(p) => {
                let w = 2.0 * std::f64::consts::PI / p.period;
                let (ax, az) = (p.horizontal_amplitude, p.vertical_amplitude);
                let pos = Vector3::new(
                    ax * (w * t).sin(),
                    0.5 * ax * (2.0 * w * t).sin(),
                    az * (w * t + std::f64::consts::FRAC_PI_4).sin(),
                );
                let vel = Vector3::new(
                    ax * w * (w * t).cos(),
                    ax * w * (2.0 * w * t).cos(),
                    az * w * (w * t + std::f64::consts::FRAC_PI_4).cos(),
                );
                let acc = Vector3::new(
                    -ax * w * w * (w * t).sin(),
                    -2.0 * ax * w * w * (2.0 * w * t).sin(),
                    -az * w * w * (w * t + std::f64::consts::FRAC_PI_4).sin(),
                );
                (pos, vel, acc)
            }
            Profile::StraightLine { velocity } => {
                (velocity * t, *velocity, Vector3::zeros())
            }
        }
    }

    /// Exact bias-free state at time `t`.
    pub fn state_at(&self, t: f64) -> InsState {
        let (th, _) = self.theta(t);
        let (pos, vel, _) = self.translation(t);
        InsState {
            attitude: so3::exp(&th),
            velocity: vel,
            position: pos,
            ..InsState::zero()
        }
    }

    /// Exact body-frame inputs at time `t`: the angular rate consistent with
    /// `Ṙ = R·ω^∧` along the attitude path, and the specific force
    /// `a = Rᵀ(p̈ − g)`.
    pub fn input_at(&self, t: f64, gravity: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let (th, dth) = self.theta(t);
        let (_, _, acc) = self.translation(t);
        // d/dt exp(θ) = exp(θ)·(J(θ)·θ̇)^∧ with J the derivative-transport
        // Jacobian for right-side increments.
        let omega = so3::left_jacobian(&(-th)) * dth;
        let accel = so3::exp(&th).transpose() * (acc - gravity);
        (omega, accel)
    }
}

/// Where a trajectory comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryKind {
    /// Evaluate a closed-form profile.
    Synthetic(Profile),
    /// Ingest recorded ground truth (`t,qw,qx,qy,qz,px,py,pz`).
    CsvFile(PathBuf),
}

/// A trajectory request: source, length, and sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    /// Source of the motion.
    pub kind: TrajectoryKind,
    /// Length of the trajectory, s.
    pub duration: f64,
    /// IMU sampling rate, Hz.
    pub imu_rate: f64,
}

/// Produces the ground-truth sample list for a trajectory request.
///
/// Synthetic profiles are sampled exactly: one `(state, inputs)` pair per IMU
/// interval, the state at the interval start and the inputs at the interval
/// midpoint (timestamped at the start). CSV files are parsed and
/// differentiated numerically; their own timestamps are kept, truncated at
/// `duration`.
pub fn generate_trajectory(
    spec: &TrajectorySpec,
    gravity: &Vector3<f64>,
) -> Result<Vec<(InsState, ImuSample)>> {
    if spec.duration <= 0.0 || !spec.duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {}",
            spec.duration
        )));
    }
    match &spec.kind {
        TrajectoryKind::Synthetic(profile) => {
            if spec.imu_rate <= 0.0 || !spec.imu_rate.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "imu_rate must be positive, got {}",
                    spec.imu_rate
                )));
            }
            let dt = 1.0 / spec.imu_rate;
            let n = (spec.duration * spec.imu_rate).round() as usize;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                let t = k as f64 * dt;
                let state = profile.state_at(t);
                let (omega, accel) = profile.input_at(t + 0.5 * dt, gravity);
                out.push((
                    state,
                    ImuSample {
                        omega,
                        accel,
                        timestamp: t,
                    },
                ));
            }
            Ok(out)
        }
        TrajectoryKind::CsvFile(path) => ingest_csv(path, spec.duration, gravity),
    }
}

/// One parsed ground-truth row.
struct PoseRow {
    t: f64,
    rotation: nalgebra::Matrix3<f64>,
    position: Vector3<f64>,
}

fn parse_pose_row(line_no: usize, line: &str) -> Result<PoseRow> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 8 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected 8 comma-separated fields, found {}", fields.len()),
        });
    }
    let mut v = [0.0f64; 8];
    for (i, f) in fields.iter().enumerate() {
        v[i] = f.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("field {} is not a number: {f:?}", i + 1),
        })?;
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse {
            line: line_no,
            msg: "non-finite value".into(),
        });
    }
    let q = Quaternion::new(v[1], v[2], v[3], v[4]);
    if (q.norm() - 1.0).abs() > 1e-3 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("quaternion norm {} is not close to 1", q.norm()),
        });
    }
    Ok(PoseRow {
        t: v[0],
        rotation: UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner(),
        position: Vector3::new(v[5], v[6], v[7]),
    })
}

/// Parses `t,qw,qx,qy,qz,px,py,pz` ground truth and recovers velocities and
/// body-frame inputs by central differences (one-sided at the ends).
fn ingest_csv(
    path: &Path,
    duration: f64,
    gravity: &Vector3<f64>,
) -> Result<Vec<(InsState, ImuSample)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?
        .1;
    let expected = "t,qw,qx,qy,qz,px,py,pz";
    if header.split(',').map(str::trim).collect::<Vec<_>>().join(",") != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be {expected:?}, found {header:?}"),
        });
    }
    let mut rows = Vec::new();
    let mut start: Option<f64> = None;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_pose_row(idx + 1, line)?;
        let base = *start.get_or_insert(row.t);
        if let Some(prev) = rows.last() {
            let prev: &PoseRow = prev;
            if row.t <= prev.t {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("timestamps must increase, {} after {}", row.t, prev.t),
                });
            }
        }
        if row.t - base > duration + 1e-9 {
            break;
        }
        rows.push(row);
    }
    if rows.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("need at least 3 data rows, found {}", rows.len()),
        });
    }
    let base = rows[0].t;

    // Central differences of position → velocity, velocity → acceleration,
    // and of attitude (via relative logs) → body angular rate.
    let n = rows.len();
    let idx3 = |i: usize| -> (usize, usize) {
        if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        }
    };
    let vel: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let (a, b) = idx3(i);
            (rows[b].position - rows[a].position) / (rows[b].t - rows[a].t)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = idx3(i);
        let span = rows[b].t - rows[a].t;
        // R_aᵀR_b ≈ exp(ω_body·span): the relative log is already body-frame.
        let omega = so3::log(&(rows[a].rotation.transpose() * rows[b].rotation))
            .map_err(|_| Error::Parse {
                line: i + 2,
                msg: "attitude step reaches the rotation cut locus".into(),
            })?
            / span;
        let acc = (vel[b] - vel[a]) / span;
        let state = InsState {
            attitude: rows[i].rotation,
            velocity: vel[i],
            position: rows[i].position,
            ..InsState::zero()
        };
        let accel = rows[i].rotation.transpose() * (acc - gravity);
        out.push((
            state,
            ImuSample {
                omega,
                accel,
                timestamp: rows[i].t - base,
            },
        ));
    }
    Ok(out)
}
