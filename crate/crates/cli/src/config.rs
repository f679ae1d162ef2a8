//! Flat `key=value` experiment configuration: file parsing, override
//! application, and the reference text embedded in `--help`.
//!
//! Keys map one-to-one onto the simulation configuration; unknown keys are
//! rejected so a typo can never silently fall back to a default.

use invariant_kf::sim::trajectory::{Profile, TrajectoryKind};
use invariant_kf::sim::{HandednessSet, SimConfig};
use nalgebra::Vector3;
use std::path::{Path, PathBuf};

/// Every key, in the order shown by `--help`.
pub const KEY_REFERENCE: &str = "\
Configuration keys (config file and --set, later assignments win):
  trials         Monte-Carlo trials                          [100]
  duration       trajectory length, s                        [80]
  imu_rate       IMU rate, Hz                                [200]
  gnss_rate      GNSS fix rate, Hz; must divide imu_rate     [10]
  substeps       integration sub-steps per IMU interval      [80]
  init_att_std   initial attitude std, deg per axis          [20]
  init_vel_std   initial velocity std, m/s per axis          [0.5]
  init_pos_std   initial position std, m per axis            [1]
  init_bg_std    initial gyro-bias std, rad/s per axis       [0.1]
  init_ba_std    initial accel-bias std, m/s² per axis       [0.1]
  sigma_g        gyro white-noise intensity, rad/s·√s        [0.01]
  sigma_a        accel white-noise intensity, m/s²·√s        [0.05]
  sigma_bg       gyro-bias random walk, rad/s²·√s            [0.001]
  sigma_ba       accel-bias random walk, m/s³·√s             [0.001]
  gnss_std       GNSS noise std, m per axis                  [0.2]
  seed           base RNG seed; trial i uses seed+i          [0]
  reset_enabled  apply the covariance-correcting reset       [true]
  handedness     left | right | both                         [both]
  trajectory     figure-eight | straight-line:VX,VY,VZ | csv:PATH
                                                             [figure-eight]
  gravity        world gravity GX,GY,GZ, m/s²                [0,0,-9.81]

Config files hold one KEY=VALUE per line; blank lines and lines starting
with '#' are ignored. Precedence: defaults < --config file < --set pairs
< dedicated flags (--trials, --substeps, --seed).";

/// Applies one `key=value` assignment to the configuration.
pub fn apply_assignment(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), String> {
    let bad = |what: &str| format!("invalid value {value:?} for key {key:?}: expected {what}");
    match key {
        "trials" => cfg.trials = value.parse().map_err(|_| bad("a positive integer"))?,
        "duration" => cfg.duration = value.parse().map_err(|_| bad("seconds"))?,
        "imu_rate" => cfg.imu_rate = value.parse().map_err(|_| bad("Hz"))?,
        "gnss_rate" => cfg.gnss_rate = value.parse().map_err(|_| bad("Hz"))?,
        "substeps" => cfg.substeps = value.parse().map_err(|_| bad("a positive integer"))?,
        "init_att_std" => cfg.init_att_std = value.parse().map_err(|_| bad("degrees"))?,
        "init_vel_std" => cfg.init_vel_std = value.parse().map_err(|_| bad("m/s"))?,
        "init_pos_std" => cfg.init_pos_std = value.parse().map_err(|_| bad("metres"))?,
        "init_bg_std" => cfg.init_bg_std = value.parse().map_err(|_| bad("rad/s"))?,
        "init_ba_std" => cfg.init_ba_std = value.parse().map_err(|_| bad("m/s²"))?,
        "sigma_g" => cfg.sigma_g = value.parse().map_err(|_| bad("rad/s·√s"))?,
        "sigma_a" => cfg.sigma_a = value.parse().map_err(|_| bad("m/s²·√s"))?,
        "sigma_bg" => cfg.sigma_bg = value.parse().map_err(|_| bad("rad/s²·√s"))?,
        "sigma_ba" => cfg.sigma_ba = value.parse().map_err(|_| bad("m/s³·√s"))?,
        "gnss_std" => cfg.gnss_std = value.parse().map_err(|_| bad("metres"))?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad("a non-negative integer"))?,
        "reset_enabled" => {
            cfg.reset_enabled = value.parse().map_err(|_| bad("true or false"))?
        }
        "handedness" => {
            cfg.handedness = match value {
                "left" => HandednessSet::Left,
                "right" => HandednessSet::Right,
                "both" => HandednessSet::Both,
                _ => return Err(bad("left, right or both")),
            }
        }
        "trajectory" => cfg.trajectory = parse_trajectory(value)?,
        "gravity" => {
            let v = parse_triple(value)
                .ok_or_else(|| bad("three comma-separated components"))?;
            cfg.gravity = v;
        }
        _ => {
            return Err(format!(
                "unknown configuration key {key:?}; run with --help for the key reference"
            ))
        }
    }
    Ok(())
}

fn parse_triple(value: &str) -> Option<Vector3<f64>> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return None;
    }
    let x = parts[0].trim().parse().ok()?;
    let y = parts[1].trim().parse().ok()?;
    let z = parts[2].trim().parse().ok()?;
    Some(Vector3::new(x, y, z))
}

fn parse_trajectory(value: &str) -> Result<TrajectoryKind, String> {
    if value == "figure-eight" {
        return Ok(TrajectoryKind::Synthetic(Profile::FigureEight(
            Default::default(),
        )));
    }
    if let Some(rest) = value.strip_prefix("straight-line:") {
        let v = parse_triple(rest).ok_or_else(|| {
            format!("invalid straight-line velocity {rest:?}: expected VX,VY,VZ")
        })?;
        return Ok(TrajectoryKind::Synthetic(Profile::StraightLine {
            velocity: v,
        }));
    }
    if let Some(path) = value.strip_prefix("csv:") {
        if path.is_empty() {
            return Err("csv trajectory needs a path: csv:PATH".into());
        }
        return Ok(TrajectoryKind::CsvFile(PathBuf::from(path)));
    }
    Err(format!(
        "invalid trajectory {value:?}: expected figure-eight, straight-line:VX,VY,VZ or csv:PATH"
    ))
}

/// Parses a config file: one `KEY=VALUE` per line, `#` comments, later
/// assignments win.
pub fn apply_file(cfg: &mut SimConfig, path: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = split_assignment(line)
            .ok_or_else(|| format!("{}:{}: expected KEY=VALUE", path.display(), idx + 1))?;
        apply_assignment(cfg, key, value)
            .map_err(|e| format!("{}:{}: {e}", path.display(), idx + 1))?;
    }
    Ok(())
}

/// Splits `KEY=VALUE` on the first `=`, trimming both sides.
pub fn split_assignment(text: &str) -> Option<(&str, &str)> {
    let (key, value) = text.split_once('=')?;
    let key = key.trim();
    if key.is_empty() {
        return None;
    }
    Some((key, value.trim()))
}
