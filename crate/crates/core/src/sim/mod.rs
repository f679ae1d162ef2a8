//! Monte-Carlo simulation harness: sensor synthesis, filter orchestration,
//! and the aggregate metrics (RMSE, ANEES, inter-filter gaps, AIRM).
//!
//! A run draws many independent trials. Each trial corrupts a shared
//! ground-truth trajectory with freshly sampled IMU noise, bias walks, and
//! GNSS noise, initialises a left-handed and/or right-handed filter from an
//! equivalent pair of concentrated Gaussians, and processes identical data
//! through both. Per-GNSS-epoch statistics are averaged over trials into
//! [`MetricsRecord`] rows; trials run in parallel but aggregation is ordered
//! by trial index, so output is reproducible byte for byte.

pub mod trajectory;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cgd::{equivalence_gap, ConcentratedGaussian, Handedness};
use crate::error::{Error, Result};
use crate::iekf::{FilterState, Iekf, MeasurementModel};
use crate::ins::{
    default_gravity, ins_measurement_model, ins_system_model, GnssSample, ImuSample, InsState,
};
use crate::lie::{so3, AlgebraVector, GroupTag};
use trajectory::{generate_trajectory, Profile, TrajectoryKind, TrajectorySpec};

/// Which filter(s) a Monte-Carlo run drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandednessSet {
    /// Left-handed filter only.
    Left,
    /// Right-handed filter only.
    Right,
    /// Both filters on identical data (enables the gap metrics).
    Both,
}

impl HandednessSet {
    fn runs_left(self) -> bool {
        matches!(self, HandednessSet::Left | HandednessSet::Both)
    }

    fn runs_right(self) -> bool {
        matches!(self, HandednessSet::Right | HandednessSet::Both)
    }
}

/// Full description of a Monte-Carlo experiment.
///
/// The default reproduces the reference protocol at desk scale: a
/// figure-eight trajectory, 80 s at 200 Hz IMU / 10 Hz GNSS, 80 integration
/// sub-steps per IMU interval, 20° per-axis initial attitude standard
/// deviation, 1 m position, 0.2 m GNSS noise, 0.1 rad/s and 0.1 m/s² initial
/// bias draws, and MEMS-grade white-noise intensities.
#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Number of Monte-Carlo trials.
    pub trials: usize,
    /// Trajectory length, s.
    pub duration: f64,
    /// IMU rate, Hz.
    pub imu_rate: f64,
    /// GNSS rate, Hz; must divide the IMU rate.
    pub gnss_rate: f64,
    /// Integration sub-steps per IMU interval.
    pub substeps: usize,
    /// Initial attitude standard deviation, deg per axis.
    pub init_att_std: f64,
    /// Initial velocity standard deviation, m/s per axis.
    pub init_vel_std: f64,
    /// Initial position standard deviation, m per axis.
    pub init_pos_std: f64,
    /// Initial gyro-bias standard deviation, rad/s per axis.
    pub init_bg_std: f64,
    /// Initial accel-bias standard deviation, m/s² per axis.
    pub init_ba_std: f64,
    /// Gyro white-noise intensity, rad/s·√s.
    pub sigma_g: f64,
    /// Accel white-noise intensity, m/s²·√s.
    pub sigma_a: f64,
    /// Gyro-bias random-walk intensity, rad/s²·√s.
    pub sigma_bg: f64,
    /// Accel-bias random-walk intensity, m/s³·√s.
    pub sigma_ba: f64,
    /// GNSS noise standard deviation, m per axis.
    pub gnss_std: f64,
    /// Base RNG seed; trial `i` uses `seed + i`.
    pub seed: u64,
    /// Apply the covariance-correcting reset after updates.
    pub reset_enabled: bool,
    /// Which filter(s) to run.
    pub handedness: HandednessSet,
    /// Ground-truth motion.
    pub trajectory: TrajectoryKind,
    /// World-frame gravity, m/s².
    pub gravity: Vector3<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            trials: 100,
            duration: 80.0,
            imu_rate: 200.0,
            gnss_rate: 10.0,
            substeps: 80,
            init_att_std: 20.0,
            init_vel_std: 0.5,
            init_pos_std: 1.0,
            init_bg_std: 0.1,
            init_ba_std: 0.1,
            sigma_g: 0.01,
            sigma_a: 0.05,
            sigma_bg: 0.001,
            sigma_ba: 0.001,
            gnss_std: 0.2,
            seed: 0,
            reset_enabled: true,
            handedness: HandednessSet::Both,
            trajectory: TrajectoryKind::Synthetic(Profile::FigureEight(Default::default())),
            gravity: default_gravity(),
        }
    }
}

impl SimConfig {
    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.duration <= 0.0 || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.substeps < 1 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        if self.imu_rate <= 0.0
            || !self.imu_rate.is_finite()
            || self.gnss_rate <= 0.0
            || !self.gnss_rate.is_finite()
        {
            return Err(Error::InvalidArgument(
                "imu_rate and gnss_rate must be positive".into(),
            ));
        }
        let ratio = self.imu_rate / self.gnss_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "imu_rate must be an integer multiple of gnss_rate, got ratio {ratio}"
            )));
        }
        for (name, v) in [
            ("init_att_std", self.init_att_std),
            ("init_vel_std", self.init_vel_std),
            ("init_pos_std", self.init_pos_std),
            ("init_bg_std", self.init_bg_std),
            ("init_ba_std", self.init_ba_std),
            ("sigma_g", self.sigma_g),
            ("sigma_a", self.sigma_a),
            ("sigma_bg", self.sigma_bg),
            ("sigma_ba", self.sigma_ba),
            ("gnss_std", self.gnss_std),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// IMU samples per GNSS interval.
    pub fn sample_ratio(&self) -> usize {
        (self.imu_rate / self.gnss_rate).round() as usize
    }

    /// The trajectory request this config implies.
    pub fn trajectory_spec(&self) -> TrajectorySpec {
        TrajectorySpec {
            kind: self.trajectory.clone(),
            duration: self.duration,
            imu_rate: self.imu_rate,
        }
    }

    /// Per-block initial standard deviations in algebra order
    /// (rotation rad, velocity, position, gyro bias, accel bias).
    fn initial_stds(&self) -> [f64; 5] {
        [
            self.init_att_std.to_radians(),
            self.init_vel_std,
            self.init_pos_std,
            self.init_bg_std,
            self.init_ba_std,
        ]
    }

    /// Diagonal initial covariance in algebra coordinates.
    pub fn initial_sigma(&self) -> DMatrix<f64> {
        let stds = self.initial_stds();
        let mut d = DVector::zeros(15);
        for (b, s) in stds.iter().enumerate() {
            for i in 0..3 {
                d[3 * b + i] = s * s;
            }
        }
        DMatrix::from_diagonal(&d)
    }
}

/// One aggregated row of Monte-Carlo output at a GNSS epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    /// Epoch time, s.
    pub time: f64,
    /// Root-mean-square attitude error, deg.
    pub rmse_rot: f64,
    /// Root-mean-square position error, m.
    pub rmse_pos: f64,
    /// Root-mean-square velocity error, m/s.
    pub rmse_vel: f64,
    /// Root-mean-square gyro-bias error, rad/s.
    pub rmse_bg: f64,
    /// Root-mean-square accel-bias error, m/s².
    pub rmse_ba: f64,
    /// Average normalised estimation error squared (per dimension).
    pub anees: f64,
    /// Mean rotation gap between the two filters' estimates, deg.
    pub gap_rot: f64,
    /// Mean position gap between the two filters' estimates, m.
    pub gap_pos: f64,
    /// Mean offset-vector gap after transport to common coordinates.
    pub gap_mu: f64,
    /// Mean affine-invariant distance between transported covariances.
    pub airm: f64,
}

impl MetricsRecord {
    /// CSV header naming every field, in field order.
    pub const CSV_HEADER: &'static str =
        "time,rmse_rot,rmse_pos,rmse_vel,rmse_bg,rmse_ba,anees,gap_rot,gap_pos,gap_mu,airm";

    fn fields(&self) -> [f64; 11] {
        [
            self.time,
            self.rmse_rot,
            self.rmse_pos,
            self.rmse_vel,
            self.rmse_bg,
            self.rmse_ba,
            self.anees,
            self.gap_rot,
            self.gap_pos,
            self.gap_mu,
            self.airm,
        ]
    }

    fn from_fields(v: [f64; 11]) -> MetricsRecord {
        MetricsRecord {
            time: v[0],
            rmse_rot: v[1],
            rmse_pos: v[2],
            rmse_vel: v[3],
            rmse_bg: v[4],
            rmse_ba: v[5],
            anees: v[6],
            gap_rot: v[7],
            gap_pos: v[8],
            gap_mu: v[9],
            airm: v[10],
        }
    }
}

/// Synthesises one trial's sensor data from ground truth, deterministically
/// in `seed`.
///
/// Returns noisy-and-biased IMU samples, noisy GNSS fixes at every
/// `imu_rate/gnss_rate`-th sample time (the first at the trajectory start),
/// and the per-sample true states with the sampled bias trajectory written
/// into them. Initial biases are drawn from the `init_*_std` Gaussians and
/// then random-walk with the `sigma_b*` intensities; white IMU noise has
/// per-sample standard deviation `σ/√δt` so the filter's continuous-time
/// noise model is matched exactly.
pub fn synthesize_measurements(
    truth: &[(InsState, ImuSample)],
    cfg: &SimConfig,
    seed: u64,
) -> Result<(Vec<ImuSample>, Vec<GnssSample>, Vec<InsState>)> {
    cfg.validate()?;
    if truth.len() < 2 {
        return Err(Error::InvalidArgument(
            "trajectory needs at least 2 samples".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal3 = |std: f64, rng: &mut ChaCha20Rng| {
        Vector3::new(
            std * rng.sample::<f64, _>(StandardNormal),
            std * rng.sample::<f64, _>(StandardNormal),
            std * rng.sample::<f64, _>(StandardNormal),
        )
    };

    let n = truth.len();
    let dt_at = |k: usize| -> f64 {
        if k + 1 < n {
            truth[k + 1].1.timestamp - truth[k].1.timestamp
        } else {
            truth[k].1.timestamp - truth[k - 1].1.timestamp
        }
    };

    let mut bg = normal3(cfg.init_bg_std, &mut rng);
    let mut ba = normal3(cfg.init_ba_std, &mut rng);
    let mut imu = Vec::with_capacity(n);
    let mut truth_biased = Vec::with_capacity(n);
    for (k, (state, input)) in truth.iter().enumerate() {
        let dt = dt_at(k);
        let sq = dt.sqrt();
        imu.push(ImuSample {
            omega: input.omega + bg + normal3(cfg.sigma_g / sq, &mut rng),
            accel: input.accel + ba + normal3(cfg.sigma_a / sq, &mut rng),
            timestamp: input.timestamp,
        });
        truth_biased.push(InsState {
            gyro_bias: bg,
            accel_bias: ba,
            ..state.clone()
        });
        bg += normal3(cfg.sigma_bg * sq, &mut rng);
        ba += normal3(cfg.sigma_ba * sq, &mut rng);
    }

    let ratio = cfg.sample_ratio();
    let mut gnss = Vec::with_capacity(n / ratio);
    for j in 0..n / ratio {
        let k = j * ratio;
        gnss.push(GnssSample {
            position: truth[k].0.position + normal3(cfg.gnss_std, &mut rng),
            timestamp: truth[k].1.timestamp,
        });
    }
    Ok((imu, gnss, truth_biased))
}

/// Per-epoch, per-filter raw statistics of one trial.
#[derive(Clone, Copy, Default)]
struct FilterEpochStat {
    sq_rot: f64,
    sq_pos: f64,
    sq_vel: f64,
    sq_bg: f64,
    sq_ba: f64,
    nees: f64,
}

/// Per-epoch statistics of one trial (unused filter side stays zero).
#[derive(Clone, Copy, Default)]
struct EpochStat {
    left: FilterEpochStat,
    right: FilterEpochStat,
    gap_rot: f64,
    gap_pos: f64,
    gap_mu: f64,
    airm: f64,
}

fn filter_epoch_stat(
    st: &FilterState,
    truth_state: &InsState,
    truth_group: &crate::lie::GroupElement,
) -> Result<FilterEpochStat> {
    let est = InsState::from_group(st.dist.reference())?;
    let rot_deg = so3::log(&(est.attitude.transpose() * truth_state.attitude))?
        .norm()
        .to_degrees();
    let eps = st.dist.log_error(truth_group)?;
    let chol = Cholesky::new(st.dist.sigma().clone()).ok_or(Error::NotPositiveDefinite {
        context: "covariance in consistency metric",
    })?;
    let m = st.dist.reference().tag().algebra_dim() as f64;
    let nees = eps.coords().dot(&chol.solve(eps.coords())) / m;
    if !nees.is_finite() {
        return Err(Error::NonFinite {
            context: "normalised estimation error",
        });
    }
    Ok(FilterEpochStat {
        sq_rot: rot_deg * rot_deg,
        sq_pos: (est.position - truth_state.position).norm_squared(),
        sq_vel: (est.velocity - truth_state.velocity).norm_squared(),
        sq_bg: (est.gyro_bias - truth_state.gyro_bias).norm_squared(),
        sq_ba: (est.accel_bias - truth_state.accel_bias).norm_squared(),
        nees,
    })
}

fn gap_stat(l: &FilterState, r: &FilterState) -> Result<(f64, f64, f64, f64)> {
    let d = l
        .dist
        .reference()
        .inverse()
        .compose(r.dist.reference())?
        .log()?;
    let gap_rot = d.coords().rows(0, 3).norm().to_degrees();
    let gap_pos = d.coords().rows(6, 3).norm();
    let eq = equivalence_gap(&l.dist, &r.dist)?;
    Ok((gap_rot, gap_pos, eq.mu_gap, eq.airm))
}

/// One trial: synthesise data, run the configured filter(s), collect raw
/// per-epoch statistics. Any numeric failure aborts only this trial.
fn run_trial(
    cfg: &SimConfig,
    truth: &[(InsState, ImuSample)],
    iekf: &Iekf,
    model: &MeasurementModel,
    trial: usize,
) -> Result<Vec<EpochStat>> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let (imu, gnss, truth_biased) = synthesize_measurements(truth, cfg, seed)?;

    // Initial estimate: right-perturb the true state by a draw from the
    // configured Gaussian, so the filter's initial error statistics match
    // its initial covariance; the right-handed filter starts from the
    // transported (equivalent) distribution.
    let mut init_rng = ChaCha20Rng::seed_from_u64(seed);
    init_rng.set_stream(1);
    let stds = cfg.initial_stds();
    let mut coords = DVector::zeros(15);
    for (b, s) in stds.iter().enumerate() {
        for i in 0..3 {
            coords[3 * b + i] = s * init_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let eps = AlgebraVector::new(GroupTag::ProductSe23R6, coords)?;
    let x0 = truth_biased[0].to_group().compose(&eps.exp())?;
    let left0 = ConcentratedGaussian::centred(Handedness::Left, x0, cfg.initial_sigma())?;
    let right0 = left0.convert_handedness();

    let mut left = cfg
        .handedness
        .runs_left()
        .then(|| FilterState::new(left0, 0.0));
    let mut right = cfg
        .handedness
        .runs_right()
        .then(|| FilterState::new(right0, 0.0));

    let n = imu.len();
    let ratio = cfg.sample_ratio();
    let n_epochs = n / ratio;
    let dt_at = |k: usize| -> f64 {
        if k + 1 < n {
            imu[k + 1].timestamp - imu[k].timestamp
        } else {
            imu[k].timestamp - imu[k - 1].timestamp
        }
    };

    let mut epochs = Vec::with_capacity(n_epochs);
    for (j, fix) in gnss.iter().enumerate().take(n_epochs) {
        let k0 = j * ratio;
        let y = DVector::from_column_slice(fix.position.as_slice());
        for st in [&mut left, &mut right].into_iter().flatten() {
            let updated = iekf.update(st, &y, model)?;
            *st = if cfg.reset_enabled {
                iekf.reset(&updated)?
            } else {
                iekf.move_reference(&updated)?
            };
        }

        let truth_state = &truth_biased[k0];
        let truth_group = truth_state.to_group();
        let mut stat = EpochStat::default();
        if let Some(st) = &left {
            stat.left = filter_epoch_stat(st, truth_state, &truth_group)?;
        }
        if let Some(st) = &right {
            stat.right = filter_epoch_stat(st, truth_state, &truth_group)?;
        }
        if let (Some(l), Some(r)) = (&left, &right) {
            (stat.gap_rot, stat.gap_pos, stat.gap_mu, stat.airm) = gap_stat(l, r)?;
        }
        epochs.push(stat);

        if j + 1 < n_epochs {
            for (k, sample) in imu.iter().enumerate().take(k0 + ratio).skip(k0) {
                let u = sample.to_input_vector();
                let dt = dt_at(k);
                for st in [&mut left, &mut right].into_iter().flatten() {
                    *st = iekf.predict_hybrid(st, &u, dt, cfg.substeps)?;
                }
            }
        }
    }
    Ok(epochs)
}

/// Output of [`run_monte_carlo`]: per-epoch records for each filter that
/// ran (gap columns are shared; they are zero unless both filters ran), and
/// the trial bookkeeping.
#[derive(Clone, Debug)]
pub struct MonteCarloOutput {
    /// Aggregated metrics of the left-handed filter (empty if not run).
    pub left: Vec<MetricsRecord>,
    /// Aggregated metrics of the right-handed filter (empty if not run).
    pub right: Vec<MetricsRecord>,
    /// Trials that completed and entered the aggregates.
    pub completed_trials: usize,
    /// Trials excluded after a numeric failure.
    pub failed_trials: usize,
}

impl MonteCarloOutput {
    /// The records of whichever filter ran (left preferred when both did).
    pub fn primary(&self) -> &[MetricsRecord] {
        if self.left.is_empty() {
            &self.right
        } else {
            &self.left
        }
    }
}

/// Runs the full Monte-Carlo experiment described by `cfg`.
///
/// Trials are independent and run in parallel; each uses seed
/// `cfg.seed + trial`, so results do not depend on scheduling. Trials whose
/// filter hits a numeric failure are excluded from the aggregates and
/// counted in `failed_trials`.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<MonteCarloOutput> {
    cfg.validate()?;
    let truth = generate_trajectory(&cfg.trajectory_spec(), &cfg.gravity)?;
    if truth.len() < cfg.sample_ratio() {
        return Err(Error::InvalidArgument(
            "trajectory shorter than one GNSS interval".into(),
        ));
    }
    let sys = ins_system_model(
        cfg.sigma_g,
        cfg.sigma_a,
        cfg.sigma_bg,
        cfg.sigma_ba,
        cfg.gravity,
    )?;
    let iekf = Iekf::new(sys);
    let model = ins_measurement_model(cfg.gnss_std)?;

    let results: Vec<Result<Vec<EpochStat>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &truth, &iekf, &model, trial))
        .collect();

    let n_epochs = truth.len() / cfg.sample_ratio();
    let mut sums = vec![EpochStat::default(); n_epochs];
    let mut completed = 0usize;
    let mut first_failure: Option<&Error> = None;
    for r in &results {
        let epochs = match r {
            Ok(e) => e,
            Err(e) => {
                first_failure.get_or_insert(e);
                continue;
            }
        };
        completed += 1;
        for (acc, e) in sums.iter_mut().zip(epochs) {
            for (a, b) in [(&mut acc.left, &e.left), (&mut acc.right, &e.right)] {
                a.sq_rot += b.sq_rot;
                a.sq_pos += b.sq_pos;
                a.sq_vel += b.sq_vel;
                a.sq_bg += b.sq_bg;
                a.sq_ba += b.sq_ba;
                a.nees += b.nees;
            }
            acc.gap_rot += e.gap_rot;
            acc.gap_pos += e.gap_pos;
            acc.gap_mu += e.gap_mu;
            acc.airm += e.airm;
        }
    }
    if completed == 0 {
        let detail = first_failure.map_or(String::new(), |e| format!(": first error: {e}"));
        return Err(Error::InvalidArgument(format!(
            "every Monte-Carlo trial failed{detail}"
        )));
    }

    let ratio = cfg.sample_ratio();
    let build = |side: fn(&EpochStat) -> &FilterEpochStat| -> Vec<MetricsRecord> {
        let nf = completed as f64;
        sums.iter()
            .enumerate()
            .map(|(j, acc)| {
                let f = side(acc);
                MetricsRecord {
                    time: truth[j * ratio].1.timestamp,
                    rmse_rot: (f.sq_rot / nf).sqrt(),
                    rmse_pos: (f.sq_pos / nf).sqrt(),
                    rmse_vel: (f.sq_vel / nf).sqrt(),
                    rmse_bg: (f.sq_bg / nf).sqrt(),
                    rmse_ba: (f.sq_ba / nf).sqrt(),
                    anees: f.nees / nf,
                    gap_rot: acc.gap_rot / nf,
                    gap_pos: acc.gap_pos / nf,
                    gap_mu: acc.gap_mu / nf,
                    airm: acc.airm / nf,
                }
            })
            .collect()
    };
    Ok(MonteCarloOutput {
        left: if cfg.handedness.runs_left() {
            build(|e| &e.left)
        } else {
            Vec::new()
        },
        right: if cfg.handedness.runs_right() {
            build(|e| &e.right)
        } else {
            Vec::new()
        },
        completed_trials: completed,
        failed_trials: cfg.trials - completed,
    })
}

/// Writes records as CSV: a header naming every field, then one row per
/// epoch with 12 significant digits.
pub fn write_metrics_csv(records: &[MetricsRecord], path: &std::path::Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(MetricsRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        let fields = r.fields();
        for (i, v) in fields.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            // Shortest-roundtrip scientific notation: reading the file back
            // reproduces every value bit for bit.
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads back a metrics CSV produced by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &std::path::Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MetricsRecord::CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {h:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 11 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 11 fields, found {}", parts.len()),
            });
        }
        let mut v = [0.0f64; 11];
        for (i, p) in parts.iter().enumerate() {
            v[i] = p.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("field {} is not a number: {p:?}", i + 1),
            })?;
        }
        records.push(MetricsRecord::from_fields(v));
    }
    Ok(records)
}

/// Mean of `f` over the records with `time ≥ from_time`; `None` when the
/// window is empty.
pub fn mean_over_window<F: Fn(&MetricsRecord) -> f64>(
    records: &[MetricsRecord],
    from_time: f64,
    f: F,
) -> Option<f64> {
    let tail: Vec<f64> = records
        .iter()
        .filter(|r| r.time >= from_time)
        .map(f)
        .collect();
    if tail.is_empty() {
        None
    } else {
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Least-squares slope of `ln y` against `ln x`; `None` for fewer than two
/// points or non-positive values.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return None;
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
