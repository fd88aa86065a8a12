//! Deterministic synthetic missions: ground truth, commands, IMU and depth
//! streams, a visual-inertial odometry model that drifts and fails with the
//! scene, and a proximity oracle for loop closures.
//!
//! Every random draw comes from a ChaCha stream keyed by the scenario seed
//! and a per-sensor stream id, so a scenario and seed fix every output bit.

mod field;
mod loops;
mod plan;
mod scenario;
mod vio;

pub use field::{sample_keyframe, sample_stats, FeatureField, QuadrantBias, Region};
pub use loops::{loop_oracle, KeyframeRecord, LoopOracle, LoopOracleConfig, LoopProposal};
pub use plan::{gen_ground_truth, DepthProfile, GroundTruth, MissionPlan, Pattern, Segment};
pub use scenario::{reef_schedules, Scenario, BUILTIN_SCENARIOS};
pub use vio::{simulate_vio, VioFrame};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Trajectory;
use crate::primitive::{DepthConvention, DepthSample, ImuSample, VelocityCommand};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Imu = 1,
    Depth = 2,
    VioMotion = 3,
    Stats = 4,
    Loops = 5,
}

pub(crate) fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModels {
    pub seed: u64,
    /// Per-axis attitude noise of the IMU, degrees.
    pub imu_noise_deg: f64,
    pub depth_noise: f64,
    /// World-frame water current, m/s.
    pub current: [f64; 3],
    /// Commanded speed over true speed through the water.
    pub pe_speed_bias: f64,
    pub depth_convention: DepthConvention,
    /// Systematic VIO drift as a fraction of distance travelled.
    pub vio_drift_rate: f64,
    /// Random-walk VIO position drift, m per √m.
    pub vio_drift_walk: f64,
    /// Random-walk VIO yaw drift, rad per √m.
    pub vio_yaw_walk: f64,
    /// White noise on each reported VIO position, m.
    pub vio_position_noise: f64,
    /// White noise on each reported VIO attitude, rad.
    pub vio_rotation_noise: f64,
    pub vio_rate: f64,
    pub keyframe_rate: f64,
    pub depth_rate: f64,
    /// Feature density below which the VIO loses track.
    pub vio_min_density: f64,
    /// Seconds after losing track during which thinned keyframes are still emitted.
    pub collapse_lag: f64,
    /// Density multiplier applied to those degraded keyframes.
    pub degraded_density_factor: f64,
    /// Position spread of a re-initialised VIO around the truth, m.
    pub reinit_sigma: f64,
    /// Magnitude of the unobserved acceleration bias while lost, m/s².
    pub lost_accel_bias: f64,
    /// Error of the velocity carried into a tracking loss, m/s.
    pub lost_velocity_noise: f64,
}

impl Default for SensorModels {
    fn default() -> Self {
        Self {
            seed: 0,
            imu_noise_deg: 0.5,
            depth_noise: 0.02,
            current: [0.05, 0.02, 0.0],
            pe_speed_bias: 1.15,
            depth_convention: DepthConvention::ZDown,
            vio_drift_rate: 0.01,
            vio_drift_walk: 0.005,
            vio_yaw_walk: 0.002,
            vio_position_noise: 0.01,
            vio_rotation_noise: 0.002,
            vio_rate: 10.0,
            keyframe_rate: 2.0,
            depth_rate: 10.0,
            vio_min_density: 40.0,
            collapse_lag: 1.0,
            degraded_density_factor: 0.05,
            reinit_sigma: 0.1,
            lost_accel_bias: 0.025,
            lost_velocity_noise: 0.02,
        }
    }
}

impl SensorModels {
    /// Defaults with every noise and drift term set to zero; current and
    /// speed bias are kept.
    pub fn noiseless() -> Self {
        Self {
            imu_noise_deg: 0.0,
            depth_noise: 0.0,
            vio_drift_rate: 0.0,
            vio_drift_walk: 0.0,
            vio_yaw_walk: 0.0,
            vio_position_noise: 0.0,
            vio_rotation_noise: 0.0,
            reinit_sigma: 0.0,
            lost_velocity_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("imu_noise_deg", self.imu_noise_deg),
            ("depth_noise", self.depth_noise),
            ("vio_drift_rate", self.vio_drift_rate),
            ("vio_drift_walk", self.vio_drift_walk),
            ("vio_yaw_walk", self.vio_yaw_walk),
            ("vio_position_noise", self.vio_position_noise),
            ("vio_rotation_noise", self.vio_rotation_noise),
            ("vio_min_density", self.vio_min_density),
            ("collapse_lag", self.collapse_lag),
            ("degraded_density_factor", self.degraded_density_factor),
            ("reinit_sigma", self.reinit_sigma),
            ("lost_accel_bias", self.lost_accel_bias),
            ("lost_velocity_noise", self.lost_velocity_noise),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("models.{key}"), "must be finite and >= 0"));
            }
        }
        for (key, v) in [
            ("pe_speed_bias", self.pe_speed_bias),
            ("vio_rate", self.vio_rate),
            ("keyframe_rate", self.keyframe_rate),
            ("depth_rate", self.depth_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("models.{key}"), "must be positive"));
            }
        }
        if self.current.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("models.current", "must be finite"));
        }
        Ok(())
    }

    /// Ticks between events of a `rate` Hz process.
    pub fn ticks_per(&self, rate: f64, dt: f64) -> usize {
        ((1.0 / (rate * dt)).round() as usize).max(1)
    }
}

/// Windows of artificially degraded imagery, `(start, duration)` in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureSchedule {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub windows: Vec<(f64, f64)>,
}

impl FailureSchedule {
    pub fn none() -> Self {
        Self {
            id: "none".into(),
            windows: Vec::new(),
        }
    }

    /// Windows of `duration` s starting at each of `starts`.
    pub fn evenly(id: &str, starts: &[f64], duration: f64) -> Self {
        Self {
            id: id.into(),
            windows: starts.iter().map(|&s| (s, duration)).collect(),
        }
    }

    pub fn validate(&self, mission_duration: f64) -> Result<()> {
        let mut sorted = self.windows.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(start, dur)) in sorted.iter().enumerate() {
            if !(start >= 0.0 && dur > 0.0 && start + dur <= mission_duration) {
                return Err(Error::config(
                    "schedule.windows",
                    format!("window ({start}, {dur}) is not inside the {mission_duration:.1} s mission"),
                ));
            }
            if i > 0 && sorted[i - 1].0 + sorted[i - 1].1 > start {
                return Err(Error::config("schedule.windows", "windows overlap"));
            }
        }
        Ok(())
    }

    pub fn active(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        self.windows
            .iter()
            .any(|&(s, d)| t >= s - EPS && t < s + d - EPS)
    }
}

/// Everything a run of the estimators consumes, plus the truth to score it.
#[derive(Debug, Clone)]
pub struct MissionData {
    pub scenario: Scenario,
    pub truth: Trajectory,
    pub commands: Vec<VelocityCommand>,
    pub imu: Vec<ImuSample>,
    pub depth: Vec<DepthSample>,
    pub vio: Vec<VioFrame>,
}

impl MissionData {
    pub fn dt(&self) -> f64 {
        self.scenario.plan.dt
    }

    pub fn n_ticks(&self) -> usize {
        self.truth.len() - 1
    }
}

pub fn simulate(scenario: &Scenario) -> Result<MissionData> {
    scenario.validate()?;
    let gt = gen_ground_truth(&scenario.plan, &scenario.models)?;
    let vio = simulate_vio(
        &gt.truth,
        &scenario.field,
        &scenario.models,
        &scenario.schedule,
        scenario.plan.dt,
    )?;
    Ok(MissionData {
        scenario: scenario.clone(),
        truth: gt.truth,
        commands: gt.commands,
        imu: gt.imu,
        depth: gt.depth,
        vio,
    })
}
