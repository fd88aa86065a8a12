use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{rng_stream, SensorModels, Stream};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Trajectory};
use crate::primitive::{DepthSample, ImuSample, VelocityCommand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum Pattern {
    /// Parallel legs along ±x joined by `spacing` m steps along +y.
    Lawnmower { leg_length: f64, n_legs: u32, spacing: f64 },
    /// Counter-clockwise squares starting along +x.
    Squares { side: f64, n_loops: u32 },
    /// Station keeping with zero commands.
    Hover { duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthProfile {
    pub start: f64,
    pub end: f64,
}

impl DepthProfile {
    pub fn constant(depth: f64) -> Self {
        Self {
            start: depth,
            end: depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    #[serde(flatten)]
    pub pattern: Pattern,
    /// Commanded horizontal speed, m/s.
    pub speed: f64,
    pub depth: DepthProfile,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    0.01
}

/// A constant-command stretch of the plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub heading: f64,
    pub v_x: f64,
    pub v_z: f64,
}

impl MissionPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(format!("plan.{key}"), msg));
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return bad("dt", "must lie in (0, 0.1]");
        }
        if !(self.depth.start.is_finite() && self.depth.end.is_finite()) {
            return bad("depth", "must be finite");
        }
        match self.pattern {
            Pattern::Lawnmower {
                leg_length,
                n_legs,
                spacing,
            } => {
                if !(leg_length > 0.0) || n_legs == 0 || !(spacing > 0.0) {
                    return bad("pattern", "lawnmower dimensions must be positive");
                }
            }
            Pattern::Squares { side, n_loops } => {
                if !(side > 0.0) || n_loops == 0 {
                    return bad("pattern", "square dimensions must be positive");
                }
            }
            Pattern::Hover { duration } => {
                if !(duration > 0.0) {
                    return bad("duration", "must be positive");
                }
                return Ok(());
            }
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed", "must be positive");
        }
        Ok(())
    }

    /// Horizontal legs as (heading, commanded length).
    fn legs(&self) -> Vec<(f64, f64)> {
        match self.pattern {
            Pattern::Lawnmower {
                leg_length,
                n_legs,
                spacing,
            } => {
                let mut legs = Vec::new();
                for i in 0..n_legs {
                    if i > 0 {
                        legs.push((FRAC_PI_2, spacing));
                    }
                    legs.push((if i % 2 == 0 { 0.0 } else { PI }, leg_length));
                }
                legs
            }
            Pattern::Squares { side, n_loops } => (0..n_loops * 4)
                .map(|i| ((i % 4) as f64 * FRAC_PI_2, side))
                .collect(),
            Pattern::Hover { .. } => Vec::new(),
        }
    }

    /// Length of the commanded horizontal path.
    pub fn commanded_length(&self) -> f64 {
        self.legs().iter().map(|l| l.1).sum()
    }

    pub fn duration(&self) -> f64 {
        match self.pattern {
            Pattern::Hover { duration } => duration,
            _ => self.commanded_length() / self.speed,
        }
    }

    pub fn segments(&self) -> Vec<Segment> {
        let total = self.duration();
        let v_z = (self.depth.end - self.depth.start) / total;
        if let Pattern::Hover { duration } = self.pattern {
            return vec![Segment {
                t_start: 0.0,
                t_end: duration,
                heading: 0.0,
                v_x: 0.0,
                v_z,
            }];
        }
        let mut t = 0.0;
        self.legs()
            .into_iter()
            .map(|(heading, length)| {
                let seg = Segment {
                    t_start: t,
                    t_end: t + length / self.speed,
                    heading,
                    v_x: self.speed,
                    v_z,
                };
                t = seg.t_end;
                seg
            })
            .collect()
    }

    /// Number of simulation ticks; tick `k` is at `k · dt`, `k = 0..=n`.
    pub fn n_ticks(&self) -> usize {
        (self.duration() / self.dt - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True pose at every tick.
    pub truth: Trajectory,
    /// Commands issued at segment starts, ending with a stop.
    pub commands: Vec<VelocityCommand>,
    /// Attitude readings at every tick.
    pub imu: Vec<ImuSample>,
    pub depth: Vec<DepthSample>,
}

/// True motion follows `Rz(ψ) · [v_x, 0, v_z] / bias + current` while the
/// command stream keeps the nominal plan.
pub fn gen_ground_truth(plan: &MissionPlan, models: &SensorModels) -> Result<GroundTruth> {
    plan.validate()?;
    models.validate()?;
    let segments = plan.segments();
    let end = plan.duration();
    let current = Vector3::from(models.current);
    let bias = models.pe_speed_bias;

    let mut commands: Vec<VelocityCommand> = segments
        .iter()
        .map(|s| VelocityCommand::new(s.t_start, s.v_x, s.v_z))
        .collect();
    commands.push(VelocityCommand::new(end, 0.0, 0.0));

    let start = Vector3::new(0.0, 0.0, models.depth_convention.to_world_z(plan.depth.start));
    let z_sign = models.depth_convention.to_world_z(1.0);
    let velocity = |s: &Segment| {
        let body = Vector3::new(s.v_x / bias, 0.0, z_sign * s.v_z / bias);
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), s.heading) * body + current
    };
    let mut seg_start_pos = Vec::with_capacity(segments.len());
    let mut p = start;
    for s in &segments {
        seg_start_pos.push(p);
        p += velocity(s) * (s.t_end - s.t_start);
    }
    let end_pos = p;

    let n = plan.n_ticks();
    let mut samples = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for k in 0..=n {
        let t = k as f64 * plan.dt;
        while seg + 1 < segments.len() && t >= segments[seg].t_end {
            seg += 1;
        }
        let s = &segments[seg];
        let (pos, heading) = if t >= end {
            (end_pos + current * (t - end), segments.last().map_or(0.0, |s| s.heading))
        } else {
            (seg_start_pos[seg] + velocity(s) * (t - s.t_start), s.heading)
        };
        samples.push(crate::geometry::Stamped {
            t,
            pose: Pose::from_position_yaw(pos, heading),
        });
    }
    let truth = Trajectory::from_samples(samples)?;

    let mut rng = rng_stream(models.seed, Stream::Imu);
    let imu_noise = Normal::new(0.0, models.imu_noise_deg.to_radians()).map_err(|e| {
        Error::config("models.imu_noise_deg", e.to_string())
    })?;
    let imu = truth
        .iter()
        .map(|s| {
            let n = Vector3::new(
                imu_noise.sample(&mut rng),
                imu_noise.sample(&mut rng),
                imu_noise.sample(&mut rng),
            );
            ImuSample {
                t: s.t,
                orientation: s.pose.orientation * UnitQuaternion::from_scaled_axis(n),
            }
        })
        .collect();

    let mut rng = rng_stream(models.seed, Stream::Depth);
    let depth_every = models.ticks_per(models.depth_rate, plan.dt);
    let depth = truth
        .iter()
        .step_by(depth_every)
        .map(|s| {
            let noise = models.depth_noise * standard_normal(&mut rng);
            DepthSample {
                t: s.t,
                depth: models.depth_convention.from_world_z(s.pose.position.z) + noise,
            }
        })
        .collect();

    Ok(GroundTruth {
        truth,
        commands,
        imu,
        depth,
    })
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
