use nalgebra::{UnitQuaternion, Vector3};
use rand_chacha::ChaCha8Rng;

use super::field::sample_stats;
use super::plan::standard_normal;
use super::{rng_stream, FailureSchedule, FeatureField, SensorModels, Stream};
use crate::error::Result;
use crate::geometry::{Pose, Trajectory};
use crate::health::KeyframeStats;

/// One VIO output. Keyframes additionally carry feature statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VioFrame {
    pub t: f64,
    /// Simulation tick the frame belongs to.
    pub tick: usize,
    /// Bumped every time the VIO re-initialises after a loss.
    pub session: u32,
    pub pose: Pose,
    pub keyframe: Option<KeyframeStats>,
}

enum Track {
    Tracking {
        position: Vector3<f64>,
        drift_dir: Vector3<f64>,
    },
    Lost {
        since: f64,
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        accel: Vector3<f64>,
    },
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * sigma
}

fn unit3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// VIO frames at `vio_rate` and keyframes at `keyframe_rate`.
///
/// While tracking, each increment of true motion is reported rotated by the
/// accumulated yaw error, plus a fixed-direction drift proportional to the
/// distance and a random walk. Tracking is lost inside failure windows and
/// wherever the feature density drops below `vio_min_density`; the pose is
/// then propagated with the last velocity and a constant acceleration bias,
/// thinned keyframes are emitted for `collapse_lag` seconds and none after
/// that. Leaving the bad stretch re-initialises a new session near the truth.
pub fn simulate_vio(
    truth: &Trajectory,
    field: &FeatureField,
    models: &SensorModels,
    schedule: &FailureSchedule,
    dt: f64,
) -> Result<Vec<VioFrame>> {
    let frame_every = models.ticks_per(models.vio_rate, dt);
    let kf_every = models.ticks_per(models.keyframe_rate, dt).max(frame_every);
    let mut rng = rng_stream(models.seed, Stream::VioMotion);
    let mut stats_rng = rng_stream(models.seed, Stream::Stats);

    let samples = truth.samples();
    let mut frames = Vec::with_capacity(samples.len() / frame_every + 1);
    let Some(first) = samples.first() else {
        return Ok(frames);
    };
    let mut session = 0;
    let mut yaw_err = 0.0;
    let mut prev_true = first.pose.position;
    let mut track = Track::Tracking {
        position: first.pose.position,
        drift_dir: unit3(&mut rng),
    };

    for (tick, s) in samples.iter().enumerate().step_by(frame_every) {
        let t = s.t;
        let density = field.density_at(&s.pose.position);
        let lost = schedule.active(t) || density < models.vio_min_density;
        let step = s.pose.position - prev_true;
        prev_true = s.pose.position;
        let dist = step.norm();
        let yaw_rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_err);

        track = match (track, lost) {
            (Track::Tracking { position, drift_dir }, _) => {
                let position = position
                    + yaw_rot * step
                    + drift_dir * (models.vio_drift_rate * dist)
                    + gaussian3(&mut rng, models.vio_drift_walk * dist.sqrt());
                yaw_err += models.vio_yaw_walk * dist.sqrt() * standard_normal(&mut rng);
                if lost {
                    let frame_dt = frame_every as f64 * dt;
                    let velocity = yaw_rot * step / frame_dt
                        + gaussian3(&mut rng, models.lost_velocity_noise);
                    let accel = unit3(&mut rng) * models.lost_accel_bias;
                    Track::Lost {
                        since: t,
                        position,
                        velocity,
                        accel,
                    }
                } else {
                    Track::Tracking { position, drift_dir }
                }
            }
            (lost_state @ Track::Lost { .. }, true) => lost_state,
            (Track::Lost { .. }, false) => {
                session += 1;
                // heading error of a fresh initialisation, 0.01 rad at the default spread
                yaw_err = 0.1 * models.reinit_sigma * standard_normal(&mut rng);
                Track::Tracking {
                    position: s.pose.position + gaussian3(&mut rng, models.reinit_sigma),
                    drift_dir: unit3(&mut rng),
                }
            }
        };

        let orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_err)
            * s.pose.orientation
            * UnitQuaternion::from_scaled_axis(gaussian3(&mut rng, models.vio_rotation_noise));
        let (position, keyframe) = match &track {
            Track::Tracking { position, .. } => {
                let kf = (tick % kf_every == 0).then(|| {
                    sample_stats(t, density, field.bias_at(&s.pose.position), false, &mut stats_rng)
                });
                (position + gaussian3(&mut rng, models.vio_position_noise), kf)
            }
            Track::Lost {
                since,
                position,
                velocity,
                accel,
            } => {
                let tau = t - since;
                let kf = (tick % kf_every == 0 && tau <= models.collapse_lag + 1e-9).then(|| {
                    sample_stats(
                        t,
                        density * models.degraded_density_factor,
                        field.bias_at(&s.pose.position),
                        true,
                        &mut stats_rng,
                    )
                });
                (position + velocity * tau + accel * (0.5 * tau * tau), kf)
            }
        };
        frames.push(VioFrame {
            t,
            tick,
            session,
            pose: Pose::new(position, orientation),
            keyframe,
        });
    }
    Ok(frames)
}
