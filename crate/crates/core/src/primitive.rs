//! Model-based dead reckoning from velocity commands, absolute IMU attitude and
//! water depth.
//!
//! Position is propagated with first-order Euler steps of the commanded body
//! velocity `[v_x, 0, v_z]` rotated into the world frame by the IMU attitude.
//! The pressure sensor gives an absolute depth, which overrides `z` whenever a
//! sample arrives.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Forward and heave speed commands, held constant until the next command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand {
    pub t: f64,
    pub v_x: f64,
    pub v_z: f64,
}

impl VelocityCommand {
    pub fn new(t: f64, v_x: f64, v_z: f64) -> Self {
        Self { t, v_x, v_z }
    }

    pub fn speed(&self) -> f64 {
        self.v_x.hypot(self.v_z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub t: f64,
    /// Depth below the surface in meters (positive down).
    pub depth: f64,
}

/// How a positive depth reading maps onto world `z`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthConvention {
    /// World z points down; `z = depth`.
    #[default]
    ZDown,
    /// World z points up; `z = -depth`.
    ZUp,
}

impl DepthConvention {
    pub fn to_world_z(self, depth: f64) -> f64 {
        match self {
            DepthConvention::ZDown => depth,
            DepthConvention::ZUp => -depth,
        }
    }

    pub fn from_world_z(self, z: f64) -> f64 {
        self.to_world_z(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeConfig {
    /// Largest accepted |v_x| and |v_z| in m/s.
    pub max_speed: f64,
    /// Largest accepted step; larger gaps mean a sensor tick went missing.
    pub max_dt: f64,
    pub depth_convention: DepthConvention,
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            max_speed: 1.0,
            max_dt: 0.1,
            depth_convention: DepthConvention::ZDown,
        }
    }
}

/// The primitive estimator's local copy of the robot pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeState {
    pub pose: Pose,
    pub last_update: f64,
}

impl PeState {
    pub fn new(pose: Pose, t: f64) -> Self {
        Self {
            pose,
            last_update: t,
        }
    }

    /// One propagation step: attitude is taken from the IMU as-is and the
    /// position advances by `R · [v_x, 0, v_z] · dt`.
    pub fn step(
        &self,
        imu: &ImuSample,
        cmd: &VelocityCommand,
        dt: f64,
        config: &PeConfig,
    ) -> Result<PeState> {
        if !(dt > 0.0 && dt <= config.max_dt) {
            return Err(Error::InvalidStep {
                dt,
                max: config.max_dt,
            });
        }
        if !(cmd.v_x.is_finite() && cmd.v_z.is_finite())
            || cmd.v_x.abs() > config.max_speed
            || cmd.v_z.abs() > config.max_speed
        {
            return Err(Error::InvalidInput(format!(
                "velocity command ({}, {}) outside ±{} m/s",
                cmd.v_x, cmd.v_z, config.max_speed
            )));
        }
        let q = imu.orientation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "imu quaternion norm {} is not unit",
                q.norm()
            )));
        }
        let orientation = imu.orientation;
        let body_velocity = Vector3::new(cmd.v_x, 0.0, cmd.v_z);
        let position = self.pose.position + (orientation * body_velocity) * dt;
        Ok(PeState {
            pose: Pose::new(position, orientation),
            last_update: self.last_update + dt,
        })
    }

    /// Substitutes the measured depth for `z`; x, y and attitude are untouched.
    pub fn apply_depth(&self, depth: &DepthSample, convention: DepthConvention) -> PeState {
        let mut next = *self;
        next.pose.position.z = convention.to_world_z(depth.depth);
        next
    }

    /// Replaces the pose, keeping the update clock.
    pub fn reset(&self, pose: Pose) -> PeState {
        PeState {
            pose,
            last_update: self.last_update,
        }
    }
}

pub fn pe_step(
    state: &PeState,
    imu: &ImuSample,
    cmd: &VelocityCommand,
    dt: f64,
    config: &PeConfig,
) -> Result<PeState> {
    state.step(imu, cmd, dt, config)
}

pub fn pe_apply_depth(state: &PeState, depth: &DepthSample, convention: DepthConvention) -> PeState {
    state.apply_depth(depth, convention)
}

pub fn pe_reset(state: &PeState, pose: Pose) -> PeState {
    state.reset(pose)
}
