//! Robust underwater state estimation by hard switching between a
//! visual-inertial odometry (VIO) stream and a model-based primitive
//! estimator (PE), with a keyframe pose graph, a mission simulator and the
//! evaluation plumbing around them.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod health;
pub mod io;
pub mod pose_graph;
pub mod primitive;
pub mod sim;
pub mod switching;

pub use error::{Error, Result};
pub use geometry::{Pose, RigidTransform, Stamped, Trajectory};
pub use harness::{evaluate, run_estimator, EstimatorKind, RunOptions, RunOutput};
pub use health::{HealthParams, HealthVerdict, KeyframeStats, UnhealthyReason};
pub use io::{AggregateReport, MetricsReport};
pub use pose_graph::{KeyframeSource, OptimizeOptions, PoseGraph};
pub use primitive::{DepthSample, ImuSample, PeConfig, VelocityCommand};
pub use sim::{simulate, MissionData, Scenario};
pub use switching::{EstimatorMode, SwitchParams, SwitchingState};
