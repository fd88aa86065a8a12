//! Per-keyframe trust decision for the visual-inertial odometry.
//!
//! Five criteria are checked in priority order and the first failure wins:
//!
//! 1. no keyframe for longer than `kf_wait_time` while the vehicle is commanded to move
//! 2. fewer than `min_kps` triangulated keypoints observed in the keyframe
//! 3. an image quadrant with fewer than `min_kps_per_quadrant` detections, only
//!    considered while the total detection count is below `10 × min_kps_per_quadrant`
//! 4. more than 75% of the keypoints newly triangulated
//! 5. more than 85% of the keypoints with a detector response below the keyframe mean
//!
//! Criterion 1 depends on wall time and is polled separately
//! ([`evaluate_timeout`]); criteria 2-5 look at one keyframe ([`evaluate_keyframe`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature statistics reported with a keyframe.
///
/// Quadrant order is top-left, top-right, bottom-left, bottom-right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeStats {
    pub t: f64,
    pub tracked_3d_kps: u32,
    pub total_detections: u32,
    pub detections_per_quadrant: [u32; 4],
    pub new_kps: u32,
    pub total_kps: u32,
    pub weak_response_kps: u32,
}

impl KeyframeStats {
    /// Checks the counting invariants. `tracked_3d_kps <= total_kps` is
    /// required as well: tracked keypoints are a subset of all keypoints.
    pub fn validate(&self) -> Result<()> {
        let quad_sum: u64 = self.detections_per_quadrant.iter().map(|&c| c as u64).sum();
        if quad_sum != self.total_detections as u64 {
            return Err(Error::InvalidInput(format!(
                "quadrant counts sum to {quad_sum}, total_detections is {}",
                self.total_detections
            )));
        }
        if self.new_kps > self.total_kps {
            return Err(Error::InvalidInput(format!(
                "new_kps {} exceeds total_kps {}",
                self.new_kps, self.total_kps
            )));
        }
        if self.weak_response_kps > self.total_kps {
            return Err(Error::InvalidInput(format!(
                "weak_response_kps {} exceeds total_kps {}",
                self.weak_response_kps, self.total_kps
            )));
        }
        if self.tracked_3d_kps > self.total_kps {
            return Err(Error::InvalidInput(format!(
                "tracked_3d_kps {} exceeds total_kps {}",
                self.tracked_3d_kps, self.total_kps
            )));
        }
        Ok(())
    }

    /// An all-zero keyframe (nothing visible).
    pub fn empty() -> Self {
        Self {
            t: 0.0,
            tracked_3d_kps: 0,
            total_detections: 0,
            detections_per_quadrant: [0; 4],
            new_kps: 0,
            total_kps: 0,
            weak_response_kps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HealthParams {
    pub kf_wait_time: f64,
    pub min_kps: u32,
    pub min_kps_per_quadrant: u32,
    pub new_kp_ratio_max: f64,
    pub weak_response_ratio_max: f64,
    /// Commanded speeds at or below this count as stationary.
    pub stationary_speed_eps: f64,
}

impl Default for HealthParams {
    fn default() -> Self {
        Self {
            kf_wait_time: 2.0,
            min_kps: 15,
            min_kps_per_quadrant: 2,
            new_kp_ratio_max: 0.75,
            weak_response_ratio_max: 0.85,
            stationary_speed_eps: 0.05,
        }
    }
}

impl HealthParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.kf_wait_time > 0.0
            && self.min_kps > 0
            && self.min_kps_per_quadrant > 0
            && self.stationary_speed_eps > 0.0;
        let ratios_ok = [self.new_kp_ratio_max, self.weak_response_ratio_max]
            .iter()
            .all(|r| *r > 0.0 && *r <= 1.0);
        if positive && ratios_ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid health parameters {self:?}")))
        }
    }
}

/// Why a keyframe (or the absence of one) was judged untrustworthy, in
/// priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnhealthyReason {
    KeyframeTimeout,
    FewTrackedKeypoints,
    QuadrantStarvation,
    HighNewKeypointRatio,
    WeakFeatureResponses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HealthVerdict {
    Healthy,
    Unhealthy(UnhealthyReason),
}

impl HealthVerdict {
    pub fn is_healthy(&self) -> bool {
        matches!(self, HealthVerdict::Healthy)
    }

    pub fn reason(&self) -> Option<UnhealthyReason> {
        match self {
            HealthVerdict::Healthy => None,
            HealthVerdict::Unhealthy(r) => Some(*r),
        }
    }
}

/// Criterion 1: the keyframe stream has stalled while the vehicle is moving.
pub fn evaluate_timeout(
    now: f64,
    last_kf_time: f64,
    commanded_speed: f64,
    params: &HealthParams,
) -> HealthVerdict {
    let stalled = now - last_kf_time > params.kf_wait_time;
    let moving = commanded_speed.abs() > params.stationary_speed_eps;
    if stalled && moving {
        HealthVerdict::Unhealthy(UnhealthyReason::KeyframeTimeout)
    } else {
        HealthVerdict::Healthy
    }
}

/// Criteria 2-5 on one keyframe.
pub fn evaluate_keyframe(stats: &KeyframeStats, params: &HealthParams) -> Result<HealthVerdict> {
    stats.validate()?;
    use UnhealthyReason::*;

    if stats.tracked_3d_kps < params.min_kps {
        return Ok(HealthVerdict::Unhealthy(FewTrackedKeypoints));
    }
    // Reaching here implies total_kps >= tracked_3d_kps >= min_kps > 0.
    let quadrant_gate = 10 * params.min_kps_per_quadrant as u64;
    if (stats.total_detections as u64) < quadrant_gate
        && stats
            .detections_per_quadrant
            .iter()
            .any(|&c| c < params.min_kps_per_quadrant)
    {
        return Ok(HealthVerdict::Unhealthy(QuadrantStarvation));
    }
    let total = stats.total_kps as f64;
    if stats.new_kps as f64 / total > params.new_kp_ratio_max {
        return Ok(HealthVerdict::Unhealthy(HighNewKeypointRatio));
    }
    if stats.weak_response_kps as f64 / total > params.weak_response_ratio_max {
        return Ok(HealthVerdict::Unhealthy(WeakFeatureResponses));
    }
    Ok(HealthVerdict::Healthy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use UnhealthyReason::*;

    fn stats(tracked: u32, quads: [u32; 4], new: u32, total: u32, weak: u32) -> KeyframeStats {
        KeyframeStats {
            t: 0.0,
            tracked_3d_kps: tracked,
            total_detections: quads.iter().sum(),
            detections_per_quadrant: quads,
            new_kps: new,
            total_kps: total,
            weak_response_kps: weak,
        }
    }

    #[test]
    fn timeout_cases() {
        let p = HealthParams::default();
        assert_eq!(
            evaluate_timeout(12.5, 10.0, 0.3, &p),
            HealthVerdict::Unhealthy(KeyframeTimeout)
        );
        assert_eq!(evaluate_timeout(12.5, 10.0, 0.0, &p), HealthVerdict::Healthy);
        assert_eq!(evaluate_timeout(10.1, 10.0, 0.3, &p), HealthVerdict::Healthy);
        // exactly at the wait time is not yet a timeout
        assert_eq!(evaluate_timeout(12.0, 10.0, 0.3, &p), HealthVerdict::Healthy);
    }

    #[test]
    fn few_tracked_keypoints() {
        let p = HealthParams::default();
        let s = stats(5, [20, 20, 20, 20], 0, 50, 0);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Unhealthy(FewTrackedKeypoints));
    }

    #[test]
    fn quadrant_criterion_is_gated_by_total_detections() {
        let p = HealthParams::default();
        // Features only in the bottom half, but plenty of them.
        let s = stats(30, [0, 0, 40, 40], 5, 60, 10);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Healthy);
        // Same shape with few detections trips the criterion.
        let s = stats(16, [0, 0, 9, 9], 2, 18, 2);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Unhealthy(QuadrantStarvation));
    }

    #[test]
    fn ratio_criteria_are_strict() {
        let p = HealthParams::default();
        let s = stats(30, [30, 30, 30, 30], 80, 100, 10);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Unhealthy(HighNewKeypointRatio));
        let s = stats(30, [30, 30, 30, 30], 75, 100, 10);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Healthy);
        let s = stats(30, [30, 30, 30, 30], 50, 100, 90);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Unhealthy(WeakFeatureResponses));
        let s = stats(30, [30, 30, 30, 30], 50, 100, 85);
        assert_eq!(evaluate_keyframe(&s, &p).unwrap(), HealthVerdict::Healthy);
    }

    #[test]
    fn zero_keypoints_fail_the_count_criterion() {
        let p = HealthParams::default();
        assert_eq!(
            evaluate_keyframe(&KeyframeStats::empty(), &p).unwrap(),
            HealthVerdict::Unhealthy(FewTrackedKeypoints)
        );
    }

    #[test]
    fn invalid_stats_are_rejected() {
        let p = HealthParams::default();
        let mut s = stats(30, [30, 30, 30, 30], 10, 100, 10);
        s.total_detections += 1;
        assert!(evaluate_keyframe(&s, &p).is_err());
        assert!(evaluate_keyframe(&stats(30, [1, 1, 1, 1], 101, 100, 0), &p).is_err());
        assert!(evaluate_keyframe(&stats(30, [1, 1, 1, 1], 0, 100, 101), &p).is_err());
        assert!(evaluate_keyframe(&stats(30, [1, 1, 1, 1], 0, 20, 0), &p).is_err());
    }

    #[test]
    fn more_tracked_keypoints_never_trip_count_criterion() {
        let p = HealthParams::default();
        for tracked in 0..200u32 {
            let v = evaluate_keyframe(&stats(tracked, [50, 50, 50, 50], 10, 200, 10), &p).unwrap();
            assert_eq!(v.reason() == Some(FewTrackedKeypoints), tracked < p.min_kps);
        }
    }
}
