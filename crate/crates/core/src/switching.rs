//! Hard switching between the visual-inertial odometry (VIO) and the scaled
//! primitive estimator (PE).
//!
//! The robust pose only ever follows the *local* displacement of whichever
//! source is active. At each switch the current robust pose and the new
//! source's pose are captured as anchors, and from then on
//!
//! ```text
//! T_ro = anchor_ro · anchor_src⁻¹ · T_src
//! ```
//!
//! so the robust pose is continuous across switches and moves exactly like
//! the active source in between. Switches are debounced by counting
//! successive unhealthy (or healthy) verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, RigidTransform};
use crate::health::HealthVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    VioTracking,
    PeTracking,
}

impl EstimatorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorMode::VioTracking => "vio",
            EstimatorMode::PeTracking => "pe",
        }
    }
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vio" => Ok(EstimatorMode::VioTracking),
            "pe" => Ok(EstimatorMode::PeTracking),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchParams {
    /// Successive unhealthy verdicts before leaving the VIO.
    pub fail_streak_to_switch: u32,
    /// Successive healthy keyframes before returning to the VIO.
    pub ok_streak_to_switch: u32,
    /// PE path length that must be accumulated before the scale is trusted.
    pub scale_min_segment_length: f64,
}

impl Default for SwitchParams {
    fn default() -> Self {
        Self {
            fail_streak_to_switch: 3,
            ok_streak_to_switch: 5,
            scale_min_segment_length: 0.5,
        }
    }
}

impl SwitchParams {
    pub fn validate(&self) -> Result<()> {
        if self.fail_streak_to_switch == 0
            || self.ok_streak_to_switch == 0
            || !(self.scale_min_segment_length >= 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid switch parameters {self:?}")));
        }
        Ok(())
    }
}

/// One logged mode change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: EstimatorMode,
    pub to: EstimatorMode,
    /// Robust pose just before the switch.
    pub robust_before: Pose,
    /// Robust pose re-derived through the freshly captured anchors.
    pub robust_after: Pose,
    pub anchor_ro: RigidTransform,
    /// Anchor of the source being switched to (PE or VIO pose at capture).
    pub anchor_source: RigidTransform,
}

/// Live state of the switching estimator.
#[derive(Debug, Clone)]
pub struct SwitchingState {
    mode: EstimatorMode,
    robust: Pose,
    anchor_ro: RigidTransform,
    anchor_pe: RigidTransform,
    anchor_sv: RigidTransform,
    /// `anchor_ro · anchor_pe⁻¹`, fixed between switch events.
    pe_offset: RigidTransform,
    /// `anchor_ro · anchor_sv⁻¹`, fixed between switch events.
    sv_offset: RigidTransform,
    scale: f64,
    scale_num: f64,
    scale_den: f64,
    fail_streak: u32,
    ok_streak: u32,
    latest_pe: Option<Pose>,
    latest_sv: Option<Pose>,
    switch_log: Vec<SwitchEvent>,
}

impl SwitchingState {
    /// Starts in VIO tracking with all anchors at `initial`, so the first VIO
    /// pose reported in the same frame maps straight through.
    pub fn new(initial: Pose) -> Self {
        Self {
            mode: EstimatorMode::VioTracking,
            robust: initial,
            anchor_ro: initial,
            anchor_pe: initial,
            anchor_sv: initial,
            pe_offset: Pose::identity(),
            sv_offset: Pose::identity(),
            scale: 1.0,
            scale_num: 0.0,
            scale_den: 0.0,
            fail_streak: 0,
            ok_streak: 0,
            latest_pe: None,
            latest_sv: None,
            switch_log: Vec::new(),
        }
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn robust_pose(&self) -> Pose {
        self.robust
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn fail_streak(&self) -> u32 {
        self.fail_streak
    }

    pub fn ok_streak(&self) -> u32 {
        self.ok_streak
    }

    pub fn anchor_ro(&self) -> RigidTransform {
        self.anchor_ro
    }

    pub fn anchor_pe(&self) -> RigidTransform {
        self.anchor_pe
    }

    pub fn anchor_sv(&self) -> RigidTransform {
        self.anchor_sv
    }

    pub fn pe_offset(&self) -> RigidTransform {
        self.pe_offset
    }

    pub fn sv_offset(&self) -> RigidTransform {
        self.sv_offset
    }

    pub fn switch_log(&self) -> &[SwitchEvent] {
        &self.switch_log
    }

    /// Feeds one VIO pose. `verdict` is `None` for ordinary frames and the
    /// health verdict for keyframes; only keyframe verdicts drive the streaks.
    ///
    /// While VIO is the active source the robust pose follows every VIO pose,
    /// healthy or not, until the failure streak triggers the switch.
    pub fn ingest_vio(
        &mut self,
        t_sv: &Pose,
        verdict: Option<HealthVerdict>,
        t: f64,
        params: &SwitchParams,
    ) -> Pose {
        self.latest_sv = Some(*t_sv);
        match self.mode {
            EstimatorMode::VioTracking => {
                self.robust = self.sv_offset.compose(t_sv);
                if let Some(v) = verdict {
                    self.register_verdict(v, t, params);
                }
            }
            EstimatorMode::PeTracking => {
                if let Some(v) = verdict {
                    self.register_verdict(v, t, params);
                }
            }
        }
        self.robust
    }

    /// Feeds the scaled PE pose. Outside PE tracking this only records the
    /// pose for the next anchor capture.
    pub fn ingest_pe(&mut self, t_pe_scaled: &Pose, _t: f64) -> Pose {
        self.latest_pe = Some(*t_pe_scaled);
        if self.mode == EstimatorMode::PeTracking {
            self.robust = self.pe_offset.compose(t_pe_scaled);
        }
        self.robust
    }

    /// Feeds a verdict that is not tied to a keyframe (the keyframe timeout
    /// poll). Healthy polls carry no information and are ignored.
    pub fn ingest_health(&mut self, verdict: HealthVerdict, t: f64, params: &SwitchParams) -> Pose {
        if !verdict.is_healthy() {
            self.register_verdict(verdict, t, params);
        }
        self.robust
    }

    /// The VIO re-initialised in a fresh local frame. If it is the active
    /// source, re-anchor so its jump does not reach the robust pose.
    pub fn resync_vio(&mut self, t_sv: &Pose) {
        self.latest_sv = Some(*t_sv);
        if self.mode == EstimatorMode::VioTracking {
            self.anchor_ro = self.robust;
            self.anchor_sv = *t_sv;
            self.sv_offset = self.anchor_ro.compose(&self.anchor_sv.inverse());
        }
    }

    /// Applies a world-frame correction (e.g. after pose-graph optimisation):
    /// every anchor-derived quantity becomes `correction · previous`.
    pub fn apply_correction(&mut self, correction: &RigidTransform) {
        self.anchor_ro = correction.compose(&self.anchor_ro);
        self.pe_offset = correction.compose(&self.pe_offset);
        self.sv_offset = correction.compose(&self.sv_offset);
        self.robust = correction.compose(&self.robust);
    }

    fn register_verdict(&mut self, verdict: HealthVerdict, t: f64, params: &SwitchParams) {
        if verdict.is_healthy() {
            self.fail_streak = 0;
            if self.mode == EstimatorMode::PeTracking {
                self.ok_streak += 1;
                if self.ok_streak >= params.ok_streak_to_switch {
                    self.switch_to_vio(t);
                }
            }
        } else {
            self.ok_streak = 0;
            self.fail_streak += 1;
            if self.mode == EstimatorMode::VioTracking
                && self.fail_streak >= params.fail_streak_to_switch
            {
                self.switch_to_pe(t);
            }
        }
    }

    fn switch_to_pe(&mut self, t: f64) {
        let before = self.robust;
        self.anchor_ro = self.robust;
        self.anchor_pe = self.latest_pe.unwrap_or(self.robust);
        self.pe_offset = self.anchor_ro.compose(&self.anchor_pe.inverse());
        let after = self.pe_offset.compose(&self.anchor_pe);
        self.robust = after;
        self.finish_switch(t, EstimatorMode::PeTracking, before, after, self.anchor_pe);
    }

    fn switch_to_vio(&mut self, t: f64) {
        let before = self.robust;
        self.anchor_ro = self.robust;
        self.anchor_sv = self.latest_sv.unwrap_or(self.robust);
        self.sv_offset = self.anchor_ro.compose(&self.anchor_sv.inverse());
        let after = self.sv_offset.compose(&self.anchor_sv);
        self.robust = after;
        self.finish_switch(t, EstimatorMode::VioTracking, before, after, self.anchor_sv);
    }

    fn finish_switch(
        &mut self,
        t: f64,
        to: EstimatorMode,
        before: Pose,
        after: Pose,
        anchor_source: RigidTransform,
    ) {
        self.switch_log.push(SwitchEvent {
            t,
            from: self.mode,
            to,
            robust_before: before,
            robust_after: after,
            anchor_ro: self.anchor_ro,
            anchor_source,
        });
        self.mode = to;
        self.fail_streak = 0;
        self.ok_streak = 0;
    }

    /// Accumulates distance travelled between consecutive time-matched
    /// VIO/PE keyframe pairs and refreshes the scale once the PE side has
    /// covered `scale_min_segment_length`. Only applies while tracking VIO.
    ///
    /// Returns whether the scale was refreshed.
    pub fn update_scale(
        &mut self,
        sv_keyframes: &[(f64, Pose)],
        pe_keyframes: &[(f64, Pose)],
        params: &SwitchParams,
    ) -> Result<bool> {
        if sv_keyframes.len() != pe_keyframes.len() {
            return Err(Error::InvalidInput(format!(
                "scale update needs matched sequences ({} VIO vs {} PE poses)",
                sv_keyframes.len(),
                pe_keyframes.len()
            )));
        }
        if let Some((a, b)) = sv_keyframes
            .iter()
            .zip(pe_keyframes)
            .find(|(a, b)| (a.0 - b.0).abs() > 1e-6)
        {
            return Err(Error::InvalidInput(format!(
                "scale update pairs are not time matched ({} vs {})",
                a.0, b.0
            )));
        }
        if self.mode != EstimatorMode::VioTracking {
            return Ok(false);
        }
        self.scale_num += local_path_length(sv_keyframes);
        self.scale_den += local_path_length(pe_keyframes);
        if self.scale_den >= params.scale_min_segment_length && self.scale_num > 0.0 {
            self.scale = self.scale_num / self.scale_den;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Σ ‖R_t⁻¹ (P_{t+1} − P_t)‖ over consecutive poses.
fn local_path_length(poses: &[(f64, Pose)]) -> f64 {
    poses
        .windows(2)
        .map(|w| {
            let d = w[1].1.position - w[0].1.position;
            (w[0].1.orientation.inverse() * d).norm()
        })
        .sum()
}

/// Scales the translation of a raw PE pose about `pe_origin`; rotation is
/// left untouched.
pub fn scaled_pe_pose(t_pe_raw: &RigidTransform, scale: f64, pe_origin: &RigidTransform) -> RigidTransform {
    Pose {
        position: pe_origin.position + scale * (t_pe_raw.position - pe_origin.position),
        orientation: t_pe_raw.orientation,
    }
}
