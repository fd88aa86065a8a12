//! Replays a simulated mission through one estimator and scores the result.
//!
//! Each tick runs, in order: PE propagation (and depth substitution when a
//! depth sample lands on the tick), the scaled PE pose into the switching
//! core, the VIO frame if one is due (session resync, keyframe verdict,
//! scale update), the keyframe-timeout poll, a pose-graph node on keyframe
//! ticks with loop closure and re-anchoring, and finally the output sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rmse_ate, Pose, Trajectory};
use crate::health::{evaluate_keyframe, evaluate_timeout, HealthParams, HealthVerdict};
use crate::io::{aggregate, AggregateReport, MetricsReport, ModeDurations, SCHEMA_VERSION};
use crate::pose_graph::{
    reanchor_after_optimize, EdgeWeights, KeyframeSource, LoopOutcome, OptimizeOptions, PoseGraph,
};
use crate::primitive::{PeConfig, PeState, VelocityCommand};
use crate::sim::{simulate, KeyframeRecord, LoopOracle, MissionData, Scenario};
use crate::switching::{scaled_pe_pose, EstimatorMode, SwitchEvent, SwitchParams, SwitchingState};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    SmVio,
    VioOnly,
    PeOnly,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::SmVio, EstimatorKind::VioOnly, EstimatorKind::PeOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::SmVio => "sm_vio",
            EstimatorKind::VioOnly => "vio_only",
            EstimatorKind::PeOnly => "pe_only",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("estimator", format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub estimator: EstimatorKind,
    /// When off, keyframe verdicts never reach the switching core and the
    /// robust pose stays on the VIO.
    pub enable_switching: bool,
    pub enable_loop_closure: bool,
    pub health: HealthParams,
    pub switch: SwitchParams,
    pub pe: PeConfig,
    pub optimize: OptimizeOptions,
    pub weights: EdgeWeights,
    /// Emit an output sample every this many ticks.
    pub output_every: usize,
    /// Keyframe-timeout poll period in ticks.
    pub timeout_poll_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::SmVio,
            enable_switching: true,
            enable_loop_closure: false,
            health: HealthParams::default(),
            switch: SwitchParams::default(),
            pe: PeConfig::default(),
            optimize: OptimizeOptions::default(),
            weights: EdgeWeights::default(),
            output_every: 10,
            timeout_poll_every: 10,
        }
    }
}

impl RunOptions {
    pub fn for_estimator(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            ..Self::default()
        }
    }

    pub fn with_loop_closure(mut self, on: bool) -> Self {
        self.enable_loop_closure = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.health.validate()?;
        self.switch.validate()?;
        if self.output_every == 0 {
            return Err(Error::config("output_every", "must be at least 1"));
        }
        if self.timeout_poll_every == 0 {
            return Err(Error::config("timeout_poll_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedSample {
    pub t: f64,
    pub pose: Pose,
    pub mode: EstimatorMode,
    /// Newest graph node at emission time, if any.
    pub node: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub estimator: EstimatorKind,
    /// Poses as emitted online.
    pub samples: Vec<TaggedSample>,
    /// Online poses moved onto the final optimised graph.
    pub trajectory: Trajectory,
    pub switch_log: Vec<SwitchEvent>,
    pub graph: Option<PoseGraph>,
    pub n_loop_closures: usize,
    pub scale: f64,
    /// `(t, s)` after every scale refresh.
    pub scale_history: Vec<(f64, f64)>,
}

impl RunOutput {
    pub fn online_trajectory(&self) -> Result<Trajectory> {
        let mut traj = Trajectory::new();
        for s in &self.samples {
            traj.push(s.t, s.pose)?;
        }
        Ok(traj)
    }

    pub fn mode_tags(&self) -> Vec<(f64, &'static str)> {
        self.samples.iter().map(|s| (s.t, s.mode.as_str())).collect()
    }

    /// Time attributed to each mode, each sample covering the interval up
    /// to the next one.
    pub fn mode_durations(&self) -> ModeDurations {
        let mut d = ModeDurations::default();
        for w in self.samples.windows(2) {
            let span = w[1].t - w[0].t;
            match w[0].mode {
                EstimatorMode::VioTracking => d.vio += span,
                EstimatorMode::PeTracking => d.pe += span,
            }
        }
        d
    }
}

fn command_at(commands: &[VelocityCommand], cursor: &mut usize, t: f64) -> VelocityCommand {
    while *cursor + 1 < commands.len() && commands[*cursor + 1].t <= t + TIME_EPS {
        *cursor += 1;
    }
    match commands.get(*cursor) {
        Some(c) if c.t <= t + TIME_EPS => *c,
        _ => VelocityCommand::new(t, 0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy)]
struct ScaleKeyframe {
    session: u32,
    t: f64,
    sv: Pose,
    pe_raw: Pose,
}

pub fn run_estimator(data: &MissionData, opts: &RunOptions) -> Result<RunOutput> {
    opts.validate()?;
    let truth = data.truth.samples();
    let first = truth
        .first()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    if data.imu.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} imu samples for {} ticks",
            data.imu.len(),
            truth.len()
        )));
    }
    let dt = data.dt();
    let n = data.n_ticks();
    let models = &data.scenario.models;
    let kf_every = models.ticks_per(models.keyframe_rate, dt);
    let pe_cfg = PeConfig {
        depth_convention: models.depth_convention,
        ..opts.pe
    };
    let sm = opts.estimator == EstimatorKind::SmVio;

    let initial = first.pose;
    let mut pe = PeState::new(initial, first.t);
    let mut state = SwitchingState::new(initial);
    let mut graph = PoseGraph::new(opts.weights);
    let mut inserted: Vec<Pose> = Vec::new();
    let mut oracle = LoopOracle::new(data.scenario.loop_closure, models.seed);
    let mut n_loops = 0;
    let mut scale_history = Vec::new();

    let (mut cmd_cursor, mut depth_cursor, mut vio_cursor) = (0, 0, 0);
    let mut session: Option<u32> = None;
    let mut last_kf_time = first.t;
    let mut prev_scale_kf: Option<ScaleKeyframe> = None;
    let mut vio_offset = Pose::identity();
    let mut vio_out = initial;
    let mut samples = Vec::with_capacity(n / opts.output_every + 2);

    for k in 0..=n {
        let t = truth[k].t;
        if k > 0 {
            let cmd = command_at(&data.commands, &mut cmd_cursor, truth[k - 1].t);
            pe = pe.step(&data.imu[k - 1], &cmd, t - truth[k - 1].t, &pe_cfg)?;
        }
        while let Some(d) = data.depth.get(depth_cursor) {
            if d.t > t + TIME_EPS {
                break;
            }
            if (d.t - t).abs() <= TIME_EPS {
                pe = pe.apply_depth(d, pe_cfg.depth_convention);
            }
            depth_cursor += 1;
        }

        if sm {
            state.ingest_pe(&scaled_pe_pose(&pe.pose, state.scale(), &initial), t);
        }

        let mut healthy_kf_here = false;
        while vio_cursor < data.vio.len() && data.vio[vio_cursor].tick < k {
            vio_cursor += 1;
        }
        if let Some(frame) = data.vio.get(vio_cursor).filter(|f| f.tick == k) {
            vio_cursor += 1;
            let new_session = session.is_some_and(|s| s != frame.session);
            session = Some(frame.session);
            match opts.estimator {
                EstimatorKind::SmVio => {
                    if new_session {
                        state.resync_vio(&frame.pose);
                    }
                    let verdict = frame
                        .keyframe
                        .as_ref()
                        .map(|s| evaluate_keyframe(s, &opts.health))
                        .transpose()?;
                    if frame.keyframe.is_some() {
                        last_kf_time = t;
                    }
                    let fed = if opts.enable_switching { verdict } else { None };
                    state.ingest_vio(&frame.pose, fed, t, &opts.switch);

                    match verdict {
                        Some(HealthVerdict::Healthy) => {
                            healthy_kf_here = true;
                            let current = ScaleKeyframe {
                                session: frame.session,
                                t,
                                sv: frame.pose,
                                pe_raw: pe.pose,
                            };
                            if let Some(prev) = prev_scale_kf.filter(|p| p.session == frame.session) {
                                let refreshed = state.update_scale(
                                    &[(prev.t, prev.sv), (t, current.sv)],
                                    &[(prev.t, prev.pe_raw), (t, current.pe_raw)],
                                    &opts.switch,
                                )?;
                                if refreshed {
                                    scale_history.push((t, state.scale()));
                                }
                            }
                            prev_scale_kf = Some(current);
                        }
                        Some(HealthVerdict::Unhealthy(_)) => prev_scale_kf = None,
                        None => {}
                    }
                }
                EstimatorKind::VioOnly => {
                    if new_session {
                        vio_offset = vio_out.compose(&frame.pose.inverse());
                    }
                    vio_out = vio_offset.compose(&frame.pose);
                }
                EstimatorKind::PeOnly => {}
            }
        }

        if sm && opts.enable_switching && k % opts.timeout_poll_every == 0 {
            let speed = command_at(&data.commands, &mut cmd_cursor, t).speed();
            let verdict = evaluate_timeout(t, last_kf_time, speed, &opts.health);
            state.ingest_health(verdict, t, &opts.switch);
        }

        if sm && k % kf_every == 0 {
            let source = if state.mode() == EstimatorMode::VioTracking && healthy_kf_here {
                KeyframeSource::VioKf
            } else {
                KeyframeSource::PeKf
            };
            let pose = state.robust_pose();
            let id = graph.add_keyframe(pose, t, source)?;
            inserted.push(pose);
            if opts.enable_loop_closure && source == KeyframeSource::VioKf {
                let record = KeyframeRecord {
                    node: id,
                    t,
                    truth: truth[k].pose,
                };
                if let Some(p) = oracle.observe(record, &data.scenario.field) {
                    if let LoopOutcome::Accepted(_) =
                        graph.add_loop_edge(p.from, p.to, p.relative, p.information)?
                    {
                        graph.optimize(&opts.optimize)?;
                        reanchor_after_optimize(&graph, &mut state);
                        n_loops += 1;
                    }
                }
            }
        }

        if k % opts.output_every == 0 || k == n {
            let (pose, mode) = match opts.estimator {
                EstimatorKind::SmVio => (state.robust_pose(), state.mode()),
                EstimatorKind::VioOnly => (vio_out, EstimatorMode::VioTracking),
                EstimatorKind::PeOnly => (pe.pose, EstimatorMode::PeTracking),
            };
            if !pose.is_finite() {
                return Err(Error::NonFinite(format!("{} pose at t = {t}", opts.estimator)));
            }
            samples.push(TaggedSample {
                t,
                pose,
                mode,
                node: graph.nodes().len().checked_sub(1),
            });
        }
    }

    let mut trajectory = Trajectory::new();
    for s in &samples {
        let pose = match s.node {
            Some(j) => graph.nodes()[j]
                .pose
                .compose(&inserted[j].inverse())
                .compose(&s.pose),
            None => s.pose,
        };
        trajectory.push(s.t, pose)?;
    }

    Ok(RunOutput {
        estimator: opts.estimator,
        samples,
        trajectory,
        switch_log: state.switch_log().to_vec(),
        graph: sm.then_some(graph),
        n_loop_closures: n_loops,
        scale: state.scale(),
        scale_history,
    })
}

/// Scores a run against the mission's ground truth.
pub fn evaluate(data: &MissionData, output: &RunOutput, aligned: bool) -> Result<MetricsReport> {
    let max_gap = data.dt() / 2.0;
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        scenario: data.scenario.name.clone(),
        schedule_id: data.scenario.schedule.id.clone(),
        estimator: output.estimator.to_string(),
        seed: data.scenario.models.seed,
        aligned,
        rmse_ate_m: rmse_ate(&output.trajectory, &data.truth, aligned, max_gap)?,
        trajectory_length_m: data.truth.path_length(),
        n_switches: output.switch_log.len(),
        n_loop_closures: output.n_loop_closures,
        mode_durations_s: output.mode_durations(),
    };
    report.validate()?;
    Ok(report)
}

/// Simulates `scenario` once per seed, runs the estimator on each and
/// aggregates the aligned RMSE.
pub fn run_seeds(scenario: &Scenario, seeds: &[u64], opts: &RunOptions) -> Result<AggregateReport> {
    let runs = seeds
        .iter()
        .map(|&seed| {
            let data = simulate(&scenario.clone().with_seed(seed))?;
            let out = run_estimator(&data, opts)?;
            evaluate(&data, &out, true)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&runs)
}

/// Unaligned position error of the sample nearest to `t`.
pub fn position_error_at(est: &Trajectory, truth: &Trajectory, t: f64) -> Option<f64> {
    let e = &est.samples()[est.nearest_index(t)?];
    let r = &truth.samples()[truth.nearest_index(e.t)?];
    Some((e.pose.position - r.pose.position).norm())
}

/// Growth of the unaligned error over the first half of a window and over
/// the whole window, both measured from the window start.
pub fn window_error_growth(
    est: &Trajectory,
    truth: &Trajectory,
    start: f64,
    duration: f64,
) -> Option<(f64, f64)> {
    let e0 = position_error_at(est, truth, start)?;
    let half = position_error_at(est, truth, start + duration / 2.0)?;
    let full = position_error_at(est, truth, start + duration)?;
    Some((half - e0, full - e0))
}
