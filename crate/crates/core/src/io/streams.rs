//! The simulator's stream set: one directory holding the resolved scenario,
//! ground truth and every sensor stream as line-delimited records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};

use super::tum::{parse_pose_fields, render_pose_fields};
use super::{fmt_time, fmt_value, read_trajectory, write_trajectory, Tokens};
use crate::error::{Error, Result};
use crate::health::KeyframeStats;
use crate::primitive::{DepthSample, ImuSample, VelocityCommand};
use crate::sim::{MissionData, Scenario, VioFrame};
use crate::switching::SwitchEvent;

pub struct StreamFiles;

impl StreamFiles {
    pub const SCENARIO: &'static str = "scenario.toml";
    pub const TRUTH: &'static str = "ground_truth.tum";
    pub const COMMANDS: &'static str = "commands.txt";
    pub const IMU: &'static str = "imu.txt";
    pub const DEPTH: &'static str = "depth.txt";
    pub const VIO: &'static str = "vio.txt";
    pub const KEYFRAMES: &'static str = "keyframes.txt";
}

const COMMANDS_HEADER: &str = "# smvio commands v1: t v_x v_z";
const IMU_HEADER: &str = "# smvio imu v1: t qx qy qz qw";
const DEPTH_HEADER: &str = "# smvio depth v1: t depth";
const VIO_HEADER: &str = "# smvio vio v1: t session tx ty tz qx qy qz qw";
const KEYFRAMES_HEADER: &str =
    "# smvio keyframes v1: t tracked_3d_kps total_detections q_tl q_tr q_bl q_br new_kps total_kps weak_response_kps";
const MODES_HEADER: &str = "# smvio modes v1: t mode";
const SWITCHES_HEADER: &str =
    "# smvio switches v1: t from to anchor_ro(tx ty tz qx qy qz qw) anchor_source(tx ty tz qx qy qz qw)";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_streams(data: &MissionData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(StreamFiles::SCENARIO), data.scenario.to_toml_string()?)?;
    write_trajectory(&data.truth, create(dir, StreamFiles::TRUTH)?)?;

    let mut out = create(dir, StreamFiles::COMMANDS)?;
    writeln!(out, "{COMMANDS_HEADER}")?;
    for c in &data.commands {
        writeln!(out, "{} {} {}", fmt_time(c.t), fmt_value(c.v_x), fmt_value(c.v_z))?;
    }
    out.flush()?;

    let mut out = create(dir, StreamFiles::IMU)?;
    writeln!(out, "{IMU_HEADER}")?;
    for s in &data.imu {
        let q = s.orientation.quaternion();
        writeln!(
            out,
            "{} {} {} {} {}",
            fmt_time(s.t),
            fmt_value(q.i),
            fmt_value(q.j),
            fmt_value(q.k),
            fmt_value(q.w)
        )?;
    }
    out.flush()?;

    let mut out = create(dir, StreamFiles::DEPTH)?;
    writeln!(out, "{DEPTH_HEADER}")?;
    for d in &data.depth {
        writeln!(out, "{} {}", fmt_time(d.t), fmt_value(d.depth))?;
    }
    out.flush()?;

    let mut vio = create(dir, StreamFiles::VIO)?;
    let mut kfs = create(dir, StreamFiles::KEYFRAMES)?;
    writeln!(vio, "{VIO_HEADER}")?;
    writeln!(kfs, "{KEYFRAMES_HEADER}")?;
    for f in &data.vio {
        let mut line = format!("{} {}", fmt_time(f.t), f.session);
        render_pose_fields(&mut line, &f.pose);
        writeln!(vio, "{line}")?;
        if let Some(k) = &f.keyframe {
            let q = k.detections_per_quadrant;
            writeln!(
                kfs,
                "{} {} {} {} {} {} {} {} {} {}",
                fmt_time(f.t),
                k.tracked_3d_kps,
                k.total_detections,
                q[0],
                q[1],
                q[2],
                q[3],
                k.new_kps,
                k.total_kps,
                k.weak_response_kps
            )?;
        }
    }
    vio.flush()?;
    kfs.flush()?;
    Ok(())
}

struct StreamReader {
    path: PathBuf,
    lines: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
}

impl StreamReader {
    fn open(dir: &Path, name: &str, header: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::open(&path).map_err(|e| {
            Error::InvalidInput(format!("cannot open stream {}: {e}", path.display()))
        })?;
        let mut lines = BufReader::new(file).lines().enumerate();
        match lines.next() {
            Some((_, Ok(first))) if first.trim_end() == header => Ok(Self { path, lines }),
            _ => Err(Error::InvalidInput(format!(
                "{} does not start with `{header}`",
                path.display()
            ))),
        }
    }

    /// Calls `f` on every data line.
    fn for_each(self, mut f: impl FnMut(&mut Tokens<'_>) -> Result<()>) -> Result<()> {
        for (k, line) in self.lines {
            let line = line?;
            let Some(mut tokens) = Tokens::data_line(&line, k + 1) else {
                continue;
            };
            f(&mut tokens).map_err(|e| match e {
                Error::Parse { line, token, message } => Error::Parse {
                    line,
                    token,
                    message: format!("{}: {message}", self.path.display()),
                },
                other => other,
            })?;
            tokens.finish()?;
        }
        Ok(())
    }
}

fn tick_of(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// Loads a stream directory written by [`write_streams`].
pub fn read_streams(dir: &Path) -> Result<MissionData> {
    let scenario = Scenario::load(&dir.join(StreamFiles::SCENARIO))?;
    let dt = scenario.plan.dt;
    let truth_file = File::open(dir.join(StreamFiles::TRUTH))
        .map_err(|e| Error::InvalidInput(format!("cannot open ground truth: {e}")))?;
    let truth = read_trajectory(BufReader::new(truth_file))?;

    let mut commands = Vec::new();
    StreamReader::open(dir, StreamFiles::COMMANDS, COMMANDS_HEADER)?.for_each(|tk| {
        commands.push(VelocityCommand::new(tk.float("t")?, tk.float("v_x")?, tk.float("v_z")?));
        Ok(())
    })?;

    let mut imu = Vec::new();
    StreamReader::open(dir, StreamFiles::IMU, IMU_HEADER)?.for_each(|tk| {
        let t = tk.float("t")?;
        let (x, y, z, w) = (tk.float("qx")?, tk.float("qy")?, tk.float("qz")?, tk.float("qw")?);
        let q = Quaternion::new(w, x, y, z);
        if q.norm() < 1e-12 {
            return Err(Error::parse(tk.line, "", "zero quaternion"));
        }
        imu.push(ImuSample {
            t,
            orientation: UnitQuaternion::new_normalize(q),
        });
        Ok(())
    })?;

    let mut depth = Vec::new();
    StreamReader::open(dir, StreamFiles::DEPTH, DEPTH_HEADER)?.for_each(|tk| {
        depth.push(DepthSample {
            t: tk.float("t")?,
            depth: tk.float("depth")?,
        });
        Ok(())
    })?;

    let mut vio: Vec<VioFrame> = Vec::new();
    StreamReader::open(dir, StreamFiles::VIO, VIO_HEADER)?.for_each(|tk| {
        let t = tk.float("t")?;
        let session = tk.uint("session")?;
        let pose = parse_pose_fields(tk)?;
        vio.push(VioFrame {
            t,
            tick: tick_of(t, dt),
            session,
            pose,
            keyframe: None,
        });
        Ok(())
    })?;

    let mut next = 0;
    StreamReader::open(dir, StreamFiles::KEYFRAMES, KEYFRAMES_HEADER)?.for_each(|tk| {
        let t = tk.float("t")?;
        let mut stats = KeyframeStats {
            t,
            tracked_3d_kps: tk.uint("tracked_3d_kps")?,
            total_detections: tk.uint("total_detections")?,
            detections_per_quadrant: [0; 4],
            new_kps: 0,
            total_kps: 0,
            weak_response_kps: 0,
        };
        for q in 0..4 {
            stats.detections_per_quadrant[q] = tk.uint("quadrant count")?;
        }
        stats.new_kps = tk.uint("new_kps")?;
        stats.total_kps = tk.uint("total_kps")?;
        stats.weak_response_kps = tk.uint("weak_response_kps")?;
        let tick = tick_of(t, dt);
        while next < vio.len() && vio[next].tick < tick {
            next += 1;
        }
        match vio.get_mut(next) {
            Some(frame) if frame.tick == tick => {
                frame.keyframe = Some(stats);
                Ok(())
            }
            _ => Err(Error::parse(tk.line, fmt_time(t), "keyframe without a matching VIO frame")),
        }
    })?;

    if truth.len() != scenario.plan.n_ticks() + 1 || imu.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "stream lengths do not match the scenario: {} truth and {} imu samples for {} ticks",
            truth.len(),
            imu.len(),
            scenario.plan.n_ticks() + 1
        )));
    }
    Ok(MissionData {
        scenario,
        truth,
        commands,
        imu,
        depth,
        vio,
    })
}

/// Per-sample mode tags (`vio` / `pe`) matching a trajectory file.
pub fn write_modes<W: Write>(samples: &[(f64, &str)], mut out: W) -> Result<()> {
    writeln!(out, "{MODES_HEADER}")?;
    for (t, mode) in samples {
        writeln!(out, "{} {mode}", fmt_time(*t))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_modes<R: BufRead>(input: R) -> Result<Vec<(f64, String)>> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let Some(mut tk) = Tokens::data_line(&line, k + 1) else {
            continue;
        };
        let t = tk.float("t")?;
        let mode = tk.next_token("mode")?.to_string();
        tk.finish()?;
        out.push((t, mode));
    }
    Ok(out)
}

/// One line per switch: time, modes and the two anchors captured.
pub fn write_switch_log<W: Write>(log: &[SwitchEvent], mut out: W) -> Result<()> {
    writeln!(out, "{SWITCHES_HEADER}")?;
    for ev in log {
        let mut line = format!("{} {} {}", fmt_time(ev.t), ev.from.as_str(), ev.to.as_str());
        render_pose_fields(&mut line, &ev.anchor_ro);
        render_pose_fields(&mut line, &ev.anchor_source);
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
