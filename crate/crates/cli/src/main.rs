use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smvio_core::harness::{evaluate, run_estimator, EstimatorKind, RunOptions};
use smvio_core::io::{
    aggregate, read_metrics, read_modes, read_streams, read_trajectory, write_metrics, write_modes,
    write_streams, write_switch_log, write_trajectory, MetricsReport, ModeDurations, SCHEMA_VERSION,
};
use smvio_core::pose_graph::g2o::write_graph;
use smvio_core::sim::{reef_schedules, simulate, Scenario};
use smvio_core::{geometry, Error};

/// Switching VIO / dead-reckoning estimator: simulate missions, run
/// estimators on them and score the results.
#[derive(Parser)]
#[command(name = "smvio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and sensor streams for a scenario.
    Simulate(SimulateArgs),
    /// Run one estimator over a stream directory.
    Run(RunArgs),
    /// Score a trajectory against a reference, or aggregate metric reports.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML file or built-in name (reef_lawnmower, wreck_lawnmower, reef_squares).
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the failure schedule with a named reef schedule (1x60, 3x15, 3x30, 3x45, 5x20).
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    streams: PathBuf,
    /// sm_vio, vio_only or pe_only.
    #[arg(long, default_value = "sm_vio")]
    estimator: EstimatorKind,
    #[arg(long)]
    loop_closure: bool,
    /// Keep the robust pose on the VIO regardless of health verdicts.
    #[arg(long)]
    no_switching: bool,
    /// TOML file with run-option overrides (health, switch, pe, optimize, weights tables).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    fail_streak: Option<u32>,
    #[arg(long)]
    ok_streak: Option<u32>,
    #[arg(long)]
    kf_wait_time: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated trajectory (TUM format).
    #[arg(long, requires = "reference", conflicts_with = "aggregate")]
    est: Option<PathBuf>,
    /// Reference trajectory (TUM format).
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Skip the rigid alignment before computing the error.
    #[arg(long)]
    no_align: bool,
    /// Mode tags of the estimate, used for switch counts and mode durations.
    #[arg(long)]
    modes: Option<PathBuf>,
    #[arg(long, default_value = "external")]
    scenario_name: String,
    #[arg(long, default_value = "none")]
    schedule_id: String,
    #[arg(long, default_value = "unknown")]
    estimator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-run metric reports to combine into mean and standard deviation.
    #[arg(long, num_args = 1.., conflicts_with = "est")]
    aggregate: Vec<PathBuf>,
    /// Report destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::InvalidStep { .. }
        | Error::DisconnectedGraph
        | Error::NoGauge
        | Error::NotPositiveDefinite { .. }
        | Error::SingularSystem
        | Error::NonFinite(_) => 4,
        _ => 3,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))
}

fn load_scenario(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    if path.exists() {
        Scenario::load(path)
    } else {
        Scenario::builtin(arg)
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(id) = &args.schedule {
        let schedule = reef_schedules()
            .into_iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::Config {
                key: "schedule".into(),
                message: format!("unknown schedule `{id}`"),
            })?;
        scenario = scenario.with_schedule(schedule);
        scenario.validate()?;
    }
    let data = simulate(&scenario)?;
    write_streams(&data, &args.out)?;
    eprintln!(
        "{}: {} ticks, {} VIO frames, seed {} -> {}",
        scenario.name,
        data.n_ticks(),
        data.vio.len(),
        scenario.models.seed,
        args.out.display()
    );
    Ok(())
}

fn run_options(args: &RunArgs) -> Result<RunOptions, Error> {
    let mut opts = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<RunOptions>(&text).map_err(|e| Error::Config {
                key: "params".into(),
                message: e.message().to_string(),
            })?
        }
        None => RunOptions::default(),
    };
    opts.estimator = args.estimator;
    opts.enable_loop_closure |= args.loop_closure;
    opts.enable_switching &= !args.no_switching;
    if let Some(n) = args.fail_streak {
        opts.switch.fail_streak_to_switch = n;
    }
    if let Some(n) = args.ok_streak {
        opts.switch.ok_streak_to_switch = n;
    }
    if let Some(t) = args.kf_wait_time {
        opts.health.kf_wait_time = t;
    }
    opts.validate().map_err(|e| match e {
        Error::InvalidInput(message) => Error::Config {
            key: "params".into(),
            message,
        },
        other => other,
    })?;
    Ok(opts)
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let opts = run_options(&args)?;
    let data = read_streams(&args.streams)?;
    let out = run_estimator(&data, &opts)?;
    fs::create_dir_all(&args.out)?;
    let stem = opts.estimator.as_str();
    write_trajectory(&out.trajectory, create(&args.out.join(format!("{stem}.tum")))?)?;
    write_modes(&out.mode_tags(), create(&args.out.join(format!("{stem}.modes")))?)?;
    write_switch_log(&out.switch_log, create(&args.out.join(format!("{stem}.switches")))?)?;
    if let Some(graph) = &out.graph {
        write_graph(graph, create(&args.out.join(format!("{stem}.g2o")))?)?;
    }
    let report = evaluate(&data, &out, true)?;
    write_metrics(&report, create(&args.out.join(format!("{stem}.metrics.json")))?)?;
    eprintln!(
        "{stem}: rmse {:.3} m over {:.1} m, {} switches, {} loop closures",
        report.rmse_ate_m, report.trajectory_length_m, report.n_switches, report.n_loop_closures
    );
    Ok(())
}

fn mode_summary(path: &Path) -> Result<(usize, ModeDurations), Error> {
    let modes = read_modes(open(path)?)?;
    let switches = modes.windows(2).filter(|w| w[0].1 != w[1].1).count();
    let mut d = ModeDurations::default();
    for w in modes.windows(2) {
        match w[0].1.as_str() {
            "vio" => d.vio += w[1].0 - w[0].0,
            "pe" => d.pe += w[1].0 - w[0].0,
            other => return Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
    Ok((switches, d))
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    if !args.aggregate.is_empty() {
        let runs = args
            .aggregate
            .iter()
            .map(|p| read_metrics::<MetricsReport, _>(open(p)?))
            .collect::<Result<Vec<_>, _>>()?;
        return write_metrics(&aggregate(&runs)?, sink);
    }
    let (Some(est), Some(reference)) = (&args.est, &args.reference) else {
        return Err(Error::Config {
            key: "est".into(),
            message: "pass --est and --ref, or --aggregate".into(),
        });
    };
    let est_traj = read_trajectory(open(est)?)?;
    let ref_traj = read_trajectory(open(reference)?)?;
    let (n_switches, mode_durations_s) = match &args.modes {
        Some(path) => mode_summary(path)?,
        None => (0, ModeDurations::default()),
    };
    let aligned = !args.no_align;
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        scenario: args.scenario_name,
        schedule_id: args.schedule_id,
        estimator: args.estimator,
        seed: args.seed,
        aligned,
        rmse_ate_m: geometry::rmse_ate(&est_traj, &ref_traj, aligned, geometry::DEFAULT_MAX_GAP)?,
        trajectory_length_m: ref_traj.path_length(),
        n_switches,
        n_loop_closures: 0,
        mode_durations_s,
    };
    write_metrics(&report, sink)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
