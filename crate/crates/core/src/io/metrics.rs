use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeDurations {
    pub vio: f64,
    pub pe: f64,
}

/// Score of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub schedule_id: String,
    pub estimator: String,
    pub seed: u64,
    pub aligned: bool,
    pub rmse_ate_m: f64,
    /// Path length of the reference trajectory.
    pub trajectory_length_m: f64,
    pub n_switches: usize,
    pub n_loop_closures: usize,
    pub mode_durations_s: ModeDurations,
}

/// Mean and sample standard deviation over seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub scenario: String,
    pub schedule_id: String,
    pub estimator: String,
    pub seeds: Vec<u64>,
    pub trajectory_length_m: f64,
    pub rmse_mean_m: f64,
    pub rmse_sd_m: f64,
    pub runs: Vec<MetricsReport>,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        for (name, v) in [
            ("rmse_ate_m", self.rmse_ate_m),
            ("trajectory_length_m", self.trajectory_length_m),
            ("mode_durations_s.vio", self.mode_durations_s.vio),
            ("mode_durations_s.pe", self.mode_durations_s.pe),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }
}

impl AggregateReport {
    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        for (name, v) in [
            ("trajectory_length_m", self.trajectory_length_m),
            ("rmse_mean_m", self.rmse_mean_m),
            ("rmse_sd_m", self.rmse_sd_m),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        self.runs.iter().try_for_each(MetricsReport::validate)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("unsupported schema_version {v}")))
    }
}

/// Combines runs of one scenario, schedule and estimator.
pub fn aggregate(runs: &[MetricsReport]) -> Result<AggregateReport> {
    let first = runs.first().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    if runs.iter().any(|r| {
        r.scenario != first.scenario || r.schedule_id != first.schedule_id || r.estimator != first.estimator
    }) {
        return Err(Error::InvalidInput("aggregated runs must share scenario, schedule and estimator".into()));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.rmse_ate_m).sum::<f64>() / n;
    let sd = if runs.len() > 1 {
        (runs.iter().map(|r| (r.rmse_ate_m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let report = AggregateReport {
        schema_version: SCHEMA_VERSION,
        scenario: first.scenario.clone(),
        schedule_id: first.schedule_id.clone(),
        estimator: first.estimator.clone(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        trajectory_length_m: runs.iter().map(|r| r.trajectory_length_m).sum::<f64>() / n,
        rmse_mean_m: mean,
        rmse_sd_m: sd,
        runs: runs.to_vec(),
    };
    report.validate()?;
    Ok(report)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let rounded: f64 = format!("{x:.9}").parse().unwrap_or(x);
            let rounded = if rounded == 0.0 { 0.0 } else { rounded };
            if let Some(num) = serde_json::Number::from_f64(rounded) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Checks the shape of a metrics document: a single-run report or an
/// aggregate, with every required key present and typed.
pub fn validate_document(doc: &Value) -> Result<()> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::InvalidInput("metrics document must be an object".into()))?;
    let is_aggregate = obj.contains_key("runs");
    let required: &[(&str, fn(&Value) -> bool)] = if is_aggregate {
        &[
            ("schema_version", Value::is_u64),
            ("scenario", Value::is_string),
            ("schedule_id", Value::is_string),
            ("estimator", Value::is_string),
            ("seeds", Value::is_array),
            ("trajectory_length_m", Value::is_number),
            ("rmse_mean_m", Value::is_number),
            ("rmse_sd_m", Value::is_number),
            ("runs", Value::is_array),
        ]
    } else {
        &[
            ("schema_version", Value::is_u64),
            ("scenario", Value::is_string),
            ("schedule_id", Value::is_string),
            ("estimator", Value::is_string),
            ("seed", Value::is_u64),
            ("aligned", Value::is_boolean),
            ("rmse_ate_m", Value::is_number),
            ("trajectory_length_m", Value::is_number),
            ("n_switches", Value::is_u64),
            ("n_loop_closures", Value::is_u64),
            ("mode_durations_s", Value::is_object),
        ]
    };
    for (key, check) in required {
        match obj.get(*key) {
            Some(v) if check(v) => {}
            Some(_) => return Err(Error::InvalidInput(format!("metrics field `{key}` has the wrong type"))),
            None => return Err(Error::InvalidInput(format!("metrics field `{key}` is missing"))),
        }
    }
    if obj["schema_version"].as_u64() != Some(SCHEMA_VERSION as u64) {
        return Err(Error::InvalidInput("unsupported schema_version".into()));
    }
    if is_aggregate {
        obj["runs"].as_array().into_iter().flatten().try_for_each(validate_document)?;
    }
    Ok(())
}

/// Validates, rounds reals to 9 decimals and writes pretty JSON with a
/// stable key order.
pub fn write_metrics<T: Serialize, W: Write>(report: &T, mut out: W) -> Result<()> {
    let mut value = serde_json::to_value(report)?;
    if let Some(name) = first_non_finite(&value, "") {
        return Err(Error::NonFinite(name));
    }
    validate_document(&value)?;
    round_floats(&mut value);
    // serde_json maps are ordered by key
    serde_json::to_writer_pretty(&mut out, &value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// serde_json turns NaN and infinities into `null`; those are the only nulls
/// a report can contain.
fn first_non_finite(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Null => Some(path.to_string()),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, x)| first_non_finite(x, &format!("{path}[{i}]"))),
        Value::Object(map) => map.iter().find_map(|(k, x)| {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            first_non_finite(x, &p)
        }),
        _ => None,
    }
}

pub fn read_metrics<T: serde::de::DeserializeOwned, R: Read>(input: R) -> Result<T> {
    let value: Value = serde_json::from_reader(input)?;
    validate_document(&value)?;
    Ok(serde_json::from_value(value)?)
}
