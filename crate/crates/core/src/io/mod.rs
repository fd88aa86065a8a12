//! Text and JSON persistence: trajectories, per-sample mode tags, simulator
//! streams and metrics reports.
//!
//! Timestamps are written with 6 decimals and every other real with 9, with
//! trailing zeros dropped. Output is fully deterministic.

mod metrics;
mod streams;
mod tum;

pub use metrics::{
    aggregate, read_metrics, validate_document, write_metrics, AggregateReport, MetricsReport,
    ModeDurations, SCHEMA_VERSION,
};
pub use streams::{
    read_modes, read_streams, write_modes, write_streams, write_switch_log, StreamFiles,
};
pub use tum::{read_trajectory, render_sample, write_trajectory, TUM_HEADER};

use crate::error::{Error, Result};

pub fn fmt_time(t: f64) -> String {
    let s = format!("{t:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn fmt_value(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

/// Whitespace-separated fields of one data line.
pub(crate) struct Tokens<'a> {
    pub line: usize,
    inner: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    /// `None` for blank and `#` comment lines.
    pub fn data_line(text: &'a str, line: usize) -> Option<Self> {
        let trimmed = text.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        Some(Self {
            line,
            inner: text.split_whitespace(),
        })
    }

    pub fn next_token(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| Error::parse(self.line, "", format!("missing {what}")))
    }

    pub fn float(&mut self, what: &str) -> Result<f64> {
        let tok = self.next_token(what)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::parse(self.line, tok, format!("bad {what}"))),
        }
    }

    pub fn uint(&mut self, what: &str) -> Result<u32> {
        let tok = self.next_token(what)?;
        tok.parse::<u32>()
            .map_err(|_| Error::parse(self.line, tok, format!("bad {what}")))
    }

    pub fn finish(mut self) -> Result<()> {
        match self.inner.next() {
            Some(extra) => Err(Error::parse(self.line, extra, "unexpected extra field")),
            None => Ok(()),
        }
    }
}
