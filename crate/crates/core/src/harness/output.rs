//! Run artifacts: CSV tables, binary snapshots, the JSON report and a plot
//! script.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::norms::ScalingCheck;

/// Column order of `timeseries.csv`. New columns are only ever appended.
pub const TIMESERIES_COLUMNS: [&str; 13] = [
    "step",
    "time",
    "surface_amplitude",
    "u_l2",
    "q_l2",
    "sigma_l2",
    "sigma_sup",
    "phi_l2",
    "window",
    "outer_iterations",
    "inner_iterations",
    "kappa",
    "residual_max",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeseriesRow {
    pub step: usize,
    pub time: f64,
    pub surface_amplitude: f64,
    pub u_l2: f64,
    pub q_l2: f64,
    pub sigma_l2: f64,
    pub sigma_sup: f64,
    pub phi_l2: f64,
    pub window: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub kappa: f64,
    pub residual_max: f64,
}

/// One acceptance line of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckLine {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: format!("{value:.3e} <= {threshold:.3e}"),
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail: format!("{value:.4} >= {threshold:.4}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub passed: bool,
    pub checks: Vec<CheckLine>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scaling: Vec<ScalingCheck>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.into(),
            passed: true,
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            scaling: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn check(&mut self, line: CheckLine) {
        self.passed &= line.passed;
        self.checks.push(line);
    }

    pub fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }
}

/// Output directory plus the list of files written so far.
pub struct Sink {
    pub dir: PathBuf,
    written: Vec<String>,
}

impl Sink {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn path(&mut self, rel: &str) -> std::io::Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(rel.to_string());
        Ok(p)
    }

    pub fn text(&mut self, rel: &str, body: &str) -> std::io::Result<()> {
        let p = self.path(rel)?;
        fs::write(p, body)
    }

    /// Writes serializable rows as CSV with a header row.
    pub fn csv<R: Serialize>(&mut self, rel: &str, rows: &[R], header: &[&str]) -> std::io::Result<()> {
        let p = self.path(rel)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(p)?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()
    }

    /// Row-major little-endian `f64` blocks after a plain-text header that
    /// ends with the line `end_header`.
    pub fn snapshot(
        &mut self,
        rel: &str,
        dims: (usize, usize),
        dt: f64,
        time: f64,
        fields: &[(&str, &[f64])],
    ) -> std::io::Result<()> {
        let p = self.path(rel)?;
        let mut f = std::io::BufWriter::new(fs::File::create(p)?);
        writeln!(f, "vefs-snapshot 1")?;
        writeln!(f, "dims {} {}", dims.0, dims.1)?;
        writeln!(f, "dt {dt:e}")?;
        writeln!(f, "time {time:e}")?;
        writeln!(f, "byte_order little-endian")?;
        writeln!(f, "dtype f64")?;
        for (name, data) in fields {
            writeln!(f, "field {name} {}", data.len())?;
        }
        writeln!(f, "end_header")?;
        for (_, data) in fields {
            for v in data.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()
    }

    pub fn finish(mut self, report: &mut RunReport) -> std::io::Result<()> {
        self.written.push("report.json".into());
        report.artifacts = self.written.clone();
        let body = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
        fs::write(self.dir.join("report.json"), body + "\n")
    }
}

/// A named field block of a snapshot.
pub type SnapshotField = (String, Vec<f64>);

/// Reads a snapshot back as `(header lines, fields)`.
pub fn read_snapshot(path: &Path) -> std::io::Result<(Vec<String>, Vec<SnapshotField>)> {
    let bytes = fs::read(path)?;
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| std::io::Error::other("missing end_header"))?;
    let header: Vec<String> = String::from_utf8_lossy(&bytes[..end]).lines().map(str::to_string).collect();
    let mut offset = end + marker.len();
    let mut fields = Vec::new();
    for line in &header {
        let mut parts = line.split_whitespace();
        if parts.next() != Some("field") {
            continue;
        }
        let name = parts.next().unwrap_or_default().to_string();
        let n: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
        let stop = offset + 8 * n;
        let block = bytes
            .get(offset..stop)
            .ok_or_else(|| std::io::Error::other("truncated snapshot"))?;
        let data = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        fields.push((name, data));
        offset = stop;
    }
    Ok((header, fields))
}

/// Matplotlib script that redraws the time series and scenario tables.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plots the CSV tables written next to this script."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def load(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return None
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def col(rows, key):
    return [float(r[key]) for r in rows]


def timeseries():
    rows = load("timeseries.csv")
    if not rows:
        return
    t = col(rows, "time")
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    axes[0, 0].plot(t, col(rows, "surface_amplitude"))
    axes[0, 0].set_title("surface amplitude")
    for key in ("u_l2", "q_l2", "sigma_l2", "phi_l2"):
        axes[0, 1].semilogy(t, [max(v, 1e-300) for v in col(rows, key)], label=key)
    axes[0, 1].legend()
    axes[0, 1].set_title("field norms")
    axes[1, 0].plot(t, col(rows, "outer_iterations"), drawstyle="steps-post")
    axes[1, 0].set_title("outer iterations per window")
    axes[1, 1].plot(t, col(rows, "kappa"), drawstyle="steps-post")
    axes[1, 1].set_title("contraction factor")
    for ax in axes.flat:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "timeseries.png"), dpi=120)


def convergence():
    rows = load("convergence.csv")
    if not rows:
        return
    n = col(rows, "n")
    fig, ax = plt.subplots()
    ax.loglog(n, col(rows, "error"), "o-", label="L2 velocity error")
    ax.loglog(n, [col(rows, "error")[0] * (n[0] / m) ** 2 for m in n], "--", label="order 2")
    ax.set_xlabel("n")
    ax.legend()
    fig.savefig(os.path.join(HERE, "convergence.png"), dpi=120)


def lemmas():
    rows = load("lemma.csv")
    if not rows:
        return
    fig, ax = plt.subplots()
    keys = sorted({(r["entry"], r["check"]) for r in rows})
    for entry, check in keys:
        sel = [r for r in rows if r["entry"] == entry and r["check"] == check]
        ax.loglog(col(sel, "horizon"), col(sel, "value"), ".-", label=f"{check} #{entry}")
    ax.set_xlabel("T")
    ax.legend(fontsize=6)
    fig.savefig(os.path.join(HERE, "lemma.png"), dpi=120)


def sweep():
    rows = load("sweep.csv")
    if not rows:
        return
    fig, ax = plt.subplots()
    for law in sorted({r["law"] for r in rows}):
        sel = [r for r in rows if r["law"] == law]
        ax.plot(col(sel, "iteration"), col(sel, "sigma_sup"), label=law)
    ax.set_xlabel("Picard iteration")
    ax.set_ylabel("sup |sigma|")
    ax.legend()
    fig.savefig(os.path.join(HERE, "sweep.png"), dpi=120)


if __name__ == "__main__":
    for fn in (timeseries, convergence, lemmas, sweep):
        fn()
    sys.exit(0)
"#;
