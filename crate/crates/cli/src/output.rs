//! Trace CSVs and their sidecars.
//!
//! `<stem>.csv` holds the deterministic per-slot columns, `<stem>.meta.json`
//! the run key and `<stem>.timing.csv` the solver wall times. Keeping wall
//! time out of the main file makes repeated runs byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vcache::trace::{MetricsTrace, SlotRecord};
use vcache::{Error, Result};

use crate::aggregate::{SummaryRow, TimingRow};
use crate::experiment::RunKey;

pub const TRACE_HEADER: [&str; 13] = [
    "slot",
    "value",
    "energy",
    "backlog",
    "backlog_next",
    "max_delay",
    "hit_ratio",
    "fitness",
    "requests",
    "served",
    "delay_violations",
    "infeasible",
    "optimal",
];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    slot: u64,
    value: f64,
    energy: f64,
    backlog: f64,
    backlog_next: f64,
    max_delay: f64,
    hit_ratio: Option<f64>,
    fitness: f64,
    requests: u64,
    served: u64,
    delay_violations: u32,
    infeasible: bool,
    optimal: bool,
}

impl From<&SlotRecord> for Row {
    fn from(r: &SlotRecord) -> Self {
        Row {
            slot: r.slot,
            value: r.value,
            energy: r.energy,
            backlog: r.backlog,
            backlog_next: r.backlog_next,
            max_delay: r.max_delay,
            hit_ratio: r.hit_ratio,
            fitness: r.fitness,
            requests: r.requests,
            served: r.served,
            delay_violations: r.delay_violations,
            infeasible: r.infeasible,
            optimal: r.optimal,
        }
    }
}

impl Row {
    fn into_record(self, wall_time_s: f64) -> SlotRecord {
        SlotRecord {
            slot: self.slot,
            value: self.value,
            energy: self.energy,
            backlog: self.backlog,
            backlog_next: self.backlog_next,
            max_delay: self.max_delay,
            hit_ratio: self.hit_ratio,
            fitness: self.fitness,
            requests: self.requests,
            served: self.served,
            delay_violations: self.delay_violations,
            infeasible: self.infeasible,
            optimal: self.optimal,
            wall_time_s,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SlotTiming {
    slot: u64,
    solver_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub solver: String,
    pub seed: u64,
    pub v_weight: f64,
    pub budget_j: f64,
    pub congestion: String,
    pub slots: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Creates `dir` if needed and checks that it accepts files.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &MetricsTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if trace.is_empty() {
        w.write_record(TRACE_HEADER).map_err(csv_err)?;
    }
    for r in &trace.records {
        w.serialize(Row::from(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn timing_path(trace_path: &Path) -> std::path::PathBuf {
    trace_path.with_extension("timing.csv")
}

pub fn write_timing(path: &Path, trace: &MetricsTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in &trace.records {
        w.serialize(SlotTiming { slot: r.slot, solver_wall_time_s: r.wall_time_s }).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV, filling wall times from the timing sidecar when present.
pub fn read_trace(path: &Path) -> Result<MetricsTrace> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let rows = rdr.deserialize::<Row>().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)?;
    let timing = timing_path(path);
    let times: Vec<f64> = if timing.exists() {
        let mut t = csv::Reader::from_path(&timing).map_err(csv_err)?;
        t.deserialize::<SlotTiming>()
            .map(|r| r.map(|r| r.solver_wall_time_s))
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?
    } else {
        vec![0.0; rows.len()]
    };
    if times.len() != rows.len() {
        return Err(Error::MixedHorizon(rows.len(), times.len()));
    }
    Ok(MetricsTrace { records: rows.into_iter().zip(times).map(|(r, t)| r.into_record(t)).collect() })
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `<stem>.csv`, `<stem>.meta.json` and `<stem>.timing.csv` into `dir`.
pub fn write_run(dir: &Path, key: &RunKey, trace: &MetricsTrace) -> Result<()> {
    let stem = key.stem();
    let csv_path = dir.join(format!("{stem}.csv"));
    write_trace(&csv_path, trace)?;
    write_timing(&timing_path(&csv_path), trace)?;
    let meta = RunMetadata {
        solver: key.solver.name().into(),
        seed: key.seed,
        v_weight: key.v_weight,
        budget_j: key.budget_j,
        congestion: key.congestion.name().into(),
        slots: trace.len(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join(format!("{stem}.meta.json")), text + "\n")?;
    Ok(())
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_timing_summary(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(path, rows)
}
