//! On-disk artifacts of a run: `summary.json`, `trace.{csv,json}` and
//! `trajectory.{csv,json}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_pmp::integrator::{IntervalTrack, TrajectoryRecord};
use sparse_pmp::pmp::{hamiltonian, AdjointState};
use sparse_pmp::problem::ProblemSpec;
use sparse_pmp::solver::{SolverTrace, TraceEntry};
use sparse_pmp::Vector;

use crate::{CliError, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

const TRACE_COLUMNS: [&str; 6] = ["iter", "phase", "k", "phi_norm", "step", "elapsed"];

/// Trajectory samples, one row per integration node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| parse_err(path, e))?;
    w.flush().map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| parse_err(path, e))
}

/// `dir/stem.csv` or `dir/stem.json`, whichever exists.
pub fn find(dir: &Path, stem: &str) -> Result<PathBuf, CliError> {
    for ext in ["csv", "json"] {
        let path = dir.join(format!("{stem}.{ext}"));
        if path.is_file() {
            return Ok(path);
        }
    }
    Err(CliError::Io {
        path: dir.join(format!("{stem}.csv")),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no csv or json file"),
    })
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    write_json(&dir.join("summary.json"), summary)
}

pub fn read_summary(dir: &Path) -> Result<Summary, CliError> {
    read_json(&dir.join("summary.json"))
}

pub fn write_trace(dir: &Path, trace: &SolverTrace, format: Format) -> Result<(), CliError> {
    let path = dir.join(format!("trace.{}", format.extension()));
    match format {
        Format::Json => write_json(&path, trace),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(&path)?);
            let csv_err = |e: csv::Error| parse_err(&path, e);
            // Written by hand so an empty trace still gets a header.
            w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
            for entry in &trace.entries {
                w.serialize(entry).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))
        }
    }
}

/// CSV traces carry the entries only; the counters are rebuilt from them.
pub fn read_trace(path: &Path) -> Result<SolverTrace, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(path);
    }
    let mut r = csv::Reader::from_reader(open(path)?);
    let entries = r
        .deserialize::<TraceEntry>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| parse_err(path, e))?;
    let count = |phase| entries.iter().filter(|e| e.phase == phase).count();
    Ok(SolverTrace {
        sa_iterations: count(sparse_pmp::solver::Phase::Sa),
        nr_iterations: count(sparse_pmp::solver::Phase::Newton),
        entries,
        ..Default::default()
    })
}

fn trajectory_columns(d: usize, r: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..=d).map(|i| format!("x{i}")));
    cols.extend((0..=d).map(|i| format!("p{i}")));
    cols.push("p_rho".into());
    cols.extend((1..=r).map(|i| format!("u{i}")));
    cols.push("H".into());
    cols
}

/// Rows of the trajectory. Each interval contributes one row per node; the
/// last row repeats the interval's final control.
pub fn trajectory_table(problem: &ProblemSpec, record: &TrajectoryRecord, eta: f64) -> TrajectoryTable {
    let (d, r) = (problem.dim_state(), problem.dim_control());
    let mut rows = Vec::new();
    for iv in &record.intervals {
        for (j, t) in iv.times.iter().enumerate() {
            let u = &iv.controls[j.min(iv.controls.len() - 1)];
            let (x, p) = (&iv.states[j], &iv.costates[j]);
            let mut row = vec![*t];
            row.extend(x.iter());
            row.extend(p.to_vector().iter());
            row.extend(u.iter());
            row.push(hamiltonian(problem, p, *t, x.as_slice(), u.as_slice(), eta));
            rows.push(row);
        }
    }
    TrajectoryTable { columns: trajectory_columns(d, r), rows }
}

pub fn write_trajectory(
    dir: &Path,
    problem: &ProblemSpec,
    record: &TrajectoryRecord,
    eta: f64,
    format: Format,
) -> Result<(), CliError> {
    let table = trajectory_table(problem, record, eta);
    let path = dir.join(format!("trajectory.{}", format.extension()));
    match format {
        Format::Json => write_json(&path, &table),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(create(&path)?);
            let csv_err = |e: csv::Error| parse_err(&path, e);
            w.write_record(&table.columns).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))
        }
    }
}

fn read_table(path: &Path) -> Result<TrajectoryTable, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(path);
    }
    let mut r = csv::Reader::from_reader(open(path)?);
    let columns = r.headers().map_err(|e| parse_err(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let row = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
        rows.push(row.map_err(|e| parse_err(path, e))?);
    }
    Ok(TrajectoryTable { columns, rows })
}

/// Rebuilds a trajectory record from a table. Rows are split into intervals
/// at the instants `times`; a row at an interior instant closes the current
/// interval and the next row with the same time opens the following one.
/// Nodes where the control changes are marked as switches.
pub fn read_trajectory(path: &Path, problem: &ProblemSpec, times: &[f64]) -> Result<TrajectoryRecord, CliError> {
    let table = read_table(path)?;
    let (d, r) = (problem.dim_state(), problem.dim_control());
    let expected = trajectory_columns(d, r);
    if table.columns != expected {
        return Err(parse_err(path, format!("expected columns {expected:?}")));
    }
    if table.rows.iter().any(|row| row.len() != expected.len()) {
        return Err(parse_err(path, "ragged row"));
    }
    let nu = times.len().saturating_sub(1);
    let mut intervals: Vec<Vec<&Vec<f64>>> = vec![Vec::new()];
    for row in &table.rows {
        let k = intervals.len();
        let current = intervals.last_mut().unwrap();
        current.push(row);
        if k < nu && current.len() > 1 && row[0] == times[k] {
            intervals.push(Vec::new());
        }
    }
    if intervals.len() != nu || intervals.iter().any(|iv| iv.len() < 2) {
        return Err(parse_err(path, format!("rows do not split into {nu} intervals at {times:?}")));
    }
    let tracks = intervals
        .into_iter()
        .map(|rows| {
            let times = rows.iter().map(|row| row[0]).collect();
            let states = rows.iter().map(|row| Vector::from_column_slice(&row[1..d + 2])).collect();
            let costates = rows.iter().map(|row| AdjointState::from_slice(&row[d + 2..2 * d + 4])).collect();
            let controls: Vec<Vector> =
                rows[..rows.len() - 1].iter().map(|row| Vector::from_column_slice(&row[2 * d + 4..2 * d + 4 + r])).collect();
            let switch_nodes = (1..controls.len()).filter(|&j| controls[j] != controls[j - 1]).collect();
            IntervalTrack { times, states, costates, controls, switch_nodes }
        })
        .collect();
    Ok(TrajectoryRecord { intervals: tracks, jumps: Vec::new() })
}
