//! CSV and JSON output.
//!
//! Column layouts (header row first, floats as 17 significant digits):
//!
//! - samples: `replica,time,X_1,...,X_n`, one row per replica and grid time,
//!   replicas in index order;
//! - events: `time,reaction,X_1,...,X_n` with `reaction` the 0-based index
//!   `j` of the species that gained an individual (from species `j + 1`);
//! - mean field: `time,u_1,...,u_n,sum,product`;
//! - covariance: `time,s_1_1,s_1_2,...,s_n_n` (row-major);
//! - limit paths: `replica,time,V_1,...,V_n`.
//!
//! An ensemble directory holds `samples.csv`, `manifest.json` and, when
//! requested, `events_<replica>.csv` per replica.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuation::{CovarianceState, GaussianPath};
use crate::meanfield::MeanFieldPath;
use crate::model::{JumpEvent, ModelSpec, Trajectory};
use crate::simulate::Ensemble;

pub const FORMAT_VERSION: u32 = 1;

/// Round-trip float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad float {s:?}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad integer {s:?}")))
}

fn header(lead: &[&str], prefix: &str, n: usize, tail: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|i| format!("{prefix}_{i}")))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

fn samples_header(n: usize) -> Vec<String> {
    header(&["replica", "time"], "X", n, &[])
}

fn events_header(n: usize) -> Vec<String> {
    header(&["time", "reaction"], "X", n, &[])
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => Error::Parse(format!("{kind:?}")),
    }
}

/// Writes a header and rows, flushing at the end.
fn write_table<W: Write, I>(out: W, head: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(head).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads all data rows after checking the header.
fn read_table<R: Read>(input: R, expected: &[String]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let head = r.headers().map_err(csv_err)?;
    if !head.iter().eq(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!("unexpected header {head:?}, wanted {expected:?}")));
    }
    r.records().map(|rec| rec.map_err(csv_err)).collect()
}

pub fn write_samples_csv<W: Write>(out: W, ensemble: &Ensemble) -> Result<()> {
    let rows = ensemble.trajectories.iter().flat_map(|traj| {
        traj.grid.iter().zip(&traj.samples).map(move |(t, counts)| {
            [traj.replica.to_string(), fmt_f64(*t)]
                .into_iter()
                .chain(counts.iter().map(u64::to_string))
                .collect()
        })
    });
    write_table(out, &samples_header(ensemble.spec.n), rows)
}

pub fn write_events_csv<W: Write>(out: W, n: usize, events: &[JumpEvent]) -> Result<()> {
    let rows = events.iter().map(|ev| {
        [fmt_f64(ev.time), ev.reaction.to_string()]
            .into_iter()
            .chain(ev.counts_after.iter().map(u64::to_string))
            .collect()
    });
    write_table(out, &events_header(n), rows)
}

pub fn read_events_csv<R: Read>(input: R, n: usize) -> Result<Vec<JumpEvent>> {
    read_table(input, &events_header(n))?
        .iter()
        .map(|row| {
            Ok(JumpEvent {
                time: parse_f64(&row[0])?,
                reaction: parse_u64(&row[1])? as usize,
                counts_after: row.iter().skip(2).map(parse_u64).collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionStats {
    pub absorbed: usize,
    pub mean_time: Option<f64>,
    pub min_time: Option<f64>,
    pub max_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEntry {
    pub replica: u64,
    pub seed: Option<u64>,
    pub absorbed: Option<f64>,
    pub final_internal_times: Vec<f64>,
    pub final_event_counts: Vec<u64>,
    pub events_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub base_seed: u64,
    pub replicas: usize,
    pub t_end: Option<f64>,
    pub grid: Vec<f64>,
    pub columns: Vec<String>,
    pub absorption: AbsorptionStats,
    pub trajectories: Vec<ReplicaEntry>,
}

fn events_file_name(replica: u64) -> String {
    format!("events_{replica}.csv")
}

impl Manifest {
    pub fn for_ensemble(ensemble: &Ensemble, with_events: bool) -> Self {
        let times: Vec<f64> = ensemble.trajectories.iter().filter_map(|t| t.absorbed).collect();
        let absorption = AbsorptionStats {
            absorbed: times.len(),
            mean_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            min_time: times.iter().copied().reduce(f64::min),
            max_time: times.iter().copied().reduce(f64::max),
        };
        Manifest {
            format_version: FORMAT_VERSION,
            spec: ensemble.spec.clone(),
            base_seed: ensemble.base_seed,
            replicas: ensemble.len(),
            t_end: ensemble.t_end,
            grid: ensemble.grid.clone(),
            columns: samples_header(ensemble.spec.n),
            absorption,
            trajectories: ensemble
                .trajectories
                .iter()
                .map(|t| ReplicaEntry {
                    replica: t.replica,
                    seed: t.seed,
                    absorbed: t.absorbed,
                    final_internal_times: t.final_internal_times.clone(),
                    final_event_counts: t.final_event_counts.clone(),
                    events_file: (with_events && t.events.is_some()).then(|| events_file_name(t.replica)),
                })
                .collect(),
        }
    }
}

/// Writes `samples.csv`, `manifest.json` and optionally per-replica event
/// files into `dir` (created if missing).
pub fn write_ensemble_dir(dir: &Path, ensemble: &Ensemble, with_events: bool) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    write_samples_csv(File::create(dir.join("samples.csv"))?, ensemble)?;
    let manifest = Manifest::for_ensemble(ensemble, with_events);
    for (traj, entry) in ensemble.trajectories.iter().zip(&manifest.trajectories) {
        if let (Some(name), Some(events)) = (&entry.events_file, &traj.events) {
            write_events_csv(File::create(dir.join(name))?, ensemble.spec.n, events)?;
        }
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads back a directory written by [`write_ensemble_dir`].
pub fn read_ensemble_dir(dir: &Path) -> Result<Ensemble> {
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
    let n = manifest.spec.n;
    let rows = read_table(BufReader::new(File::open(dir.join("samples.csv"))?), &samples_header(n))?;
    let per_replica = manifest.grid.len();
    if rows.len() != per_replica * manifest.replicas {
        return Err(Error::Parse(format!(
            "{} sample rows for {} replicas x {} grid times",
            rows.len(),
            manifest.replicas,
            per_replica
        )));
    }
    let mut trajectories = Vec::with_capacity(manifest.replicas);
    for (entry, chunk) in manifest.trajectories.iter().zip(rows.chunks(per_replica.max(1))) {
        let mut samples = Vec::with_capacity(per_replica);
        for (row, g) in chunk.iter().zip(&manifest.grid) {
            if parse_u64(&row[0])? != entry.replica || parse_f64(&row[1])?.to_bits() != g.to_bits() {
                return Err(Error::Parse(format!("sample row {row:?} does not match the manifest")));
            }
            samples.push(row.iter().skip(2).map(parse_u64).collect::<Result<Vec<_>>>()?);
        }
        let events = match &entry.events_file {
            Some(name) => Some(read_events_csv(BufReader::new(File::open(dir.join(name))?), n)?),
            None => None,
        };
        trajectories.push(Trajectory {
            spec: manifest.spec.clone(),
            seed: entry.seed,
            replica: entry.replica,
            events,
            grid: manifest.grid.clone(),
            samples,
            absorbed: entry.absorbed,
            t_end: manifest.t_end,
            final_internal_times: entry.final_internal_times.clone(),
            final_event_counts: entry.final_event_counts.clone(),
        });
    }
    Ok(Ensemble {
        spec: manifest.spec,
        base_seed: manifest.base_seed,
        t_end: manifest.t_end,
        grid: manifest.grid,
        trajectories,
    })
}

pub fn write_meanfield_csv<W: Write>(out: W, path: &MeanFieldPath) -> Result<()> {
    let n = path.initial.len();
    let rows = path.states.iter().zip(&path.invariant_audit).map(|(state, audit)| {
        std::iter::once(state.time)
            .chain(state.u.iter().copied())
            .chain([audit.sum, audit.product])
            .map(fmt_f64)
            .collect()
    });
    write_table(out, &header(&["time"], "u", n, &["sum", "product"]), rows)
}

pub fn write_covariance_csv<W: Write>(out: W, states: &[CovarianceState]) -> Result<()> {
    let n = states.first().map_or(0, |s| s.sigma.nrows());
    let head: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=n).flat_map(|i| (1..=n).map(move |j| format!("s_{i}_{j}"))))
        .collect();
    let rows = states.iter().map(|s| {
        std::iter::once(s.time)
            .chain(s.sigma.transpose().iter().copied())
            .map(fmt_f64)
            .collect()
    });
    write_table(out, &head, rows)
}

pub fn write_gaussian_paths_csv<W: Write>(out: W, paths: &[GaussianPath]) -> Result<()> {
    let n = paths.first().and_then(|p| p.values.first()).map_or(0, Vec::len);
    let rows = paths.iter().flat_map(|p| {
        p.grid.iter().zip(&p.values).map(move |(t, v)| {
            [p.replica.to_string(), fmt_f64(*t)]
                .into_iter()
                .chain(v.iter().copied().map(fmt_f64))
                .collect()
        })
    });
    write_table(out, &header(&["replica", "time"], "V", n, &[]), rows)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
