//! SWF and CSV trace readers, plus the CSV writer.
//!
//! SWF (Standard Workload Format) lines carry 18 whitespace separated fields;
//! `;` starts a header comment. Processors map 1:1 to nodes. The CSV format
//! is `id,arrival,nodes,walltime,runtime` with that exact header.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::debug;

use super::Workload;
use crate::error::{Error, Result};
use crate::model::{Job, Source};

pub const CSV_HEADER: [&str; 5] = ["id", "arrival", "nodes", "walltime", "runtime"];
const SWF_FIELDS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Swf,
    Csv,
}

impl TraceFormat {
    /// Guesses from the file extension; anything but `.csv` is read as SWF.
    pub fn from_path(path: &Path) -> TraceFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::Swf,
        }
    }
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swf" => Ok(TraceFormat::Swf),
            "csv" => Ok(TraceFormat::Csv),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub workload: Workload,
    /// Records rejected for missing fields or non-positive sizes/times.
    pub dropped: usize,
    /// SWF records without a requested time, given their run time as walltime.
    pub walltime_defaulted: usize,
}

pub fn parse_trace(path: &Path, format: TraceFormat, source: Source) -> Result<LoadedTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(source.as_str())
        .to_string();
    parse_trace_named(&text, format, source, &label, path.to_path_buf())
}

/// Parses trace text held in memory. `label` names the workload.
pub fn parse_trace_str(text: &str, format: TraceFormat, source: Source, label: &str) -> Result<LoadedTrace> {
    parse_trace_named(text, format, source, label, PathBuf::from(label))
}

fn parse_trace_named(
    text: &str,
    format: TraceFormat,
    source: Source,
    label: &str,
    path: PathBuf,
) -> Result<LoadedTrace> {
    let (jobs, mut dropped, walltime_defaulted) = match format {
        TraceFormat::Swf => parse_swf(text, source),
        TraceFormat::Csv => parse_csv(text, source, &path)?,
    };
    let parsed = jobs.len();
    let workload = Workload::new(label, jobs);
    dropped += parsed - workload.len();
    if workload.is_empty() {
        return Err(Error::EmptyTrace { path, dropped });
    }
    debug!("{}: {} jobs, {} dropped", label, workload.len(), dropped);
    Ok(LoadedTrace {
        workload,
        dropped,
        walltime_defaulted,
    })
}

fn swf_int(field: &str) -> Option<i64> {
    field
        .parse::<i64>()
        .ok()
        .or_else(|| field.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v as i64))
}

fn parse_swf(text: &str, source: Source) -> (Vec<Job>, usize, usize) {
    let mut jobs = Vec::new();
    let mut dropped = 0;
    let mut defaulted = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < SWF_FIELDS {
            dropped += 1;
            continue;
        }
        let get = |i: usize| swf_int(fields[i - 1]).unwrap_or(-1);
        let id = get(1);
        let submit = get(2);
        let run = get(4);
        let nodes = if get(8) > 0 { get(8) } else { get(5) };
        let mut walltime = get(9);
        if id < 0 || submit < 0 || run <= 0 || nodes <= 0 || nodes > u32::MAX as i64 {
            dropped += 1;
            continue;
        }
        if walltime <= 0 {
            walltime = run;
            defaulted += 1;
        }
        jobs.push(Job::new(
            id as u64,
            submit as u64,
            nodes as u32,
            walltime as u64,
            run as u64,
            source,
        ));
    }
    (jobs, dropped, defaulted)
}

fn parse_csv(text: &str, source: Source, path: &Path) -> Result<(Vec<Job>, usize, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut jobs = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let Ok(record) = record else {
            dropped += 1;
            continue;
        };
        let nums: Option<Vec<u64>> = (0..5)
            .map(|i| record.get(i).and_then(|f| f.parse::<u64>().ok()))
            .collect();
        let job = nums.and_then(|v| {
            let nodes = u32::try_from(v[2]).ok()?;
            Some(Job::new(v[0], v[1], nodes, v[3], v[4], source))
        });
        match job {
            Some(job) if record.len() == 5 && job.is_valid() => jobs.push(job),
            _ => dropped += 1,
        }
    }
    Ok((jobs, dropped, 0))
}

/// Writes a workload in the CSV trace format.
pub fn write_csv<W: Write>(w: &Workload, out: W) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for j in w.jobs() {
        writer.write_record([
            j.id.to_string(),
            j.arrival_time.to_string(),
            j.requested_nodes.to_string(),
            j.requested_walltime.to_string(),
            j.actual_runtime.to_string(),
        ])?;
    }
    writer.flush()
}
