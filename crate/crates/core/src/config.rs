//! Experiment configuration files and trace sources.
//!
//! A config is a TOML file; every field is optional so that command-line
//! flags can fill in or override any of it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::MetricWindow;
use crate::model::{Nodes, Source, Time};
use crate::policy::PolicyKind;
use crate::workload::{parse_trace, synthesize, Bins, InjectionPreset, JobFilter, SynthPreset, TraceFormat, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Characterize,
    Simulate,
    Fuse,
    Inject,
    Synth,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub total_nodes: Option<Nodes>,
    pub min_alloc: Option<Nodes>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// `W1` .. `W6`.
    pub preset: Option<String>,
    pub max_nodes: Option<Nodes>,
    /// Seconds.
    pub max_runtime: Option<Time>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsConfig {
    pub capability_sizes: Option<Bins>,
    pub capacity_sizes: Option<Bins>,
    pub characterize_sizes: Option<Bins>,
    pub runtimes: Option<Bins>,
}

/// Where a workload comes from: a trace file or a synthetic preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub path: Option<PathBuf>,
    /// `swf` or `csv`; inferred from the extension when absent.
    pub format: Option<String>,
    /// `capability-like` or `capacity-like`.
    pub preset: Option<String>,
    /// Synthetic job count. Takes precedence over `days`.
    pub count: Option<usize>,
    pub days: Option<f64>,
    pub seed: Option<u64>,
    /// Tag applied to the jobs of a trace file.
    pub source: Option<String>,
}

/// Accepts a file path or `synth:<preset>[:<count>|:<days>d][@<seed>]`.
impl FromStr for TraceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("synth:") else {
            return Ok(TraceSpec {
                path: Some(PathBuf::from(s)),
                ..TraceSpec::default()
            });
        };
        let (body, seed) = match rest.split_once('@') {
            Some((b, seed)) => (
                b,
                Some(seed.parse().map_err(|_| Error::Config(format!("bad seed in `{s}`")))?),
            ),
            None => (rest, None),
        };
        let mut parts = body.split(':');
        let preset = parts.next().unwrap_or_default().to_string();
        let mut spec = TraceSpec {
            preset: Some(preset),
            seed,
            ..TraceSpec::default()
        };
        if let Some(amount) = parts.next() {
            let bad = || Error::Config(format!("bad job count or duration in `{s}`"));
            if let Some(days) = amount.strip_suffix('d') {
                spec.days = Some(days.parse().map_err(|_| bad())?);
            } else {
                spec.count = Some(amount.parse().map_err(|_| bad())?);
            }
        }
        if parts.next().is_some() {
            return Err(Error::Config(format!("too many fields in `{s}`")));
        }
        Ok(spec)
    }
}

impl fmt::Display for TraceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, &self.preset) {
            (Some(p), _) => write!(f, "{}", p.display()),
            (None, Some(preset)) => write!(f, "synth:{preset}"),
            (None, None) => write!(f, "<empty trace spec>"),
        }
    }
}

pub fn parse_source(s: &str) -> Result<Source> {
    match s.to_ascii_lowercase().as_str() {
        "capability" => Ok(Source::Capability),
        "capacity" => Ok(Source::Capacity),
        _ => Err(Error::Config(format!(
            "unknown source `{s}` (expected capability or capacity)"
        ))),
    }
}

/// A workload plus any non-fatal notes produced while loading it.
#[derive(Debug, Clone)]
pub struct LoadedWorkload {
    pub workload: Workload,
    pub warnings: Vec<String>,
}

impl TraceSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.path, &self.preset) {
            (Some(_), Some(_)) => Err(Error::Config(format!("`{self}` sets both a path and a preset"))),
            (None, None) => Err(Error::Config("trace needs a path or a preset".into())),
            (Some(p), None) if !p.exists() => Err(Error::Config(format!("trace {} does not exist", p.display()))),
            (None, Some(p)) => p.parse::<SynthPreset>().map(|_| ()),
            _ => Ok(()),
        }
    }

    fn resolve_relative(&mut self, base: &Path) {
        if let Some(p) = &self.path {
            if p.is_relative() {
                self.path = Some(base.join(p));
            }
        }
    }

    /// Loads or generates the workload. `default_source` tags trace files
    /// without an explicit `source`; `default_seed` seeds presets without one.
    pub fn load(&self, default_source: Source, default_seed: u64) -> Result<LoadedWorkload> {
        self.validate()?;
        if let Some(path) = &self.path {
            let format = match &self.format {
                Some(f) => f.parse()?,
                None => TraceFormat::from_path(path),
            };
            let source = self
                .source
                .as_deref()
                .map(parse_source)
                .transpose()?
                .unwrap_or(default_source);
            let loaded = parse_trace(path, format, source)?;
            let mut warnings = Vec::new();
            if loaded.dropped > 0 {
                warnings.push(format!(
                    "{}: dropped {} invalid record(s)",
                    path.display(),
                    loaded.dropped
                ));
            }
            if loaded.walltime_defaulted > 0 {
                warnings.push(format!(
                    "{}: {} record(s) had no requested time; run time used as walltime",
                    path.display(),
                    loaded.walltime_defaulted
                ));
            }
            return Ok(LoadedWorkload {
                workload: loaded.workload,
                warnings,
            });
        }
        let preset: SynthPreset = self.preset.as_deref().unwrap_or_default().parse()?;
        let count = match (self.count, self.days) {
            (Some(n), _) => n,
            (None, Some(d)) => preset.jobs_for_days(d),
            (None, None) => preset.yearly_jobs(),
        };
        let workload = synthesize(&preset.spec(count, self.seed.unwrap_or(default_seed)))?;
        Ok(LoadedWorkload {
            workload,
            warnings: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub machine: MachineConfig,
    pub policy: Option<PolicyKind>,
    /// Traces for `characterize` and `simulate`.
    #[serde(default, rename = "trace")]
    pub traces: Vec<TraceSpec>,
    pub capability: Option<TraceSpec>,
    pub capacity: Option<TraceSpec>,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Percent of the unified machine for each fusion run.
    #[serde(default)]
    pub fractions: Vec<f64>,
    pub bucket: Option<Time>,
    pub window: Option<MetricWindow>,
    #[serde(default)]
    pub bins: BinsConfig,
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub baseline_only: bool,
    /// Round capability-sourced jobs to this size during fusion.
    pub capability_min_alloc: Option<Nodes>,
    pub resort_tick: Option<Time>,
    pub backfill: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative trace and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for t in cfg
            .traces
            .iter_mut()
            .chain(cfg.capability.iter_mut())
            .chain(cfg.capacity.iter_mut())
        {
            t.resolve_relative(base);
        }
        if let Some(out) = &cfg.out {
            if out.is_relative() {
                cfg.out = Some(base.join(out));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.traces.iter().chain(&self.capability).chain(&self.capacity) {
            t.validate()?;
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f <= 100.0) {
                return Err(Error::InvalidFraction(f));
            }
        }
        if self.bucket == Some(0) {
            return Err(Error::Config("bucket width must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.injection_filter().map(|_| ())
    }

    /// The injection filter: a named preset, explicit thresholds, or both
    /// (thresholds override the preset's). `None` if nothing is set.
    pub fn injection_filter(&self) -> Result<Option<JobFilter>> {
        let mut filter = match &self.filter.preset {
            Some(p) => Some(p.parse::<InjectionPreset>()?.filter()),
            None => None,
        };
        if self.filter.max_nodes.is_some() || self.filter.max_runtime.is_some() {
            let f = filter.get_or_insert_with(JobFilter::default);
            if self.filter.max_nodes.is_some() {
                f.max_nodes = self.filter.max_nodes;
            }
            if self.filter.max_runtime.is_some() {
                f.max_runtime = self.filter.max_runtime;
            }
        }
        Ok(filter)
    }
}
