//! Experiment drivers shared by the CLI and the C interface: single runs,
//! fusion sweeps and injection comparisons, plus their report files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{downsize, simulate_with, SimOptions};
use crate::error::Result;
use crate::metrics::{
    node_seconds, rescued_resource, utilization_series, wait_stats, GroupSpec, MetricWindow, NodeSeconds,
    RescuedSeries, UtilizationSeries, UtilizationVariant, WaitStats, DAY,
};
use crate::model::{Machine, QueueClass, SimulationResult, Source, Time};
use crate::policy::PolicyKind;
use crate::workload::{filter_workload, merge_workloads, Bins, Characterization, Histogram, JobFilter, Workload};

/// The unified machine sizes examined by the fusion sweep, in percent.
pub const FUSION_FRACTIONS: [f64; 5] = [100.0, 95.0, 90.0, 85.0, 80.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub bucket: Time,
    pub window: MetricWindow,
    pub capability_size_bins: Bins,
    pub capacity_size_bins: Bins,
    pub runtime_bins: Bins,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            bucket: DAY,
            window: MetricWindow::Full,
            capability_size_bins: Bins::capability_sizes(),
            capacity_size_bins: Bins::capacity_sizes(),
            runtime_bins: Bins::runtimes(),
        }
    }
}

impl ReportConfig {
    fn size_bins(&self, source: Source) -> &Bins {
        match source {
            Source::Capability => &self.capability_size_bins,
            Source::Capacity => &self.capacity_size_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationSummary {
    /// Mean and sample deviation of the per-bucket series.
    pub allocated_mean: f64,
    pub allocated_std_dev: f64,
    pub effective_mean: f64,
    pub effective_std_dev: f64,
    /// Node-seconds busy over the whole window divided by capacity.
    pub allocated_overall: f64,
    pub effective_overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeHours {
    pub capacity: f64,
    pub allocated: f64,
    pub used: f64,
    pub idle: f64,
    pub rounding_waste: f64,
    pub default_queue: f64,
    pub injected: f64,
}

impl From<NodeSeconds> for NodeHours {
    fn from(ns: NodeSeconds) -> Self {
        let h = |v: u128| v as f64 / 3_600.0;
        NodeHours {
            capacity: h(ns.capacity),
            allocated: h(ns.allocated),
            used: h(ns.used),
            idle: h(ns.idle()),
            rounding_waste: h(ns.rounding_waste()),
            default_queue: h(ns.default_allocated),
            injected: h(ns.injected_allocated),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub machine: Machine,
    pub policy: PolicyKind,
    pub window: MetricWindow,
    pub bucket: Time,
    pub span_start: Time,
    pub span_end: Time,
    pub jobs: usize,
    pub injected_jobs: usize,
    pub unschedulable: usize,
    /// Largest number of nodes allocated at any instant.
    pub peak_allocated_nodes: u64,
    pub utilization: UtilizationSummary,
    pub node_hours: NodeHours,
    /// Overall wait per source, seconds.
    pub wait: Vec<WaitStats>,
    pub rescued_mean_percent: Option<f64>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn mean_wait(&self, source: Source) -> Option<f64> {
        self.wait.iter().find(|w| w.key.source == source).map(|w| w.mean)
    }
}

/// Everything reported for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub summary: RunSummary,
    pub allocated: UtilizationSeries,
    pub effective: UtilizationSeries,
    /// Per source, binned by size and runtime.
    pub wait_groups: Vec<WaitStats>,
    pub rescued: Option<RescuedSeries>,
}

pub fn analyze(
    result: &SimulationResult,
    label: &str,
    policy: PolicyKind,
    cfg: &ReportConfig,
    mut warnings: Vec<String>,
) -> RunReport {
    let allocated = utilization_series(result, cfg.bucket, UtilizationVariant::Allocated, cfg.window);
    let effective = utilization_series(result, cfg.bucket, UtilizationVariant::Effective, cfg.window);
    let ns = node_seconds(result, cfg.window);
    let injected_jobs = result
        .jobs
        .iter()
        .filter(|j| j.queue_class == QueueClass::Backfill)
        .count();
    let rescued = (injected_jobs > 0).then(|| rescued_resource(result, cfg.bucket, cfg.window));

    let wait = wait_stats(result, &GroupSpec::default());
    let mut wait_groups = Vec::new();
    for source in [Source::Capability, Source::Capacity] {
        wait_groups.extend(wait_stats(
            result,
            &GroupSpec {
                source: Some(source),
                queue_class: None,
                size_bins: Some(cfg.size_bins(source).clone()),
                runtime_bins: Some(cfg.runtime_bins.clone()),
            },
        ));
    }
    if !result.unschedulable.is_empty() {
        warnings.push(format!(
            "{} job(s) larger than the {}-node machine were skipped",
            result.unschedulable.len(),
            result.machine.total_nodes
        ));
    }

    let summary = RunSummary {
        label: label.to_string(),
        machine: result.machine,
        policy,
        window: cfg.window,
        bucket: cfg.bucket,
        span_start: result.span_start,
        span_end: result.span_end,
        jobs: result.jobs.len(),
        injected_jobs,
        unschedulable: result.unschedulable.len(),
        peak_allocated_nodes: result.peak_allocation(),
        utilization: UtilizationSummary {
            allocated_mean: allocated.mean(),
            allocated_std_dev: allocated.std_dev(),
            effective_mean: effective.mean(),
            effective_std_dev: effective.std_dev(),
            allocated_overall: ns.utilization(UtilizationVariant::Allocated),
            effective_overall: ns.utilization(UtilizationVariant::Effective),
        },
        node_hours: ns.into(),
        wait,
        rescued_mean_percent: rescued.as_ref().and_then(|r| r.mean()),
        warnings,
    };
    RunReport {
        summary,
        allocated,
        effective,
        wait_groups,
        rescued,
    }
}

/// Simulates one workload on one machine.
pub fn run_single(
    workload: &Workload,
    machine: Machine,
    options: &SimOptions,
    cfg: &ReportConfig,
) -> Result<(SimulationResult, RunReport)> {
    let result = simulate_with(machine, workload, None, options)?;
    let report = analyze(&result, &workload.label, options.policy, cfg, Vec::new());
    Ok((result, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionPoint {
    pub fraction: f64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub total_nodes: u32,
    pub utilization_mean: f64,
    pub utilization_std_dev: f64,
    pub capability_wait_mean: Option<f64>,
    pub capacity_wait_mean: Option<f64>,
    pub unschedulable: usize,
}

/// Merges the two workloads and simulates them on each downsized machine.
///
/// Runs execute on a pool of `parallelism` threads; the returned points are
/// in the order of `fractions`.
pub fn fuse(
    capability: &Workload,
    capacity: &Workload,
    unified: Machine,
    fractions: &[f64],
    options: &SimOptions,
    cfg: &ReportConfig,
    parallelism: usize,
) -> Result<Vec<FusionPoint>> {
    let merged = merge_workloads(capability, capacity);
    let machines: Vec<Machine> = fractions
        .iter()
        .map(|&f| downsize(&unified, f))
        .collect::<Result<_>>()?;
    let largest = merged.max_requested_nodes().unwrap_or(0);

    let run = |(&fraction, &machine): (&f64, &Machine)| -> Result<FusionPoint> {
        info!("fusion at {fraction}%: {} nodes", machine.total_nodes);
        let mut warnings = Vec::new();
        if largest > machine.total_nodes {
            let msg = format!(
                "{fraction}% machine ({} nodes) is smaller than the largest job ({largest} nodes)",
                machine.total_nodes
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        let result = simulate_with(machine, &merged, None, options)?;
        let label = format!("fusion-{fraction}");
        Ok(FusionPoint {
            fraction,
            report: analyze(&result, &label, options.policy, cfg, warnings),
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| fractions.par_iter().zip(machines.par_iter()).map(run).collect())
}

pub fn sweep_rows(points: &[FusionPoint]) -> Vec<SweepRow> {
    points
        .iter()
        .map(|p| {
            let s = &p.report.summary;
            SweepRow {
                fraction: p.fraction,
                total_nodes: s.machine.total_nodes,
                utilization_mean: s.utilization.allocated_mean,
                utilization_std_dev: s.utilization.allocated_std_dev,
                capability_wait_mean: s.mean_wait(Source::Capability),
                capacity_wait_mean: s.mean_wait(Source::Capacity),
                unschedulable: s.unschedulable,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionComparison {
    pub injected_jobs: usize,
    pub utilization_gain_points: f64,
    pub capability_wait_change_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionOutcome {
    pub baseline: RunReport,
    pub injected: Option<RunReport>,
    pub comparison: Option<InjectionComparison>,
}

/// Runs the capability workload alone, then again with the filtered
/// capacity jobs submitted to the backfill queue.
#[allow(clippy::too_many_arguments)]
pub fn inject(
    capability: &Workload,
    capacity: &Workload,
    filter: JobFilter,
    machine: Machine,
    options: &SimOptions,
    cfg: &ReportConfig,
    baseline_only: bool,
    parallelism: usize,
) -> Result<InjectionOutcome> {
    let selected = filter_workload(capacity, filter).with_queue_class(QueueClass::Backfill);
    info!("injecting {} of {} capacity jobs", selected.len(), capacity.len());
    let mut warnings = Vec::new();
    if selected.is_empty() && !baseline_only {
        let msg = "filter selected no capacity jobs; only the baseline was run".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    let with_injection = !baseline_only && !selected.is_empty();

    let variants: Vec<Option<&Workload>> = if with_injection {
        vec![None, Some(&selected)]
    } else {
        vec![None]
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    let mut reports: Vec<RunReport> = pool.install(|| {
        variants
            .par_iter()
            .map(|inj| -> Result<RunReport> {
                let result = simulate_with(machine, capability, *inj, options)?;
                let label = if inj.is_some() { "injected" } else { "baseline" };
                Ok(analyze(&result, label, options.policy, cfg, warnings.clone()))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let injected = if with_injection { reports.pop() } else { None };
    let baseline = reports.pop().expect("baseline run");
    let comparison = injected.as_ref().map(|inj| {
        let b = &baseline.summary;
        let i = &inj.summary;
        let wait_change = match (b.mean_wait(Source::Capability), i.mean_wait(Source::Capability)) {
            (Some(bw), Some(iw)) if bw > 0.0 => Some(100.0 * (iw - bw) / bw),
            _ => None,
        };
        InjectionComparison {
            injected_jobs: i.injected_jobs,
            utilization_gain_points: 100.0 * (i.utilization.allocated_mean - b.utilization.allocated_mean),
            capability_wait_change_percent: wait_change,
        }
    });
    Ok(InjectionOutcome {
        baseline,
        injected,
        comparison,
    })
}

fn csv_writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")
}

fn write_wait_csv(path: &Path, stats: &[WaitStats]) -> io::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "source",
        "size_bin",
        "runtime_bin",
        "count",
        "mean_s",
        "std_dev_s",
        "std_err_s",
        "ci95_s",
        "degenerate",
    ])?;
    for s in stats {
        w.write_record([
            s.key.source.as_str().to_string(),
            s.key.size_bin.clone().unwrap_or_default(),
            s.key.runtime_bin.clone().unwrap_or_default(),
            s.count.to_string(),
            s.mean.to_string(),
            s.std_dev.to_string(),
            s.std_err.to_string(),
            s.ci95.to_string(),
            s.degenerate.to_string(),
        ])?;
    }
    w.flush()
}

/// Writes `utilization.csv`, `wait_stats.csv`, `rescued.csv` (injection runs
/// only) and `summary.json` into `dir`.
pub fn write_run_report(dir: &Path, report: &RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("utilization.csv"))?;
    w.write_record(["bucket_start", "allocated", "effective"])?;
    for ((t, a), e) in report
        .allocated
        .bucket_starts
        .iter()
        .zip(&report.allocated.values)
        .zip(&report.effective.values)
    {
        w.write_record([t.to_string(), a.to_string(), e.to_string()])?;
    }
    w.flush()?;

    write_wait_csv(&dir.join("wait_stats.csv"), &report.wait_groups)?;

    let rescued_path = dir.join("rescued.csv");
    if let Some(r) = &report.rescued {
        let mut w = csv_writer(&rescued_path)?;
        w.write_record(["bucket_start", "rescued_percent"])?;
        for (t, v) in r.bucket_starts.iter().zip(&r.values) {
            w.write_record([t.to_string(), opt(*v)])?;
        }
        w.flush()?;
    } else if rescued_path.exists() {
        fs::remove_file(&rescued_path)?;
    }
    write_json(&dir.join("summary.json"), &report.summary)
}

pub fn fraction_dir_name(fraction: f64) -> String {
    if fraction.fract() == 0.0 {
        format!("fraction_{:03}", fraction as u32)
    } else {
        format!("fraction_{fraction}")
    }
}

pub fn write_fusion_reports(dir: &Path, points: &[FusionPoint]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for p in points {
        write_run_report(&dir.join(fraction_dir_name(p.fraction)), &p.report)?;
    }
    let rows = sweep_rows(points);
    let mut w = csv_writer(&dir.join("sweep.csv"))?;
    w.write_record([
        "fraction",
        "total_nodes",
        "utilization_mean",
        "utilization_std_dev",
        "capability_wait_mean_s",
        "capacity_wait_mean_s",
        "unschedulable",
    ])?;
    for r in &rows {
        w.write_record([
            r.fraction.to_string(),
            r.total_nodes.to_string(),
            r.utilization_mean.to_string(),
            r.utilization_std_dev.to_string(),
            opt(r.capability_wait_mean),
            opt(r.capacity_wait_mean),
            r.unschedulable.to_string(),
        ])?;
    }
    w.flush()?;
    let warnings: Vec<&String> = points.iter().flat_map(|p| &p.report.summary.warnings).collect();
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "sweep": rows, "warnings": warnings }),
    )
}

pub fn write_injection_reports(dir: &Path, outcome: &InjectionOutcome) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_run_report(&dir.join("baseline"), &outcome.baseline)?;
    if let Some(inj) = &outcome.injected {
        write_run_report(&dir.join("injected"), inj)?;
    }
    let mut warnings = outcome.baseline.summary.warnings.clone();
    if let Some(inj) = &outcome.injected {
        warnings.extend(inj.summary.warnings.iter().cloned());
    }
    warnings.dedup();
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "baseline": outcome.baseline.summary,
            "injected": outcome.injected.as_ref().map(|r| &r.summary),
            "comparison": outcome.comparison,
            "warnings": warnings,
        }),
    )
}

/// Size bins shared by both traces in a side-by-side characterization.
pub fn characterize_size_bins() -> Bins {
    Bins::new(vec![1, 32, 128, 256, 512, 1024, 4096]).expect("static bins")
}

fn write_histograms(
    path: &Path,
    traces: &[Characterization],
    pick: fn(&Characterization) -> &Histogram,
) -> io::Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["bin".to_string()];
    for c in traces {
        header.push(format!("{}_count", c.label));
        header.push(format!("{}_percent", c.label));
    }
    w.write_record(&header)?;
    let rows = traces.first().map_or(0, |c| pick(c).bins.len());
    for i in 0..rows {
        let mut row = vec![pick(&traces[0]).bins[i].label.clone()];
        for c in traces {
            let b = &pick(c).bins[i];
            row.push(b.count.to_string());
            row.push(b.percent.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// Writes `sizes.csv` and `runtimes.csv` with one column pair per trace,
/// plus `summary.json`.
pub fn write_characterization(dir: &Path, traces: &[Characterization], warnings: &[String]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_histograms(&dir.join("sizes.csv"), traces, |c| &c.sizes)?;
    write_histograms(&dir.join("runtimes.csv"), traces, |c| &c.runtimes)?;
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "traces": traces, "warnings": warnings }),
    )
}
