//! Utilization, wait time and rescued-resource metrics over a finished run.
//!
//! All accounting is in integer node-seconds; only the final ratios are
//! floating point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{QueueClass, SimulationResult, Source, Time};
use crate::workload::Bins;

pub const DAY: Time = 86_400;
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilizationVariant {
    /// Nodes held by jobs, including minimum-allocation padding.
    Allocated,
    /// Nodes jobs actually asked for.
    Effective,
}

/// Time range metrics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricWindow {
    /// First arrival to last completion, drain included.
    #[default]
    Full,
    /// First arrival to last arrival.
    LastArrival,
}

impl MetricWindow {
    pub fn bounds(self, r: &SimulationResult) -> (Time, Time) {
        match self {
            MetricWindow::Full => (r.span_start, r.span_end),
            MetricWindow::LastArrival => (r.span_start, r.last_arrival.max(r.span_start)),
        }
    }
}

/// Splits `[from, to)` into buckets of `width`; the last one may be short.
fn buckets(from: Time, to: Time, width: Time) -> Vec<(Time, Time)> {
    let width = width.max(1);
    let mut out = Vec::new();
    let mut t = from;
    while t < to {
        let hi = (t + width).min(to);
        out.push((t, hi));
        t = hi;
    }
    out
}

/// Node-seconds per bucket for intervals matching `keep`.
fn bucket_node_seconds(
    r: &SimulationResult,
    bounds: &[(Time, Time)],
    width: Time,
    allocated: bool,
    keep: impl Fn(QueueClass) -> bool,
) -> Vec<u128> {
    let mut sums = vec![0u128; bounds.len()];
    let Some(&(origin, _)) = bounds.first() else {
        return sums;
    };
    let width = width.max(1);
    for iv in r.intervals.iter().filter(|iv| keep(iv.queue_class)) {
        if iv.end_time <= origin {
            continue;
        }
        let first = (iv.start_time.saturating_sub(origin) / width) as usize;
        for (k, &(lo, hi)) in bounds.iter().enumerate().skip(first) {
            if lo >= iv.end_time {
                break;
            }
            sums[k] += iv.overlap_node_seconds(lo, hi, allocated);
        }
    }
    sums
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationSeries {
    pub bucket_width: Time,
    pub variant: UtilizationVariant,
    pub bucket_starts: Vec<Time>,
    /// Busy fraction of each bucket, in [0, 1].
    pub values: Vec<f64>,
}

impl UtilizationSeries {
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn std_dev(&self) -> f64 {
        sample_sd(&self.values)
    }
}

pub fn utilization_series(
    r: &SimulationResult,
    bucket: Time,
    variant: UtilizationVariant,
    window: MetricWindow,
) -> UtilizationSeries {
    let (from, to) = window.bounds(r);
    let bounds = buckets(from, to, bucket);
    let allocated = variant == UtilizationVariant::Allocated;
    let sums = bucket_node_seconds(r, &bounds, bucket, allocated, |_| true);
    let values = bounds
        .iter()
        .zip(&sums)
        .map(|(&(lo, hi), &s)| s as f64 / r.machine.capacity_over(hi - lo) as f64)
        .collect();
    UtilizationSeries {
        bucket_width: bucket,
        variant,
        bucket_starts: bounds.iter().map(|b| b.0).collect(),
        values,
    }
}

/// Node-second accounting over a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeSeconds {
    pub capacity: u128,
    pub allocated: u128,
    pub used: u128,
    /// Allocated to default-queue jobs.
    pub default_allocated: u128,
    /// Allocated to injected jobs.
    pub injected_allocated: u128,
}

impl NodeSeconds {
    pub fn idle(&self) -> u128 {
        self.capacity - self.allocated
    }

    /// Held by jobs but not requested: minimum-allocation padding.
    pub fn rounding_waste(&self) -> u128 {
        self.allocated - self.used
    }

    pub fn utilization(&self, variant: UtilizationVariant) -> f64 {
        if self.capacity == 0 {
            return 0.0;
        }
        let busy = match variant {
            UtilizationVariant::Allocated => self.allocated,
            UtilizationVariant::Effective => self.used,
        };
        busy as f64 / self.capacity as f64
    }
}

pub fn node_seconds(r: &SimulationResult, window: MetricWindow) -> NodeSeconds {
    let (from, to) = window.bounds(r);
    let mut acc = NodeSeconds {
        capacity: r.machine.capacity_over(to - from),
        allocated: 0,
        used: 0,
        default_allocated: 0,
        injected_allocated: 0,
    };
    for iv in &r.intervals {
        let a = iv.overlap_node_seconds(from, to, true);
        acc.allocated += a;
        acc.used += iv.overlap_node_seconds(from, to, false);
        match iv.queue_class {
            QueueClass::Default => acc.default_allocated += a,
            QueueClass::Backfill => acc.injected_allocated += a,
        }
    }
    acc
}

/// Which jobs to include and how to bin them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub source: Option<Source>,
    pub queue_class: Option<QueueClass>,
    /// Bins over requested nodes.
    pub size_bins: Option<Bins>,
    /// Bins over simulated runtime in seconds.
    pub runtime_bins: Option<Bins>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GroupKey {
    pub source: Source,
    pub size_bin: Option<String>,
    pub runtime_bin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitStats {
    pub key: GroupKey,
    pub count: usize,
    /// Seconds.
    pub mean: f64,
    /// Sample standard deviation, seconds.
    pub std_dev: f64,
    pub std_err: f64,
    /// Half-width of the 95% confidence interval: 1.96 x standard error.
    pub ci95: f64,
    /// Single-job group: deviation and error are undefined and reported as 0.
    pub degenerate: bool,
}

impl WaitStats {
    pub fn from_waits(key: GroupKey, waits: &[f64]) -> Option<WaitStats> {
        if waits.is_empty() {
            return None;
        }
        let count = waits.len();
        let degenerate = count < 2;
        let std_dev = if degenerate { 0.0 } else { sample_sd(waits) };
        let std_err = std_dev / (count as f64).sqrt();
        Some(WaitStats {
            key,
            count,
            mean: mean(waits),
            std_dev,
            std_err,
            ci95: Z_95 * std_err,
            degenerate,
        })
    }
}

/// Wait statistics per `(source, size bin, runtime bin)`. Empty groups are omitted.
pub fn wait_stats(r: &SimulationResult, spec: &GroupSpec) -> Vec<WaitStats> {
    let mut groups: BTreeMap<(Source, usize, usize), Vec<f64>> = BTreeMap::new();
    for job in &r.jobs {
        if spec.source.is_some_and(|s| s != job.source) || spec.queue_class.is_some_and(|q| q != job.queue_class) {
            continue;
        }
        let size = spec
            .size_bins
            .as_ref()
            .map_or(0, |b| b.index_of(job.requested_nodes as u64));
        let runtime = spec.runtime_bins.as_ref().map_or(0, |b| b.index_of(job.runtime()));
        groups
            .entry((job.source, size, runtime))
            .or_default()
            .push(job.wait() as f64);
    }
    groups
        .into_iter()
        .filter_map(|((source, size, runtime), waits)| {
            let key = GroupKey {
                source,
                size_bin: spec.size_bins.as_ref().map(|b| b.label(size)),
                runtime_bin: spec.runtime_bins.as_ref().map(|b| b.label(runtime)),
            };
            WaitStats::from_waits(key, &waits)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescuedSeries {
    pub bucket_width: Time,
    pub bucket_starts: Vec<Time>,
    /// Percent of each bucket's idle capability capacity used by injected
    /// jobs; `None` where the capability jobs left nothing idle.
    pub values: Vec<Option<f64>>,
}

impl RescuedSeries {
    /// Mean over buckets that had waste.
    pub fn mean(&self) -> Option<f64> {
        let defined: Vec<f64> = self.values.iter().flatten().copied().collect();
        (!defined.is_empty()).then(|| mean(&defined))
    }
}

/// Per bucket: injected node-hours / (capacity - default-queue node-hours), as a percentage.
pub fn rescued_resource(r: &SimulationResult, bucket: Time, window: MetricWindow) -> RescuedSeries {
    let (from, to) = window.bounds(r);
    let bounds = buckets(from, to, bucket);
    let default = bucket_node_seconds(r, &bounds, bucket, true, |q| q == QueueClass::Default);
    let injected = bucket_node_seconds(r, &bounds, bucket, true, |q| q == QueueClass::Backfill);
    let values = bounds
        .iter()
        .zip(default.iter().zip(&injected))
        .map(|(&(lo, hi), (&d, &i))| {
            let waste = r.machine.capacity_over(hi - lo) - d;
            (waste > 0).then(|| 100.0 * i as f64 / waste as f64)
        })
        .collect();
    RescuedSeries {
        bucket_width: bucket,
        bucket_starts: bounds.iter().map(|b| b.0).collect(),
        values,
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AllocationInterval, JobRecord, Machine};

    fn result(machine: Machine, ivs: &[(Time, Time, u32, u32, QueueClass)], span: (Time, Time)) -> SimulationResult {
        let intervals: Vec<_> = ivs
            .iter()
            .enumerate()
            .map(|(i, &(s, e, a, u, q))| AllocationInterval {
                job_id: i as u64,
                start_time: s,
                end_time: e,
                allocated_nodes: a,
                used_nodes: u,
                queue_class: q,
            })
            .collect();
        let jobs = intervals
            .iter()
            .map(|iv| JobRecord {
                id: iv.job_id,
                source: if iv.queue_class == QueueClass::Default {
                    Source::Capability
                } else {
                    Source::Capacity
                },
                queue_class: iv.queue_class,
                arrival: span.0,
                start: iv.start_time,
                end: iv.end_time,
                requested_nodes: iv.used_nodes,
                allocated_nodes: iv.allocated_nodes,
                requested_walltime: iv.duration(),
                first_shadow: None,
                lost_head: false,
            })
            .collect();
        SimulationResult {
            machine,
            jobs,
            intervals,
            unschedulable: vec![],
            span_start: span.0,
            span_end: span.1,
            last_arrival: span.0,
        }
    }

    const D: QueueClass = QueueClass::Default;
    const B: QueueClass = QueueClass::Backfill;

    #[test]
    fn one_bucket_one_job() {
        let m = Machine::capability_reference();
        let r = result(m, &[(0, DAY, 128, 128, D)], (0, DAY));
        let u = utilization_series(&r, DAY, UtilizationVariant::Allocated, MetricWindow::Full);
        assert_eq!(u.values.len(), 1);
        assert!((u.values[0] - 128.0 / 4360.0).abs() < 1e-15);
        assert!((u.values[0] - 0.02936).abs() < 1e-5);
    }

    #[test]
    fn allocated_vs_effective() {
        let m = Machine::capability_reference();
        let r = result(m, &[(0, DAY, 128, 1, D)], (0, DAY));
        let a = utilization_series(&r, DAY, UtilizationVariant::Allocated, MetricWindow::Full);
        let e = utilization_series(&r, DAY, UtilizationVariant::Effective, MetricWindow::Full);
        assert!((a.values[0] - 128.0 / 4360.0).abs() < 1e-15);
        assert!((e.values[0] - 1.0 / 4360.0).abs() < 1e-15);
    }

    #[test]
    fn idle_bucket_is_zero_and_short_tail_bucket_is_normalized() {
        let m = Machine::new(10, 1).unwrap();
        let r = result(m, &[(250, 300, 10, 10, D)], (0, 300));
        let u = utilization_series(&r, 100, UtilizationVariant::Allocated, MetricWindow::Full);
        assert_eq!(u.bucket_starts, vec![0, 100, 200]);
        assert_eq!(u.values, vec![0.0, 0.0, 0.5]);
        let r = result(m, &[(200, 250, 10, 10, D)], (0, 250));
        let u = utilization_series(&r, 100, UtilizationVariant::Allocated, MetricWindow::Full);
        assert_eq!(u.values, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn rescued_reference_schedule() {
        // 10 nodes x 100 s; capability jobs use 800 node-s, injected 150.
        let m = Machine::new(10, 1).unwrap();
        let r = result(m, &[(0, 100, 8, 8, D), (0, 50, 3, 3, B)], (0, 100));
        let s = rescued_resource(&r, 100, MetricWindow::Full);
        assert_eq!(s.values.len(), 1);
        assert!((s.values[0].unwrap() - 75.0).abs() < 1e-12);
    }

    #[test]
    fn rescued_edge_cases() {
        let m = Machine::new(10, 1).unwrap();
        let r = result(m, &[(0, 100, 10, 10, D), (100, 150, 4, 4, D)], (0, 200));
        let s = rescued_resource(&r, 100, MetricWindow::Full);
        assert_eq!(s.values, vec![None, Some(0.0)]);
    }

    #[test]
    fn wait_stat_basics() {
        let k = GroupKey {
            source: Source::Capability,
            size_bin: None,
            runtime_bin: None,
        };
        let s = WaitStats::from_waits(k.clone(), &[90.0, 0.0]).unwrap();
        assert_eq!(s.mean, 45.0);
        // sd = sqrt(((45)^2 * 2) / 1)
        assert!((s.std_dev - 4050f64.sqrt()).abs() < 1e-12);
        assert!((s.ci95 - 1.96 * s.std_dev / 2f64.sqrt()).abs() < 1e-12);
        let single = WaitStats::from_waits(k.clone(), &[0.0]).unwrap();
        assert!(single.degenerate);
        assert_eq!((single.mean, single.std_err, single.ci95), (0.0, 0.0, 0.0));
        assert!(WaitStats::from_waits(k, &[]).is_none());
    }

    #[test]
    fn wait_stats_grouping() {
        let m = Machine::new(10, 1).unwrap();
        let mut r = result(m, &[(0, 100, 1, 1, D), (50, 60, 4, 4, D), (90, 100, 1, 1, B)], (0, 100));
        r.jobs[1].arrival = 40;
        let spec = GroupSpec {
            size_bins: Some(Bins::capacity_sizes()),
            ..GroupSpec::default()
        };
        let stats = wait_stats(&r, &spec);
        assert_eq!(stats.len(), 3);
        assert_eq!(stats[0].key.size_bin.as_deref(), Some("1"));
        assert_eq!(stats[1].key.size_bin.as_deref(), Some("2-32"));
        assert_eq!(stats[1].mean, 10.0);
        assert_eq!(stats[2].key.source, Source::Capacity);
        let only_cap = wait_stats(
            &r,
            &GroupSpec {
                source: Some(Source::Capability),
                ..GroupSpec::default()
            },
        );
        assert_eq!(only_cap.len(), 1);
        assert_eq!(only_cap[0].count, 2);
    }

    #[test]
    fn node_second_breakdown() {
        let m = Machine::new(256, 128).unwrap();
        let r = result(m, &[(0, 100, 128, 1, D), (0, 100, 64, 64, B)], (0, 200));
        let ns = node_seconds(&r, MetricWindow::Full);
        assert_eq!(ns.capacity, 256 * 200);
        assert_eq!(ns.allocated, 19_200);
        assert_eq!(ns.rounding_waste(), 12_700);
        assert_eq!(ns.injected_allocated, 6_400);
        assert_eq!(ns.idle(), 256 * 200 - 19_200);
    }
}
