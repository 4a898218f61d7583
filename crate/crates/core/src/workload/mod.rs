//! Workload ingestion, selection, merging and characterization.

mod bins;
mod synth;
mod trace;

pub use bins::{BinCount, Bins, Histogram};
pub use synth::{synthesize, SynthPreset, SynthSpec, WeightedRange};
pub use trace::{parse_trace, parse_trace_str, write_csv, LoadedTrace, TraceFormat};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Job, Nodes, QueueClass, Source, Time};

/// Jobs sorted by `(arrival_time, id)` with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub label: String,
    jobs: Vec<Job>,
}

impl Workload {
    /// Builds a workload, sorting by arrival. Later duplicates of an id are discarded.
    pub fn new(label: impl Into<String>, mut jobs: Vec<Job>) -> Self {
        jobs.sort_by_key(|j| (j.arrival_time, j.id));
        let mut seen = std::collections::HashSet::with_capacity(jobs.len());
        jobs.retain(|j| seen.insert(j.id));
        Workload {
            label: label.into(),
            jobs,
        }
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Workload {
            label: label.into(),
            jobs: Vec::new(),
        }
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn into_jobs(self) -> Vec<Job> {
        self.jobs
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn first_arrival(&self) -> Option<Time> {
        self.jobs.first().map(|j| j.arrival_time)
    }

    pub fn max_requested_nodes(&self) -> Option<Nodes> {
        self.jobs.iter().map(|j| j.requested_nodes).max()
    }

    /// Resubmits every job to the given queue.
    pub fn with_queue_class(mut self, class: QueueClass) -> Self {
        for j in &mut self.jobs {
            j.queue_class = class;
        }
        self
    }

    /// Retags every job's source.
    pub fn with_source(mut self, source: Source) -> Self {
        for j in &mut self.jobs {
            j.source = source;
        }
        self
    }

    fn shift_back(&mut self, offset: Time) {
        for j in &mut self.jobs {
            j.arrival_time -= offset;
        }
    }
}

/// Shifts all workloads by the same offset so the earliest arrival across
/// them lands at t=0. Relative timing between traces is preserved.
pub fn normalize_arrivals(workloads: &mut [&mut Workload]) {
    let Some(origin) = workloads.iter().filter_map(|w| w.first_arrival()).min() else {
        return;
    };
    for w in workloads.iter_mut() {
        w.shift_back(origin);
    }
}

/// Job selection rule on requested nodes and actual runtime. Both bounds are inclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct JobFilter {
    pub max_nodes: Option<Nodes>,
    pub max_runtime: Option<Time>,
}

impl JobFilter {
    pub fn accepts(&self, job: &Job) -> bool {
        self.max_nodes.is_none_or(|n| job.requested_nodes <= n)
            && self.max_runtime.is_none_or(|t| job.actual_runtime <= t)
    }
}

pub fn filter_workload(w: &Workload, filter: JobFilter) -> Workload {
    Workload {
        label: w.label.clone(),
        jobs: w.jobs.iter().filter(|j| filter.accepts(j)).cloned().collect(),
    }
}

/// The six capacity sub-workloads injected onto the capability machine.
///
/// W1-W3 select small jobs of growing runtime, W4-W6 short jobs up to 4,096 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionPreset {
    W1,
    W2,
    W3,
    W4,
    W5,
    W6,
}

impl InjectionPreset {
    pub const ALL: [InjectionPreset; 6] = [
        InjectionPreset::W1,
        InjectionPreset::W2,
        InjectionPreset::W3,
        InjectionPreset::W4,
        InjectionPreset::W5,
        InjectionPreset::W6,
    ];

    pub fn filter(self) -> JobFilter {
        let (nodes, minutes) = match self {
            InjectionPreset::W1 => (128, 30),
            InjectionPreset::W2 => (128, 45),
            InjectionPreset::W3 => (128, 60),
            InjectionPreset::W4 => (4096, 10),
            InjectionPreset::W5 => (4096, 29),
            InjectionPreset::W6 => (4096, 30),
        };
        JobFilter {
            max_nodes: Some(nodes),
            max_runtime: Some(minutes * 60),
        }
    }

    /// Job counts these rules select from the 2022 Cori KNL trace.
    pub fn reference_count(self) -> usize {
        match self {
            InjectionPreset::W1 => 521_574,
            InjectionPreset::W2 => 629_475,
            InjectionPreset::W3 => 803_285,
            InjectionPreset::W4 => 133_914,
            InjectionPreset::W5 => 268_959,
            InjectionPreset::W6 => 528_243,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InjectionPreset::W1 => "W1",
            InjectionPreset::W2 => "W2",
            InjectionPreset::W3 => "W3",
            InjectionPreset::W4 => "W4",
            InjectionPreset::W5 => "W5",
            InjectionPreset::W6 => "W6",
        }
    }
}

impl std::str::FromStr for InjectionPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InjectionPreset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Interleaves two workloads by arrival time.
///
/// Ties go to the capability job, then the lower original id. Ids are
/// renumbered `0..n` in merged order; source tags are kept.
pub fn merge_workloads(a: &Workload, b: &Workload) -> Workload {
    let mut jobs: Vec<Job> = Vec::with_capacity(a.len() + b.len());
    jobs.extend_from_slice(&a.jobs);
    jobs.extend_from_slice(&b.jobs);
    jobs.sort_by_key(|j| (j.arrival_time, j.source, j.id));
    for (i, j) in jobs.iter_mut().enumerate() {
        j.id = i as u64;
    }
    Workload {
        label: format!("{}+{}", a.label, b.label),
        jobs,
    }
}

/// Size and runtime histograms of one workload.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Characterization {
    pub label: String,
    pub job_count: usize,
    pub sizes: Histogram,
    pub runtimes: Histogram,
}

pub fn characterize(w: &Workload, size_bins: &Bins, runtime_bins: &Bins) -> Characterization {
    Characterization {
        label: w.label.clone(),
        job_count: w.len(),
        sizes: size_bins.histogram(w.jobs.iter().map(|j| j.requested_nodes as u64)),
        runtimes: runtime_bins.histogram(w.jobs.iter().map(|j| j.actual_runtime)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(id: u64, t: Time, nodes: Nodes, runtime: Time, source: Source) -> Job {
        Job::new(id, t, nodes, runtime.max(1) * 2, runtime.max(1), source)
    }

    #[test]
    fn filter_rule_application() {
        let w = Workload::new(
            "w",
            vec![
                j(1, 0, 64, 20 * 60, Source::Capacity),
                j(2, 1, 200, 20 * 60, Source::Capacity),
                j(3, 2, 64, 40 * 60, Source::Capacity),
            ],
        );
        let f = JobFilter {
            max_nodes: Some(128),
            max_runtime: Some(30 * 60),
        };
        let kept = filter_workload(&w, f);
        assert_eq!(kept.jobs().iter().map(|j| j.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(filter_workload(&w, JobFilter::default()), w);
    }

    #[test]
    fn preset_thresholds() {
        let w4 = InjectionPreset::W4.filter();
        assert_eq!(w4.max_nodes, Some(4096));
        assert_eq!(w4.max_runtime, Some(600));
        assert_eq!("w1".parse::<InjectionPreset>().unwrap(), InjectionPreset::W1);
        assert!("W7".parse::<InjectionPreset>().is_err());
    }

    #[test]
    fn merge_orders_and_breaks_ties_by_source() {
        let a = Workload::new("a", vec![j(0, 5, 128, 60, Source::Capability)]);
        let b = Workload::new("b", vec![j(0, 10, 1, 60, Source::Capacity)]);
        let m = merge_workloads(&a, &b);
        assert_eq!(m.jobs().iter().map(|j| j.arrival_time).collect::<Vec<_>>(), vec![5, 10]);

        let a = Workload::new("a", vec![j(9, 7, 128, 60, Source::Capability)]);
        let b = Workload::new("b", vec![j(1, 7, 1, 60, Source::Capacity)]);
        for m in [merge_workloads(&a, &b), merge_workloads(&b, &a)] {
            assert_eq!(m.jobs()[0].source, Source::Capability);
            assert_eq!(m.jobs()[0].id, 0);
            assert_eq!(m.jobs()[1].id, 1);
        }
    }

    #[test]
    fn merged_size_is_sum() {
        // Table I scale: 23,911 + 2,349,370.
        let a = Workload::new(
            "a",
            (0..23_911).map(|i| j(i, i * 3, 128, 60, Source::Capability)).collect(),
        );
        let b = Workload::new("b", (0..2_349_370).map(|i| j(i, i, 1, 60, Source::Capacity)).collect());
        assert_eq!(merge_workloads(&a, &b).len(), 2_373_281);
    }

    #[test]
    fn normalization_is_joint() {
        let mut a = Workload::new("a", vec![j(0, 500, 1, 60, Source::Capability)]);
        let mut b = Workload::new("b", vec![j(0, 200, 1, 60, Source::Capacity)]);
        normalize_arrivals(&mut [&mut a, &mut b]);
        assert_eq!(a.first_arrival(), Some(300));
        assert_eq!(b.first_arrival(), Some(0));
    }

    #[test]
    fn characterize_single_job() {
        let w = Workload::new("w", vec![j(0, 0, 4, 100, Source::Capacity)]);
        let c = characterize(&w, &Bins::capacity_sizes(), &Bins::runtimes());
        assert_eq!(c.sizes.bins[1].count, 1);
        assert!((c.sizes.bins[1].percent - 100.0).abs() < 1e-12);
        assert!((c.runtimes.bins[0].percent - 100.0).abs() < 1e-12);
    }

    use proptest::prelude::*;

    fn arb_workload(source: Source) -> impl Strategy<Value = Workload> {
        proptest::collection::vec((0u64..1000, 1u32..300, 1u64..5000), 0..40).prop_map(move |v| {
            let jobs = v
                .into_iter()
                .enumerate()
                .map(|(i, (t, n, r))| j(i as u64, t, n, r, source))
                .collect();
            Workload::new(source.as_str(), jobs)
        })
    }

    proptest! {
        #[test]
        fn filter_is_subset_and_idempotent(w in arb_workload(Source::Capacity), n in 1u32..300, r in 1u64..5000) {
            let f = JobFilter { max_nodes: Some(n), max_runtime: Some(r) };
            let once = filter_workload(&w, f);
            prop_assert!(once.jobs().iter().all(|x| w.jobs().contains(x)));
            prop_assert_eq!(filter_workload(&once, f), once);
        }

        #[test]
        fn merge_is_commutative_and_preserves_jobs(a in arb_workload(Source::Capability), b in arb_workload(Source::Capacity)) {
            let ab = merge_workloads(&a, &b);
            let ba = merge_workloads(&b, &a);
            prop_assert_eq!(ab.jobs(), ba.jobs());
            prop_assert_eq!(ab.len(), a.len() + b.len());
            prop_assert!(ab.jobs().windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
            let key = |j: &Job| (j.arrival_time, j.requested_nodes, j.actual_runtime, j.source);
            let mut merged: Vec<_> = ab.jobs().iter().map(key).collect();
            let mut inputs: Vec<_> = a.jobs().iter().chain(b.jobs()).map(key).collect();
            merged.sort();
            inputs.sort();
            prop_assert_eq!(merged, inputs);
        }
    }
}
