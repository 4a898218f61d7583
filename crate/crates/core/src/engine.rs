//! Discrete-event simulation kernel.
//!
//! Events are processed in `(time, kind, sequence)` order, completions before
//! arrivals before ticks, so nodes released at an instant are visible to jobs
//! arriving at that instant. All events sharing a timestamp are applied
//! before one scheduling pass runs; a pass at an instant with no events
//! would change nothing.
//!
//! Two queues are kept. The default queue is ordered by the policy and its
//! head may hold the single EASY reservation. The backfill queue holds
//! injected jobs in arrival order; they only ever start as backfill and are
//! never rounded up to the machine's minimum allocation.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::backfill::{compute_reservation, try_backfill, Candidate, Reservation};
use crate::error::{Error, Result};
use crate::model::{
    min_alloc_round, AllocationInterval, Job, JobRecord, Machine, Nodes, QueueClass, SimulationResult, Source, Time,
    Unschedulable,
};
use crate::policy::{queue_cmp, PolicyKind};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub policy: PolicyKind,
    /// EASY backfilling on the default queue. When off, injected jobs only
    /// start while the default queue is empty.
    pub backfill: bool,
    /// Extra scheduling passes every this many seconds.
    pub resort_tick: Option<Time>,
    /// Round capability-sourced default-queue jobs up to this size, on top
    /// of the machine's own minimum.
    pub capability_min_alloc: Option<Nodes>,
}

impl SimOptions {
    pub fn new(policy: PolicyKind) -> Self {
        SimOptions {
            policy,
            backfill: true,
            resort_tick: None,
            capability_min_alloc: None,
        }
    }
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions::new(PolicyKind::Fcfs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Completion(usize),
    Arrival(usize),
    Tick,
}

impl EventKind {
    fn priority(self) -> u8 {
        match self {
            EventKind::Completion(_) => 0,
            EventKind::Arrival(_) => 1,
            EventKind::Tick => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Time,
    pub kind: EventKind,
    pub sequence: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.kind.priority(), self.sequence).cmp(&(other.time, other.kind.priority(), other.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    sequence: u64,
}

impl EventQueue {
    fn push(&mut self, time: Time, kind: EventKind) {
        self.heap.push(Reverse(Event {
            time,
            kind,
            sequence: self.sequence,
        }));
        self.sequence += 1;
    }

    fn peek_time(&self) -> Option<Time> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Immutable per-run inputs shared by every pass.
struct JobTable<'a> {
    jobs: &'a [Job],
    allocation: &'a [Nodes],
    machine: Machine,
    options: SimOptions,
}

/// Live scheduler state. Jobs are referred to by their index in the job table.
pub struct SchedulerState {
    pub clock: Time,
    pub default_queue: Vec<usize>,
    pub backfill_queue: Vec<usize>,
    /// `(walltime_end, job)` for every running job.
    pub running: BTreeSet<(Time, usize)>,
    pub free_nodes: Nodes,
    pub reservation: Option<Reservation>,
    first_shadow: Vec<Option<Time>>,
    lost_head: Vec<bool>,
}

impl SchedulerState {
    fn new(machine: &Machine, jobs: usize) -> Self {
        SchedulerState {
            clock: 0,
            default_queue: Vec::new(),
            backfill_queue: Vec::new(),
            running: BTreeSet::new(),
            free_nodes: machine.total_nodes,
            reservation: None,
            first_shadow: vec![None; jobs],
            lost_head: vec![false; jobs],
        }
    }

    fn start(&mut self, t: &JobTable, idx: usize) {
        let alloc = t.allocation[idx];
        debug_assert!(alloc <= self.free_nodes);
        self.free_nodes -= alloc;
        self.running.insert((self.clock + t.jobs[idx].requested_walltime, idx));
    }

    fn release(&mut self, t: &JobTable, idx: usize, walltime_end: Time) {
        let removed = self.running.remove(&(walltime_end, idx));
        debug_assert!(removed);
        self.free_nodes += t.allocation[idx];
    }

    fn note_reservation(&mut self, r: Reservation, head: usize) {
        if let Some(prev) = self.reservation {
            let prev = prev.job_id as usize;
            if prev != head {
                self.lost_head[prev] = true;
            }
        }
        if self.first_shadow[head].is_none() {
            self.first_shadow[head] = Some(r.shadow_time);
        }
        self.reservation = Some(r);
    }

    /// One scheduling pass at `self.clock`. Returns the jobs started, in order.
    fn schedule_pass(&mut self, t: &JobTable) -> Vec<usize> {
        let now = self.clock;
        let mut started = Vec::new();

        if t.options.policy != PolicyKind::Fcfs {
            let jobs = t.jobs;
            let policy = t.options.policy;
            self.default_queue
                .sort_by(|&a, &b| queue_cmp(&jobs[a], &jobs[b], policy, now));
        }

        // Start from the head while jobs fit.
        let mut head = 0;
        let mut holder = self.reservation.map(|r| r.job_id as usize);
        while head < self.default_queue.len() {
            let idx = self.default_queue[head];
            if t.allocation[idx] > self.free_nodes {
                break;
            }
            // A job overtaking the reservation holder may consume the nodes
            // its shadow time was computed from.
            match holder {
                Some(h) if h == idx => holder = None,
                Some(h) => self.lost_head[h] = true,
                None => {}
            }
            self.start(t, idx);
            started.push(idx);
            head += 1;
        }
        if head > 0 {
            if let Some(r) = self.reservation {
                if self.default_queue[..head].contains(&(r.job_id as usize)) {
                    self.reservation = None;
                }
            }
            self.default_queue.drain(..head);
        }

        if self.default_queue.is_empty() {
            self.reservation = None;
            self.start_backfill_queue_freely(t, &mut started);
            return started;
        }
        if !t.options.backfill || self.free_nodes == 0 {
            return started;
        }

        let head_idx = self.default_queue[0];
        let reservation = compute_reservation(
            head_idx as u64,
            t.allocation[head_idx],
            self.running.iter().map(|&(end, i)| (end, t.allocation[i])),
            self.free_nodes,
            t.machine.total_nodes,
            now,
        );
        let mut reservation = match reservation {
            Ok(r) => r,
            // Oversized jobs never enter the queue and the head does not
            // fit, so neither error can arise here.
            Err(e) => unreachable!("reservation for blocked head: {e}"),
        };
        self.note_reservation(reservation, head_idx);

        let mut free = self.free_nodes;
        let mut picked_default = Vec::new();
        for (pos, &idx) in self.default_queue.iter().enumerate().skip(1) {
            if free == 0 {
                break;
            }
            let c = Candidate {
                key: pos,
                allocation: t.allocation[idx],
                walltime: t.jobs[idx].requested_walltime,
            };
            if try_backfill(&c, &mut reservation, &mut free, now) {
                picked_default.push(pos);
            }
        }
        let mut picked_injected = Vec::new();
        for (pos, &idx) in self.backfill_queue.iter().enumerate() {
            if free == 0 {
                break;
            }
            let c = Candidate {
                key: pos,
                allocation: t.allocation[idx],
                walltime: t.jobs[idx].requested_walltime,
            };
            if try_backfill(&c, &mut reservation, &mut free, now) {
                picked_injected.push(pos);
            }
        }

        for &pos in &picked_default {
            let idx = self.default_queue[pos];
            self.start(t, idx);
            started.push(idx);
        }
        for &pos in &picked_injected {
            let idx = self.backfill_queue[pos];
            self.start(t, idx);
            started.push(idx);
        }
        debug_assert_eq!(free, self.free_nodes);
        remove_positions(&mut self.default_queue, &picked_default);
        remove_positions(&mut self.backfill_queue, &picked_injected);
        self.reservation = Some(reservation);
        started
    }

    /// No default job is waiting, so injected jobs cannot delay anything.
    fn start_backfill_queue_freely(&mut self, t: &JobTable, started: &mut Vec<usize>) {
        let mut picked = Vec::new();
        for (pos, &idx) in self.backfill_queue.iter().enumerate() {
            if self.free_nodes == 0 {
                break;
            }
            if t.allocation[idx] <= self.free_nodes {
                self.free_nodes -= t.allocation[idx];
                picked.push(pos);
            }
        }
        for &pos in &picked {
            let idx = self.backfill_queue[pos];
            self.free_nodes += t.allocation[idx];
            self.start(t, idx);
            started.push(idx);
        }
        remove_positions(&mut self.backfill_queue, &picked);
    }
}

/// Removes the given ascending positions from `v`, keeping order.
fn remove_positions(v: &mut Vec<usize>, positions: &[usize]) {
    if positions.is_empty() {
        return;
    }
    let mut next = positions.iter().peekable();
    let mut pos = 0;
    v.retain(|_| {
        let drop = next.peek() == Some(&&pos);
        if drop {
            next.next();
        }
        pos += 1;
        !drop
    });
}

/// Shrinks the machine to `fraction` percent of its nodes, rounding down.
pub fn downsize(machine: &Machine, fraction: f64) -> Result<Machine> {
    if !(fraction > 0.0 && fraction <= 100.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let total = (machine.total_nodes as f64 * fraction / 100.0 + 1e-9).floor() as Nodes;
    if total == 0 || total < machine.min_alloc {
        return Err(Error::MachineTooSmall {
            total_nodes: total,
            min_alloc: machine.min_alloc,
        });
    }
    Ok(Machine {
        total_nodes: total,
        min_alloc: machine.min_alloc,
    })
}

/// Nodes the scheduler hands a job on this machine.
pub fn allocation_for(job: &Job, machine: &Machine, options: &SimOptions) -> Nodes {
    match job.queue_class {
        QueueClass::Backfill => job.requested_nodes,
        QueueClass::Default => {
            let mut n = min_alloc_round(job.requested_nodes, machine);
            if job.source == Source::Capability {
                if let Some(min) = options.capability_min_alloc {
                    n = n.max(min);
                }
            }
            n
        }
    }
}

pub fn simulate(
    machine: Machine,
    default_workload: &Workload,
    injected_workload: Option<&Workload>,
    policy: PolicyKind,
) -> Result<SimulationResult> {
    simulate_with(machine, default_workload, injected_workload, &SimOptions::new(policy))
}

pub fn simulate_with(
    machine: Machine,
    default_workload: &Workload,
    injected_workload: Option<&Workload>,
    options: &SimOptions,
) -> Result<SimulationResult> {
    let injected_len = injected_workload.map_or(0, |w| w.len());
    if default_workload.is_empty() && injected_len == 0 {
        return Err(Error::EmptySimulation);
    }

    let mut jobs: Vec<Job> = Vec::with_capacity(default_workload.len() + injected_len);
    jobs.extend(default_workload.jobs().iter().cloned().map(|mut j| {
        j.queue_class = QueueClass::Default;
        j
    }));
    if let Some(w) = injected_workload {
        jobs.extend(w.jobs().iter().cloned().map(|mut j| {
            j.queue_class = QueueClass::Backfill;
            j
        }));
    }
    let allocation: Vec<Nodes> = jobs.iter().map(|j| allocation_for(j, &machine, options)).collect();
    let table = JobTable {
        jobs: &jobs,
        allocation: &allocation,
        machine,
        options: *options,
    };

    let mut events = EventQueue::default();
    let mut unschedulable = Vec::new();
    let mut schedulable = vec![true; jobs.len()];
    for (i, j) in jobs.iter().enumerate() {
        if allocation[i] > machine.total_nodes {
            schedulable[i] = false;
            unschedulable.push(Unschedulable {
                id: j.id,
                source: j.source,
                queue_class: j.queue_class,
                allocation: allocation[i],
            });
            continue;
        }
        events.push(j.arrival_time, EventKind::Arrival(i));
    }
    if !unschedulable.is_empty() {
        warn!(
            "{} job(s) exceed the {}-node machine and were skipped",
            unschedulable.len(),
            machine.total_nodes
        );
    }
    if let (Some(period), Some(first)) = (options.resort_tick, events.peek_time()) {
        if period > 0 {
            events.push(first + period, EventKind::Tick);
        }
    }

    let mut state = SchedulerState::new(&machine, jobs.len());
    let mut start = vec![0 as Time; jobs.len()];
    let mut end = vec![0 as Time; jobs.len()];
    let mut pending_arrivals = jobs.len() - unschedulable.len();

    while let Some(now) = events.peek_time() {
        state.clock = now;
        while events.peek_time() == Some(now) {
            let e = events.pop().expect("peeked");
            match e.kind {
                EventKind::Completion(i) => {
                    state.release(&table, i, start[i] + jobs[i].requested_walltime);
                }
                EventKind::Arrival(i) => {
                    pending_arrivals -= 1;
                    match jobs[i].queue_class {
                        QueueClass::Default => state.default_queue.push(i),
                        QueueClass::Backfill => state.backfill_queue.push(i),
                    }
                }
                EventKind::Tick => {
                    let busy = pending_arrivals > 0
                        || !state.running.is_empty()
                        || !state.default_queue.is_empty()
                        || !state.backfill_queue.is_empty();
                    if let (true, Some(period)) = (busy, options.resort_tick) {
                        events.push(now + period, EventKind::Tick);
                    }
                }
            }
        }
        for i in state.schedule_pass(&table) {
            start[i] = now;
            end[i] = now + jobs[i].effective_runtime();
            events.push(end[i], EventKind::Completion(i));
        }
    }
    debug_assert!(events.is_empty());
    debug_assert!(state.default_queue.is_empty() && state.backfill_queue.is_empty());

    let mut records = Vec::with_capacity(jobs.len() - unschedulable.len());
    let mut intervals = Vec::with_capacity(records.capacity());
    for (i, j) in jobs.iter().enumerate() {
        if !schedulable[i] {
            continue;
        }
        records.push(JobRecord {
            id: j.id,
            source: j.source,
            queue_class: j.queue_class,
            arrival: j.arrival_time,
            start: start[i],
            end: end[i],
            requested_nodes: j.requested_nodes,
            allocated_nodes: allocation[i],
            requested_walltime: j.requested_walltime,
            first_shadow: state.first_shadow[i],
            lost_head: state.lost_head[i],
        });
        intervals.push(AllocationInterval {
            job_id: j.id,
            start_time: start[i],
            end_time: end[i],
            allocated_nodes: allocation[i],
            used_nodes: j.requested_nodes,
            queue_class: j.queue_class,
        });
    }
    intervals.sort_by_key(|iv| (iv.start_time, iv.job_id, iv.queue_class));

    let span_start = records.iter().map(|r| r.arrival).min().unwrap_or(0);
    let span_end = records.iter().map(|r| r.end).max().unwrap_or(span_start);
    let last_arrival = records.iter().map(|r| r.arrival).max().unwrap_or(span_start);
    Ok(SimulationResult {
        machine,
        jobs: records,
        intervals,
        unschedulable,
        span_start,
        span_end,
        last_arrival,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: u64, arrival: Time, nodes: Nodes, walltime: Time, runtime: Time) -> Job {
        Job::new(id, arrival, nodes, walltime, runtime, Source::Capability)
    }

    fn fcfs(machine: Machine, jobs: Vec<Job>) -> SimulationResult {
        simulate(machine, &Workload::new("t", jobs), None, PolicyKind::Fcfs).unwrap()
    }

    fn starts(r: &SimulationResult) -> Vec<Time> {
        r.jobs.iter().map(|j| j.start).collect()
    }

    #[test]
    fn single_job_starts_on_arrival() {
        let r = fcfs(Machine::capability_reference(), vec![job(0, 42, 128, 200, 100)]);
        assert_eq!((r.jobs[0].start, r.jobs[0].end, r.jobs[0].wait()), (42, 142, 0));
    }

    #[test]
    fn full_machine_jobs_serialize() {
        let m = Machine::new(16, 1).unwrap();
        let r = fcfs(m, vec![job(0, 0, 16, 100, 100), job(1, 10, 16, 100, 100)]);
        assert_eq!(starts(&r), vec![0, 100]);
        assert_eq!(r.jobs[1].wait(), 90);
    }

    #[test]
    fn walltime_kill() {
        let m = Machine::new(4, 1).unwrap();
        let r = fcfs(m, vec![job(0, 0, 4, 50, 500)]);
        assert_eq!(r.jobs[0].end, 50);
    }

    #[test]
    fn easy_backfill_fills_hole_without_delay() {
        let m = Machine::new(10, 1).unwrap();
        let r = fcfs(
            m,
            vec![
                job(0, 0, 6, 100, 100),
                job(1, 1, 8, 100, 100), // blocked until t=100
                job(2, 2, 4, 90, 90),   // ends at 92 <= 100: backfills
                job(3, 3, 2, 500, 500), // no free nodes until job 2 ends, then uses the spare 2
            ],
        );
        assert_eq!(starts(&r), vec![0, 100, 2, 92]);
        assert_eq!(r.jobs[1].first_shadow, Some(100));
    }

    #[test]
    fn min_alloc_rounding_applies_to_default_queue_only() {
        let m = Machine::new(256, 128).unwrap();
        let default = Workload::new("d", vec![job(0, 0, 1, 100, 100)]);
        let injected = Workload::new("i", vec![Job::new(0, 0, 1, 100, 100, Source::Capacity)]);
        let r = simulate(m, &default, Some(&injected), PolicyKind::Wfp).unwrap();
        assert_eq!(r.jobs[0].allocated_nodes, 128);
        assert_eq!(r.jobs[1].allocated_nodes, 1);
        assert_eq!(r.jobs[1].queue_class, QueueClass::Backfill);
    }

    #[test]
    fn injected_jobs_start_when_default_queue_empty() {
        let m = Machine::new(8, 1).unwrap();
        let injected = Workload::new(
            "i",
            (0..4).map(|i| Job::new(i, 0, 2, 10, 10, Source::Capacity)).collect(),
        );
        let r = simulate(m, &Workload::empty("d"), Some(&injected), PolicyKind::Fcfs).unwrap();
        assert!(r.jobs.iter().all(|j| j.start == 0));
    }

    #[test]
    fn injected_job_uses_extra_nodes() {
        let m = Machine::new(10, 1).unwrap();
        let default = Workload::new("d", vec![job(0, 0, 6, 100, 100), job(1, 1, 8, 100, 100)]);
        let injected = Workload::new(
            "i",
            vec![
                Job::new(0, 2, 1, 1000, 1000, Source::Capacity), // fits the 2 spare nodes
                Job::new(1, 2, 2, 1000, 1000, Source::Capacity), // 1 spare left: waits
            ],
        );
        let r = simulate(m, &default, Some(&injected), PolicyKind::Fcfs).unwrap();
        assert_eq!(starts(&r), vec![0, 100, 2, 200]);
    }

    #[test]
    fn injected_jobs_never_head() {
        // A blocked default head keeps injected jobs out unless they cannot delay it.
        let m = Machine::new(4, 1).unwrap();
        let default = Workload::new("d", vec![job(0, 0, 3, 100, 100), job(1, 1, 4, 100, 100)]);
        let injected = Workload::new("i", vec![Job::new(0, 0, 2, 50, 50, Source::Capacity)]);
        let r = simulate(m, &default, Some(&injected), PolicyKind::Fcfs).unwrap();
        // Default head arrives first and takes 3 nodes; the 2-node injected
        // job cannot fit until t=100, then job 1 wins the whole machine.
        assert_eq!(starts(&r), vec![0, 100, 200]);
    }

    #[test]
    fn oversized_jobs_are_flagged() {
        let m = Machine::new(8, 1).unwrap();
        let r = fcfs(m, vec![job(0, 0, 9, 10, 10), job(1, 0, 8, 10, 10)]);
        assert_eq!(r.unschedulable.len(), 1);
        assert_eq!(r.jobs.len(), 1);
        assert_eq!(r.jobs[0].id, 1);
    }

    #[test]
    fn empty_inputs_rejected() {
        let m = Machine::new(8, 1).unwrap();
        assert!(matches!(
            simulate(m, &Workload::empty("a"), None, PolicyKind::Fcfs),
            Err(Error::EmptySimulation)
        ));
    }

    #[test]
    fn downsize_reference_sizes() {
        let unified = Machine::unified_reference();
        let sizes: Vec<_> = [100.0, 95.0, 90.0, 85.0, 80.0]
            .iter()
            .map(|&f| downsize(&unified, f).unwrap().total_nodes)
            .collect();
        assert_eq!(sizes, vec![14_048, 13_345, 12_643, 11_940, 11_238]);
        assert!(downsize(&unified, 0.0).is_err());
        assert!(downsize(&unified, 100.5).is_err());
        assert!(matches!(
            downsize(&Machine::new(200, 128).unwrap(), 50.0),
            Err(Error::MachineTooSmall { .. })
        ));
    }

    #[test]
    fn event_ordering() {
        let e = |time, kind, sequence| Event { time, kind, sequence };
        let mut v = [
            e(5, EventKind::Tick, 0),
            e(5, EventKind::Arrival(0), 1),
            e(5, EventKind::Completion(1), 2),
            e(4, EventKind::Tick, 3),
        ];
        v.sort();
        assert_eq!(v[0].time, 4);
        assert!(matches!(v[1].kind, EventKind::Completion(_)));
        assert!(matches!(v[2].kind, EventKind::Arrival(_)));
        assert!(matches!(v[3].kind, EventKind::Tick));
    }

    #[test]
    fn resort_tick_does_not_change_fcfs() {
        let m = Machine::new(10, 1).unwrap();
        let jobs: Vec<_> = (0..30)
            .map(|i| job(i, i * 7, 1 + (i as u32 * 3) % 10, 50 + i * 11, 20 + i * 5))
            .collect();
        let w = Workload::new("t", jobs);
        let plain = simulate(m, &w, None, PolicyKind::Fcfs).unwrap();
        let mut opts = SimOptions::new(PolicyKind::Fcfs);
        opts.resort_tick = Some(13);
        let ticked = simulate_with(m, &w, None, &opts).unwrap();
        assert_eq!(starts(&plain), starts(&ticked));
    }

    #[test]
    fn remove_positions_keeps_order() {
        let mut v = vec![10, 11, 12, 13, 14];
        remove_positions(&mut v, &[0, 2, 4]);
        assert_eq!(v, vec![11, 13]);
    }
}
