//! Shared test helpers: random small workloads and a brute-force replayer.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unisched::model::{JobId, QueueClass, SimulationResult};
use unisched::workload::Workload;
use unisched::{Job, Machine, Source, Time};

#[derive(Debug, Clone)]
pub struct Instance {
    pub machine: Machine,
    pub default: Vec<Job>,
    pub injected: Vec<Job>,
}

impl Instance {
    pub fn default_workload(&self) -> Workload {
        Workload::new("default", self.default.clone())
    }

    pub fn injected_workload(&self) -> Option<Workload> {
        (!self.injected.is_empty()).then(|| Workload::new("injected", self.injected.clone()))
    }
}

/// A random instance: at most `max_jobs` default jobs, optionally some
/// injected ones, on at most `max_nodes` nodes. Some runtimes overrun their
/// walltime to exercise the kill rule.
pub fn random_instance(rng: &mut ChaCha8Rng, max_jobs: usize, max_nodes: u32, with_injected: bool) -> Instance {
    let total = rng.random_range(1..=max_nodes);
    let min_alloc = [1, 1, 2, 4][rng.random_range(0..4)].min(total);
    let machine = Machine::new(total, min_alloc).unwrap();
    let horizon = rng.random_range(1..=40u64);
    let make = |rng: &mut ChaCha8Rng, count: usize, base_id: JobId, source: Source| -> Vec<Job> {
        (0..count)
            .map(|i| {
                let wall = rng.random_range(1..=20u64);
                let actual = if rng.random_bool(0.2) {
                    wall + rng.random_range(1..=5u64)
                } else {
                    rng.random_range(1..=wall)
                };
                Job::new(
                    base_id + i as JobId,
                    rng.random_range(0..horizon),
                    rng.random_range(1..=total),
                    wall,
                    actual,
                    source,
                )
            })
            .collect()
    };
    let n = rng.random_range(1..=max_jobs);
    let default = make(rng, n, 0, Source::Capability);
    let injected = if with_injected {
        let m = rng.random_range(0..=max_jobs / 2);
        make(rng, m, 1_000, Source::Capacity)
    } else {
        Vec::new()
    };
    Instance {
        machine,
        default,
        injected,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Running {
    alloc: u32,
    start: Time,
    walltime: Time,
    actual_end: Time,
}

/// Replays an instance one second at a time, applying the scheduling rules
/// directly: start queue heads in arrival order while they fit; if the head
/// is blocked, find the first second at which it could start assuming every
/// running job holds its nodes for its full walltime; start any later job
/// that fits now and leaves the head able to start at that second. Injected
/// jobs are considered after the default queue and never become the head.
///
/// Returns start times keyed by (queue class, job id).
pub fn brute_force_starts(inst: &Instance) -> HashMap<(QueueClass, JobId), Time> {
    let total = inst.machine.total_nodes;
    let min_alloc = inst.machine.min_alloc;
    let alloc_default = |j: &Job| j.requested_nodes.max(min_alloc);

    let mut pending_default: Vec<&Job> = inst.default.iter().collect();
    pending_default.sort_by_key(|j| (j.arrival_time, j.id));
    let mut pending_injected: Vec<&Job> = inst.injected.iter().collect();
    pending_injected.sort_by_key(|j| (j.arrival_time, j.id));

    let mut queue: Vec<&Job> = Vec::new();
    let mut bqueue: Vec<&Job> = Vec::new();
    let mut running: Vec<Running> = Vec::new();
    let mut starts = HashMap::new();
    let expected = inst.default.len() + inst.injected.len();

    let free_at = |running: &[Running], s: Time| -> i64 {
        total as i64
            - running
                .iter()
                .filter(|r| r.start + r.walltime > s)
                .map(|r| r.alloc as i64)
                .sum::<i64>()
    };

    let mut t: Time = 0;
    while starts.len() < expected {
        running.retain(|r| r.actual_end != t);
        queue.extend(pending_default.iter().filter(|j| j.arrival_time == t));
        bqueue.extend(pending_injected.iter().filter(|j| j.arrival_time == t));

        let used: u32 = running.iter().map(|r| r.alloc).sum();
        let mut free = total - used;

        queue.sort_by_key(|j| (j.arrival_time, j.id));
        while let Some(head) = queue.first() {
            let a = alloc_default(head);
            if a > free {
                break;
            }
            free -= a;
            running.push(Running {
                alloc: a,
                start: t,
                walltime: head.requested_walltime,
                actual_end: t + head.effective_runtime(),
            });
            starts.insert((QueueClass::Default, head.id), t);
            queue.remove(0);
        }

        if queue.is_empty() {
            let mut i = 0;
            while i < bqueue.len() {
                let j = bqueue[i];
                if j.requested_nodes <= free {
                    free -= j.requested_nodes;
                    running.push(Running {
                        alloc: j.requested_nodes,
                        start: t,
                        walltime: j.requested_walltime,
                        actual_end: t + j.effective_runtime(),
                    });
                    starts.insert((QueueClass::Backfill, j.id), t);
                    bqueue.remove(i);
                } else {
                    i += 1;
                }
            }
        } else {
            let need = alloc_default(queue[0]) as i64;
            let mut shadow = t;
            while free_at(&running, shadow) < need {
                shadow += 1;
            }
            let mut try_start =
                |j: &Job, class: QueueClass, alloc: u32, running: &mut Vec<Running>, free: &mut u32| -> bool {
                    if alloc > *free {
                        return false;
                    }
                    running.push(Running {
                        alloc,
                        start: t,
                        walltime: j.requested_walltime,
                        actual_end: t + j.effective_runtime(),
                    });
                    if free_at(running, shadow) >= need {
                        *free -= alloc;
                        starts.insert((class, j.id), t);
                        true
                    } else {
                        running.pop();
                        false
                    }
                };
            let mut i = 1;
            while i < queue.len() {
                let j = queue[i];
                if try_start(j, QueueClass::Default, alloc_default(j), &mut running, &mut free) {
                    queue.remove(i);
                } else {
                    i += 1;
                }
            }
            let mut i = 0;
            while i < bqueue.len() {
                let j = bqueue[i];
                if try_start(j, QueueClass::Backfill, j.requested_nodes, &mut running, &mut free) {
                    bqueue.remove(i);
                } else {
                    i += 1;
                }
            }
        }
        t += 1;
        assert!(t < 1_000_000, "oracle did not terminate");
    }
    starts
}

pub fn engine_starts(r: &SimulationResult) -> HashMap<(QueueClass, JobId), Time> {
    r.jobs.iter().map(|j| ((j.queue_class, j.id), j.start)).collect()
}

/// Checks that allocated nodes never exceed the machine at any instant.
pub fn conserves_nodes(r: &SimulationResult) -> bool {
    r.peak_allocation() <= r.machine.total_nodes as u64
}

/// Start after arrival, end = start + effective runtime.
pub fn causal(r: &SimulationResult, inst: &Instance) -> bool {
    let by_key: HashMap<(QueueClass, JobId), &Job> = inst
        .default
        .iter()
        .map(|j| ((QueueClass::Default, j.id), j))
        .chain(inst.injected.iter().map(|j| ((QueueClass::Backfill, j.id), j)))
        .collect();
    r.jobs.iter().all(|rec| {
        let j = by_key[&(rec.queue_class, rec.id)];
        rec.start >= j.arrival_time && rec.end == rec.start + j.effective_runtime()
    })
}

/// Every default-queue job that was given a reservation and kept it started
/// no later than the first shadow time computed for it.
pub fn no_delay_violations(r: &SimulationResult) -> Vec<JobId> {
    r.jobs
        .iter()
        .filter(|j| j.queue_class == QueueClass::Default && !j.lost_head)
        .filter(|j| j.first_shadow.is_some_and(|s| j.start > s))
        .map(|j| j.id)
        .collect()
}
