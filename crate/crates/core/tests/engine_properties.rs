mod support;

use proptest::prelude::*;

use unisched::engine::{simulate, simulate_with, SimOptions};
use unisched::model::QueueClass;
use unisched::workload::Workload;
use unisched::{Job, Machine, PolicyKind, Source};

use support::{brute_force_starts, causal, conserves_nodes, engine_starts, no_delay_violations, random_instance, rng};

#[test]
fn matches_brute_force_replayer() {
    let mut r = rng(11);
    for case in 0..200 {
        let inst = random_instance(&mut r, 8, 16, false);
        let res = simulate(inst.machine, &inst.default_workload(), None, PolicyKind::Fcfs).unwrap();
        assert_eq!(engine_starts(&res), brute_force_starts(&inst), "case {case}: {inst:?}");
    }
}

#[test]
fn matches_brute_force_replayer_with_injection() {
    let mut r = rng(12);
    for case in 0..200 {
        let inst = random_instance(&mut r, 8, 16, true);
        let inj = inst.injected_workload();
        let res = simulate(inst.machine, &inst.default_workload(), inj.as_ref(), PolicyKind::Fcfs).unwrap();
        assert_eq!(engine_starts(&res), brute_force_starts(&inst), "case {case}: {inst:?}");
    }
}

#[test]
fn full_machine_jobs_start_in_arrival_order() {
    let m = Machine::new(8, 1).unwrap();
    let jobs: Vec<Job> = (0..20)
        .map(|i| Job::new(i, (i * 7) % 13, 8, 5 + i % 4, 3 + i % 5, Source::Capability))
        .collect();
    let w = Workload::new("full", jobs);
    let opts = SimOptions {
        backfill: false,
        ..SimOptions::new(PolicyKind::Fcfs)
    };
    let res = simulate_with(m, &w, None, &opts).unwrap();
    let mut recs = res.jobs.clone();
    recs.sort_by_key(|j| (j.arrival, j.id));
    assert!(recs.windows(2).all(|p| p[0].start <= p[1].start));
    assert!(recs.windows(2).all(|p| p[0].end <= p[1].start));
}

#[test]
fn oversized_injected_job_is_flagged_not_fatal() {
    let m = Machine::new(4, 1).unwrap();
    let w = Workload::new("d", vec![Job::new(0, 0, 4, 10, 10, Source::Capability)]);
    let inj = Workload::new("i", vec![Job::new(0, 0, 5, 10, 10, Source::Capacity)]);
    let res = simulate(m, &w, Some(&inj), PolicyKind::Fcfs).unwrap();
    assert_eq!(res.jobs.len(), 1);
    assert_eq!(res.unschedulable.len(), 1);
    assert_eq!(res.unschedulable[0].queue_class, QueueClass::Backfill);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_causality_and_no_delay(seed in any::<u64>(), wfp in any::<bool>(), injected in any::<bool>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 60, 64, injected);
        let policy = if wfp { PolicyKind::Wfp } else { PolicyKind::Fcfs };
        let inj = inst.injected_workload();
        let res = simulate(inst.machine, &inst.default_workload(), inj.as_ref(), policy).unwrap();
        prop_assert!(conserves_nodes(&res));
        prop_assert!(causal(&res, &inst));
        prop_assert!(no_delay_violations(&res).is_empty());
        prop_assert_eq!(res.jobs.len(), inst.default.len() + inst.injected.len());
        if !wfp {
            prop_assert!(res.jobs.iter().all(|j| !j.lost_head));
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 40, 32, true);
        let inj = inst.injected_workload();
        let a = simulate(inst.machine, &inst.default_workload(), inj.as_ref(), PolicyKind::Wfp).unwrap();
        let b = simulate(inst.machine, &inst.default_workload(), inj.as_ref(), PolicyKind::Wfp).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn disabling_backfill_never_starts_jobs_out_of_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 30, 16, false);
        let opts = SimOptions { backfill: false, ..SimOptions::new(PolicyKind::Fcfs) };
        let res = simulate_with(inst.machine, &inst.default_workload(), None, &opts).unwrap();
        let mut recs = res.jobs.clone();
        recs.sort_by_key(|j| (j.arrival, j.id));
        prop_assert!(recs.windows(2).all(|p| p[0].start <= p[1].start));
    }
}
