//! Trace-driven batch scheduling simulator for studying how capability
//! (large, long) and capacity (small, short) HPC workloads behave when they
//! share a machine.
//!
//! Two experiments are supported. *Fusion* merges both traces onto one
//! unified machine, optionally downsized, under FCFS with EASY backfilling.
//! *Injection* keeps the capability workload in the default queue under WFP
//! and feeds selected capacity jobs through a backfill-only queue.

pub mod backfill;
pub mod config;
pub mod engine;
mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod workload;

pub use error::{Error, Result};
pub use model::{Job, Machine, Nodes, QueueClass, SimulationResult, Source, Time};
pub use policy::PolicyKind;
