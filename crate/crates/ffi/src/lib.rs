//! C interface to the simulator.
//!
//! Workloads and simulation results are opaque handles owned by the caller
//! and released with the matching `*_free` function. Every fallible call
//! returns a [`UnischedStatus`]; on failure a description is available from
//! [`unisched_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use unisched::engine::{downsize, simulate_with, SimOptions};
use unisched::experiment::{analyze, ReportConfig, RunReport};
use unisched::metrics::MetricWindow;
use unisched::model::QueueClass;
use unisched::workload::{parse_trace, synthesize, SynthPreset, TraceFormat, Workload};
use unisched::{Error, Job, Machine, PolicyKind, SimulationResult, Source};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnischedStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Simulation = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnischedSource {
    Capability = 0,
    Capacity = 1,
}

impl From<UnischedSource> for Source {
    fn from(s: UnischedSource) -> Self {
        match s {
            UnischedSource::Capability => Source::Capability,
            UnischedSource::Capacity => Source::Capacity,
        }
    }
}

impl From<Source> for UnischedSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Capability => UnischedSource::Capability,
            Source::Capacity => UnischedSource::Capacity,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnischedPolicy {
    Fcfs = 0,
    Wfp = 1,
}

impl From<UnischedPolicy> for PolicyKind {
    fn from(p: UnischedPolicy) -> Self {
        match p {
            UnischedPolicy::Fcfs => PolicyKind::Fcfs,
            UnischedPolicy::Wfp => PolicyKind::Wfp,
        }
    }
}

/// Machine and scheduler settings for [`unisched_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UnischedOptions {
    pub total_nodes: u32,
    pub min_alloc: u32,
    pub policy: UnischedPolicy,
    pub backfill: bool,
}

/// One scheduled job.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UnischedJobRecord {
    pub id: u64,
    /// 0 for capability, 1 for capacity.
    pub source: u32,
    /// True for jobs submitted through the backfill queue.
    pub injected: bool,
    pub arrival: u64,
    pub start: u64,
    pub end: u64,
    pub requested_nodes: u32,
    pub allocated_nodes: u32,
}

/// Headline metrics. Means are NaN when no job of that source ran.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UnischedSummary {
    pub jobs: u64,
    pub unschedulable: u64,
    pub peak_allocated_nodes: u64,
    pub utilization_allocated: f64,
    pub utilization_effective: f64,
    pub capability_mean_wait: f64,
    pub capacity_mean_wait: f64,
}

/// Opaque list of jobs.
pub struct UnischedWorkload {
    jobs: Vec<Job>,
}

/// Opaque simulation outcome.
pub struct UnischedResult {
    result: SimulationResult,
    policy: PolicyKind,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> UnischedStatus {
    match e {
        Error::Io { .. } => UnischedStatus::Io,
        Error::UnknownFormat(_) | Error::Malformed { .. } | Error::EmptyTrace { .. } => UnischedStatus::Parse,
        Error::EmptySimulation | Error::Unschedulable { .. } | Error::NotBlocked { .. } => UnischedStatus::Simulation,
        _ => UnischedStatus::InvalidArgument,
    }
}

fn fail(status: UnischedStatus, msg: impl Into<String>) -> UnischedStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> UnischedStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, converting panics into [`UnischedStatus::Panic`].
fn guard(f: impl FnOnce() -> UnischedStatus) -> UnischedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(UnischedStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, UnischedStatus> {
    if p.is_null() {
        return Err(fail(UnischedStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UnischedStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn emit<T>(out: *mut *mut T, value: T) -> UnischedStatus {
    // SAFETY: callers check `out` for null before calling.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    UnischedStatus::Ok
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn unisched_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates an empty workload.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_new(out: *mut *mut UnischedWorkload) -> UnischedStatus {
    guard(|| {
        if out.is_null() {
            return fail(UnischedStatus::NullArgument, "out is null");
        }
        emit(out, UnischedWorkload { jobs: Vec::new() })
    })
}

/// Appends one job. Ids must be unique within a workload.
///
/// # Safety
/// `w` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_push(
    w: *mut UnischedWorkload,
    id: u64,
    arrival: u64,
    nodes: u32,
    walltime: u64,
    runtime: u64,
    source: UnischedSource,
) -> UnischedStatus {
    guard(|| {
        let Some(w) = w.as_mut() else {
            return fail(UnischedStatus::NullArgument, "workload is null");
        };
        let job = Job::new(id, arrival, nodes, walltime, runtime, source.into());
        if !job.is_valid() {
            return fail(
                UnischedStatus::InvalidArgument,
                format!("job {id}: nodes, walltime and runtime must be positive"),
            );
        }
        if w.jobs.iter().any(|j| j.id == id) {
            return fail(UnischedStatus::InvalidArgument, format!("duplicate job id {id}"));
        }
        w.jobs.push(job);
        UnischedStatus::Ok
    })
}

/// Reads an SWF or CSV trace. `format` is "swf", "csv" or null to infer it
/// from the file extension.
///
/// # Safety
/// `path` and a non-null `format` must be NUL-terminated strings; `out` must
/// be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_load(
    path: *const c_char,
    format: *const c_char,
    source: UnischedSource,
    out: *mut *mut UnischedWorkload,
) -> UnischedStatus {
    guard(|| {
        if out.is_null() {
            return fail(UnischedStatus::NullArgument, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => Path::new(p),
            Err(s) => return s,
        };
        let format = if format.is_null() {
            TraceFormat::from_path(path)
        } else {
            match str_arg(format, "format").map(|f| f.parse::<TraceFormat>()) {
                Ok(Ok(f)) => f,
                Ok(Err(e)) => return from_error(e),
                Err(s) => return s,
            }
        };
        match parse_trace(path, format, source.into()) {
            Ok(t) => emit(
                out,
                UnischedWorkload {
                    jobs: t.workload.into_jobs(),
                },
            ),
            Err(e) => from_error(e),
        }
    })
}

/// Generates `count` jobs from a named preset ("capability-like" or
/// "capacity-like").
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_synthesize(
    preset: *const c_char,
    count: usize,
    seed: u64,
    out: *mut *mut UnischedWorkload,
) -> UnischedStatus {
    guard(|| {
        if out.is_null() {
            return fail(UnischedStatus::NullArgument, "out is null");
        }
        let preset = match str_arg(preset, "preset").map(|p| p.parse::<SynthPreset>()) {
            Ok(Ok(p)) => p,
            Ok(Err(e)) => return from_error(e),
            Err(s) => return s,
        };
        match synthesize(&preset.spec(count, seed)) {
            Ok(w) => emit(out, UnischedWorkload { jobs: w.into_jobs() }),
            Err(e) => from_error(e),
        }
    })
}

/// Number of jobs in the workload; 0 for null.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_len(w: *const UnischedWorkload) -> usize {
    w.as_ref().map_or(0, |w| w.jobs.len())
}

/// # Safety
/// `w` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unisched_workload_free(w: *mut UnischedWorkload) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Simulates `default_jobs` with `injected` (may be null) submitted to the
/// backfill queue.
///
/// # Safety
/// Handles must be live; `options` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn unisched_simulate(
    default_jobs: *const UnischedWorkload,
    injected: *const UnischedWorkload,
    options: *const UnischedOptions,
    out: *mut *mut UnischedResult,
) -> UnischedStatus {
    guard(|| {
        let (Some(d), Some(o)) = (default_jobs.as_ref(), options.as_ref()) else {
            return fail(UnischedStatus::NullArgument, "default_jobs and options are required");
        };
        if out.is_null() {
            return fail(UnischedStatus::NullArgument, "out is null");
        }
        let machine = match Machine::new(o.total_nodes, o.min_alloc) {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        let opts = SimOptions {
            backfill: o.backfill,
            ..SimOptions::new(o.policy.into())
        };
        let dw = Workload::new("default", d.jobs.clone());
        let iw = injected.as_ref().map(|i| Workload::new("injected", i.jobs.clone()));
        match simulate_with(machine, &dw, iw.as_ref(), &opts) {
            Ok(result) => emit(
                out,
                UnischedResult {
                    result,
                    policy: opts.policy,
                },
            ),
            Err(e) => from_error(e),
        }
    })
}

/// Shrinks a machine to `fraction` percent of its nodes (rounded down).
///
/// # Safety
/// `out_nodes` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_downsize(
    total_nodes: u32,
    min_alloc: u32,
    fraction: f64,
    out_nodes: *mut u32,
) -> UnischedStatus {
    guard(|| {
        if out_nodes.is_null() {
            return fail(UnischedStatus::NullArgument, "out_nodes is null");
        }
        let m = match Machine::new(total_nodes, min_alloc).and_then(|m| downsize(&m, fraction)) {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        *out_nodes = m.total_nodes;
        UnischedStatus::Ok
    })
}

/// Number of scheduled jobs; 0 for null.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unisched_result_job_count(r: *const UnischedResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.jobs.len())
}

/// Copies the `index`-th job record (input order) into `out`.
///
/// # Safety
/// `r` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_result_job(
    r: *const UnischedResult,
    index: usize,
    out: *mut UnischedJobRecord,
) -> UnischedStatus {
    guard(|| {
        let (Some(r), Some(out)) = (r.as_ref(), out.as_mut()) else {
            return fail(UnischedStatus::NullArgument, "result and out are required");
        };
        let Some(j) = r.result.jobs.get(index) else {
            return fail(
                UnischedStatus::OutOfRange,
                format!("index {index} out of range for {} jobs", r.result.jobs.len()),
            );
        };
        *out = UnischedJobRecord {
            id: j.id,
            source: UnischedSource::from(j.source) as u32,
            injected: j.queue_class == QueueClass::Backfill,
            arrival: j.arrival,
            start: j.start,
            end: j.end,
            requested_nodes: j.requested_nodes,
            allocated_nodes: j.allocated_nodes,
        };
        UnischedStatus::Ok
    })
}

fn report(r: &UnischedResult, bucket: u64, truncate: bool) -> Result<RunReport, UnischedStatus> {
    if bucket == 0 {
        return Err(fail(UnischedStatus::InvalidArgument, "bucket must be positive"));
    }
    let cfg = ReportConfig {
        bucket,
        window: if truncate {
            MetricWindow::LastArrival
        } else {
            MetricWindow::Full
        },
        ..ReportConfig::default()
    };
    Ok(analyze(&r.result, "ffi", r.policy, &cfg, Vec::new()))
}

/// Fills `out` with headline metrics over `bucket`-second buckets. With
/// `truncate`, metrics stop at the last arrival.
///
/// # Safety
/// `r` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_result_summary(
    r: *const UnischedResult,
    bucket: u64,
    truncate: bool,
    out: *mut UnischedSummary,
) -> UnischedStatus {
    guard(|| {
        let (Some(r), Some(out)) = (r.as_ref(), out.as_mut()) else {
            return fail(UnischedStatus::NullArgument, "result and out are required");
        };
        let rep = match report(r, bucket, truncate) {
            Ok(rep) => rep,
            Err(s) => return s,
        };
        let s = &rep.summary;
        *out = UnischedSummary {
            jobs: s.jobs as u64,
            unschedulable: s.unschedulable as u64,
            peak_allocated_nodes: s.peak_allocated_nodes,
            utilization_allocated: s.utilization.allocated_mean,
            utilization_effective: s.utilization.effective_mean,
            capability_mean_wait: s.mean_wait(Source::Capability).unwrap_or(f64::NAN),
            capacity_mean_wait: s.mean_wait(Source::Capacity).unwrap_or(f64::NAN),
        };
        UnischedStatus::Ok
    })
}

/// Full run summary as JSON. Release the string with [`unisched_string_free`].
///
/// # Safety
/// `r` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn unisched_result_summary_json(
    r: *const UnischedResult,
    bucket: u64,
    truncate: bool,
    out: *mut *mut c_char,
) -> UnischedStatus {
    guard(|| {
        let Some(r) = r.as_ref() else {
            return fail(UnischedStatus::NullArgument, "result is null");
        };
        if out.is_null() {
            return fail(UnischedStatus::NullArgument, "out is null");
        }
        let rep = match report(r, bucket, truncate) {
            Ok(rep) => rep,
            Err(s) => return s,
        };
        let text = serde_json::to_string(&rep.summary).expect("summary serializes");
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        UnischedStatus::Ok
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unisched_result_free(r: *mut UnischedResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unisched_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
