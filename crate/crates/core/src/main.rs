use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use unisched::config::{parse_source, Command, ExperimentConfig, TraceSpec};
use unisched::engine::SimOptions;
use unisched::experiment::{
    characterize_size_bins, fuse, inject, run_single, write_characterization, write_fusion_reports,
    write_injection_reports, write_run_report, ReportConfig, FUSION_FRACTIONS,
};
use unisched::metrics::MetricWindow;
use unisched::workload::{characterize, normalize_arrivals, write_csv, Bins, SynthPreset, Workload};
use unisched::{Machine, Nodes, PolicyKind, Source, Time};

#[derive(Parser, Debug)]
#[command(
    name = "unisched",
    version,
    about = "Capability/capacity workload fusion and injection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Size and runtime histograms of one or more traces.
    Characterize,
    /// One trace on one machine.
    Simulate,
    /// Merge two traces onto a unified machine and sweep its size.
    Fuse,
    /// Inject filtered capacity jobs into a capability machine's backfill queue.
    Inject,
    /// Write a synthetic trace as CSV.
    Synth,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (a file for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic traces.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Unified machine size in percent; repeatable.
    #[arg(long, global = true)]
    fraction: Vec<f64>,
    /// Injection filter (W1-W6) for `inject`, or synthetic preset otherwise.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    policy: Option<PolicyKind>,
    #[arg(long, global = true)]
    min_alloc: Option<Nodes>,
    /// Machine size in nodes.
    #[arg(long, global = true)]
    nodes: Option<Nodes>,
    /// Utilization bucket width in seconds.
    #[arg(long, global = true)]
    bucket: Option<Time>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Trace file or `synth:<preset>[:<count>|:<days>d][@<seed>]`; repeatable.
    #[arg(long, global = true)]
    trace: Vec<TraceSpec>,
    #[arg(long, global = true)]
    capability: Option<TraceSpec>,
    #[arg(long, global = true)]
    capacity: Option<TraceSpec>,
    /// Tag for trace files given with --trace.
    #[arg(long, global = true)]
    source: Option<String>,
    /// Injection filter: largest size kept.
    #[arg(long, global = true)]
    max_nodes: Option<Nodes>,
    /// Injection filter: longest runtime kept, seconds.
    #[arg(long, global = true)]
    max_runtime: Option<Time>,
    /// Synthetic job count.
    #[arg(long, global = true)]
    count: Option<usize>,
    /// Synthetic duration in days.
    #[arg(long, global = true)]
    days: Option<f64>,
    /// Skip the injected run.
    #[arg(long, global = true)]
    baseline_only: bool,
    /// Compute metrics up to the last arrival instead of the last completion.
    #[arg(long, global = true)]
    truncate: bool,
}

/// Flag values layered over the config file.
fn merge(mut cfg: ExperimentConfig, c: &Common) -> Result<ExperimentConfig> {
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if !c.fraction.is_empty() {
        cfg.fractions = c.fraction.clone();
    }
    if c.policy.is_some() {
        cfg.policy = c.policy;
    }
    if c.min_alloc.is_some() {
        cfg.machine.min_alloc = c.min_alloc;
    }
    if c.nodes.is_some() {
        cfg.machine.total_nodes = c.nodes;
    }
    if c.bucket.is_some() {
        cfg.bucket = c.bucket;
    }
    if c.jobs.is_some() {
        cfg.jobs = c.jobs;
    }
    if !c.trace.is_empty() {
        cfg.traces = c.trace.clone();
    }
    if let Some(s) = &c.source {
        parse_source(s)?;
        for t in &mut cfg.traces {
            t.source = Some(s.clone());
        }
    }
    if c.capability.is_some() {
        cfg.capability = c.capability.clone();
    }
    if c.capacity.is_some() {
        cfg.capacity = c.capacity.clone();
    }
    if c.max_nodes.is_some() {
        cfg.filter.max_nodes = c.max_nodes;
    }
    if c.max_runtime.is_some() {
        cfg.filter.max_runtime = c.max_runtime;
    }
    if c.baseline_only {
        cfg.baseline_only = true;
    }
    if c.truncate {
        cfg.window = Some(MetricWindow::LastArrival);
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Ctx {
    cfg: ExperimentConfig,
    /// The --preset flag, interpreted per command.
    preset: Option<String>,
    count: Option<usize>,
    days: Option<f64>,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(1)
    }

    fn out(&self, default: &str) -> PathBuf {
        self.cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn parallelism(&self) -> usize {
        self.cfg.jobs.unwrap_or(1)
    }

    fn report_config(&self) -> ReportConfig {
        let d = ReportConfig::default();
        let b = &self.cfg.bins;
        ReportConfig {
            bucket: self.cfg.bucket.unwrap_or(d.bucket),
            window: self.cfg.window.unwrap_or(d.window),
            capability_size_bins: b.capability_sizes.clone().unwrap_or(d.capability_size_bins),
            capacity_size_bins: b.capacity_sizes.clone().unwrap_or(d.capacity_size_bins),
            runtime_bins: b.runtimes.clone().unwrap_or(d.runtime_bins),
        }
    }

    fn machine(&self, default: Machine) -> Result<Machine> {
        let m = &self.cfg.machine;
        Ok(Machine::new(
            m.total_nodes.unwrap_or(default.total_nodes),
            m.min_alloc.unwrap_or(default.min_alloc),
        )?)
    }

    fn options(&self, default_policy: PolicyKind) -> SimOptions {
        SimOptions {
            policy: self.cfg.policy.unwrap_or(default_policy),
            backfill: self.cfg.backfill.unwrap_or(true),
            resort_tick: self.cfg.resort_tick,
            capability_min_alloc: self.cfg.capability_min_alloc,
        }
    }

    /// `--trace` list, falling back to `--preset` as a synthetic source.
    fn trace_specs(&self) -> Result<Vec<TraceSpec>> {
        if !self.cfg.traces.is_empty() {
            return Ok(self.cfg.traces.clone());
        }
        match &self.preset {
            Some(p) => Ok(vec![TraceSpec {
                preset: Some(p.clone()),
                count: self.count,
                days: self.days,
                ..TraceSpec::default()
            }]),
            None => bail!("no trace given (use --trace, --preset or a config file)"),
        }
    }

    /// The (capability, capacity) pair for fusion and injection.
    fn pair(&self) -> Result<(TraceSpec, TraceSpec)> {
        let mut extra = self.cfg.traces.iter().cloned();
        let cap = self.cfg.capability.clone().or_else(|| extra.next());
        let capa = self.cfg.capacity.clone().or_else(|| extra.next());
        match (cap, capa) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => bail!("two traces are needed: a capability trace and a capacity trace"),
        }
    }

    fn load_pair(&self, warnings: &mut Vec<String>) -> Result<(Workload, Workload)> {
        let (a, b) = self.pair()?;
        let seed = self.seed();
        let cap = a
            .load(Source::Capability, seed)
            .with_context(|| format!("loading {a}"))?;
        let capa = b
            .load(Source::Capacity, seed.wrapping_add(1))
            .with_context(|| format!("loading {b}"))?;
        warnings.extend(cap.warnings);
        warnings.extend(capa.warnings);
        let (mut w1, mut w2) = (cap.workload, capa.workload);
        normalize_arrivals(&mut [&mut w1, &mut w2]);
        Ok((w1, w2))
    }
}

fn emit_warnings(ws: &[String]) {
    for w in ws {
        warn!("{w}");
    }
}

fn cmd_characterize(ctx: &Ctx) -> Result<()> {
    let specs = ctx.trace_specs()?;
    let size_bins = ctx
        .cfg
        .bins
        .characterize_sizes
        .clone()
        .unwrap_or_else(characterize_size_bins);
    let runtime_bins = ctx.cfg.bins.runtimes.clone().unwrap_or_else(Bins::runtimes);
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let loaded = spec
            .load(Source::Capability, ctx.seed().wrapping_add(i as u64))
            .with_context(|| format!("loading {spec}"))?;
        warnings.extend(loaded.warnings);
        let mut c = characterize(&loaded.workload, &size_bins, &runtime_bins);
        if out
            .iter()
            .any(|o: &unisched::workload::Characterization| o.label == c.label)
        {
            c.label = format!("{}_{}", c.label, i);
        }
        info!("{}: {} jobs", c.label, c.job_count);
        out.push(c);
    }
    emit_warnings(&warnings);
    let dir = ctx.out("out/characterize");
    write_characterization(&dir, &out, &warnings)?;
    info!("wrote {}", dir.display());
    Ok(())
}

fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let specs = ctx.trace_specs()?;
    if specs.len() != 1 {
        bail!("simulate takes exactly one trace, got {}", specs.len());
    }
    let spec = &specs[0];
    let default_source = match spec.preset.as_deref() {
        Some(p) => p.parse::<SynthPreset>()?.source(),
        None => Source::Capability,
    };
    let loaded = spec
        .load(default_source, ctx.seed())
        .with_context(|| format!("loading {spec}"))?;
    let mut workload = loaded.workload;
    normalize_arrivals(&mut [&mut workload]);
    let source = workload.jobs().first().map_or(default_source, |j| j.source);
    let (machine, policy) = match source {
        Source::Capability => (Machine::capability_reference(), PolicyKind::Wfp),
        Source::Capacity => (Machine::capacity_reference(), PolicyKind::Fcfs),
    };
    let machine = ctx.machine(machine)?;
    let (_, mut report) = run_single(&workload, machine, &ctx.options(policy), &ctx.report_config())?;
    report.summary.warnings.splice(0..0, loaded.warnings);
    emit_warnings(&report.summary.warnings);
    let dir = ctx.out("out/simulate");
    write_run_report(&dir, &report)?;
    info!(
        "utilization {:.2}% over {} jobs; wrote {}",
        100.0 * report.summary.utilization.allocated_mean,
        report.summary.jobs,
        dir.display()
    );
    Ok(())
}

fn cmd_fuse(ctx: &Ctx) -> Result<()> {
    let mut warnings = Vec::new();
    let (cap, capa) = ctx.load_pair(&mut warnings)?;
    let fractions = if ctx.cfg.fractions.is_empty() {
        FUSION_FRACTIONS.to_vec()
    } else {
        ctx.cfg.fractions.clone()
    };
    let machine = ctx.machine(Machine::unified_reference())?;
    let mut points = fuse(
        &cap,
        &capa,
        machine,
        &fractions,
        &ctx.options(PolicyKind::Fcfs),
        &ctx.report_config(),
        ctx.parallelism(),
    )?;
    for p in &mut points {
        p.report.summary.warnings.splice(0..0, warnings.iter().cloned());
    }
    emit_warnings(&warnings);
    let dir = ctx.out("out/fuse");
    write_fusion_reports(&dir, &points)?;
    for p in &points {
        info!(
            "{}%: {} nodes, utilization {:.2}%",
            p.fraction,
            p.report.summary.machine.total_nodes,
            100.0 * p.report.summary.utilization.allocated_mean
        );
    }
    Ok(())
}

fn cmd_inject(ctx: &Ctx) -> Result<()> {
    let mut cfg_filter = ctx.cfg.clone();
    if ctx.preset.is_some() {
        cfg_filter.filter.preset = ctx.preset.clone();
    }
    let Some(filter) = cfg_filter.injection_filter()? else {
        bail!("inject needs a filter: --preset W1..W6 or --max-nodes/--max-runtime");
    };
    let mut warnings = Vec::new();
    let (cap, capa) = ctx.load_pair(&mut warnings)?;
    let machine = ctx.machine(Machine::capability_reference())?;
    let mut outcome = inject(
        &cap,
        &capa,
        filter,
        machine,
        &ctx.options(PolicyKind::Wfp),
        &ctx.report_config(),
        ctx.cfg.baseline_only,
        ctx.parallelism(),
    )?;
    outcome.baseline.summary.warnings.splice(0..0, warnings.iter().cloned());
    if let Some(inj) = &mut outcome.injected {
        inj.summary.warnings.splice(0..0, warnings.iter().cloned());
    }
    emit_warnings(&warnings);
    let dir = ctx.out("out/inject");
    write_injection_reports(&dir, &outcome)?;
    if let Some(c) = &outcome.comparison {
        info!(
            "injected {} jobs: utilization {:+.2} pts, capability wait {}",
            c.injected_jobs,
            c.utilization_gain_points,
            c.capability_wait_change_percent
                .map_or("n/a".to_string(), |w| format!("{w:+.1}%"))
        );
    }
    Ok(())
}

fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let spec = match (&ctx.preset, ctx.cfg.traces.first()) {
        (Some(p), _) => TraceSpec {
            preset: Some(p.clone()),
            count: ctx.count,
            days: ctx.days,
            ..TraceSpec::default()
        },
        (None, Some(t)) if t.preset.is_some() => t.clone(),
        _ => bail!("synth needs --preset capability-like|capacity-like"),
    };
    let w = spec.load(Source::Capability, ctx.seed())?.workload;
    let path = ctx.out("synth.csv");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(&w, BufWriter::new(file))?;
    info!("wrote {} jobs to {}", w.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file_cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = file_cfg.command {
        let matches = matches!(
            (c, cli.command),
            (Command::Characterize, Cmd::Characterize)
                | (Command::Simulate, Cmd::Simulate)
                | (Command::Fuse, Cmd::Fuse)
                | (Command::Inject, Cmd::Inject)
                | (Command::Synth, Cmd::Synth)
        );
        if !matches {
            warn!("config names command {c:?}; running {:?} as requested", cli.command);
        }
    }
    let ctx = Ctx {
        cfg: merge(file_cfg, &cli.common)?,
        preset: cli.common.preset.clone(),
        count: cli.common.count,
        days: cli.common.days,
    };
    match cli.command {
        Cmd::Characterize => cmd_characterize(&ctx),
        Cmd::Simulate => cmd_simulate(&ctx),
        Cmd::Fuse => cmd_fuse(&ctx),
        Cmd::Inject => cmd_inject(&ctx),
        Cmd::Synth => cmd_synth(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
