//! Seeded synthetic workloads.
//!
//! Arrivals are Poisson. Sizes and runtimes are drawn independently from
//! piecewise categorical distributions: a bin is chosen by weight, then a
//! value uniformly inside it. Walltimes over-estimate the runtime by a
//! uniform factor and are rounded up to whole minutes.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use super::Workload;
use crate::error::{Error, Result};
use crate::model::{Job, Nodes, Source, Time};

const PROBABILITY_TOLERANCE: f64 = 1e-9;
const HOURS_PER_YEAR: f64 = 8_760.0;

/// An inclusive value range drawn with the given probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedRange {
    pub lo: u64,
    pub hi: u64,
    pub probability: f64,
}

const fn range(lo: u64, hi: u64, probability: f64) -> WeightedRange {
    WeightedRange { lo, hi, probability }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub label: String,
    pub source: Source,
    pub job_count: usize,
    pub arrivals_per_hour: f64,
    pub sizes: Vec<WeightedRange>,
    /// Actual runtime in seconds.
    pub runtimes: Vec<WeightedRange>,
    pub min_size: Nodes,
    pub max_size: Nodes,
    /// Walltime = runtime x U[1, walltime_factor], at least 1.
    pub walltime_factor: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthSpec(m));
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad(format!("size bounds {}..={}", self.min_size, self.max_size));
        }
        if !(self.arrivals_per_hour.is_finite() && self.arrivals_per_hour > 0.0) {
            return bad(format!("arrival rate {}", self.arrivals_per_hour));
        }
        if !(self.walltime_factor.is_finite() && self.walltime_factor >= 1.0) {
            return bad(format!("walltime factor {}", self.walltime_factor));
        }
        for (what, bins, lo_min) in [("size", &self.sizes, 1u64), ("runtime", &self.runtimes, 1u64)] {
            if bins.is_empty() {
                return bad(format!("no {what} bins"));
            }
            let mut sum = 0.0;
            for b in bins.iter() {
                if b.lo < lo_min || b.lo > b.hi || b.probability.is_nan() || b.probability < 0.0 {
                    return bad(format!("{what} bin {b:?}"));
                }
                sum += b.probability;
            }
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return bad(format!("{what} probabilities sum to {sum}"));
            }
        }
        if let Some(b) = self
            .sizes
            .iter()
            .find(|b| b.lo < self.min_size as u64 || b.hi > self.max_size as u64)
        {
            return bad(format!(
                "size bin {}..={} outside {}..={}",
                b.lo, b.hi, self.min_size, self.max_size
            ));
        }
        Ok(())
    }
}

/// Calibrated stand-ins for the two facility traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthPreset {
    /// Large, long jobs: every request is at least 128 nodes, 79% run over an hour.
    CapabilityLike,
    /// 75% single-node jobs, 96% at most 32 nodes, 60% finish within an hour.
    CapacityLike,
}

impl SynthPreset {
    pub fn name(self) -> &'static str {
        match self {
            SynthPreset::CapabilityLike => "capability-like",
            SynthPreset::CapacityLike => "capacity-like",
        }
    }

    pub fn source(self) -> Source {
        match self {
            SynthPreset::CapabilityLike => Source::Capability,
            SynthPreset::CapacityLike => Source::Capacity,
        }
    }

    /// Jobs per year in the reference traces.
    pub fn yearly_jobs(self) -> usize {
        match self {
            SynthPreset::CapabilityLike => 23_911,
            SynthPreset::CapacityLike => 2_349_370,
        }
    }

    /// Number of jobs that arrive over `days` at the preset's rate.
    pub fn jobs_for_days(self, days: f64) -> usize {
        (self.yearly_jobs() as f64 * days / 365.0).round() as usize
    }

    pub fn spec(self, job_count: usize, seed: u64) -> SynthSpec {
        let arrivals_per_hour = self.yearly_jobs() as f64 / HOURS_PER_YEAR;
        match self {
            SynthPreset::CapabilityLike => SynthSpec {
                label: self.name().into(),
                source: Source::Capability,
                job_count,
                arrivals_per_hour,
                sizes: vec![
                    range(128, 128, 0.50),
                    range(129, 256, 0.20),
                    range(257, 512, 0.15),
                    range(513, 1024, 0.10),
                    range(1025, 4096, 0.05),
                ],
                runtimes: vec![
                    range(600, 3_600, 0.21),
                    range(3_601, 7_200, 0.30),
                    range(7_201, 14_400, 0.25),
                    range(14_401, 28_800, 0.19),
                    range(28_801, 86_400, 0.05),
                ],
                min_size: 128,
                max_size: 4_360,
                walltime_factor: 2.0,
                seed,
            },
            SynthPreset::CapacityLike => SynthSpec {
                label: self.name().into(),
                source: Source::Capacity,
                job_count,
                arrivals_per_hour,
                sizes: vec![
                    range(1, 1, 0.75),
                    range(2, 16, 0.13),
                    range(17, 32, 0.08),
                    range(33, 128, 0.0365),
                    range(129, 1024, 0.003),
                    range(1025, 4096, 0.0005),
                ],
                runtimes: vec![
                    range(60, 600, 0.10),
                    range(601, 1_800, 0.30),
                    range(1_801, 3_599, 0.20),
                    range(3_600, 7_200, 0.15),
                    range(7_201, 21_600, 0.13),
                    range(21_601, 60_000, 0.015),
                    range(60_001, 64_800, 0.105),
                ],
                min_size: 1,
                max_size: 9_688,
                walltime_factor: 2.0,
                seed,
            },
        }
    }
}

impl std::str::FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capability-like" | "capability" => Ok(SynthPreset::CapabilityLike),
            "capacity-like" | "capacity" => Ok(SynthPreset::CapacityLike),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

fn weights(bins: &[WeightedRange]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(bins.iter().map(|b| b.probability)).map_err(|e| Error::InvalidSynthSpec(e.to_string()))
}

pub fn synthesize(spec: &SynthSpec) -> Result<Workload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaps = Exp::new(spec.arrivals_per_hour / 3_600.0).map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
    let size_pick = weights(&spec.sizes)?;
    let runtime_pick = weights(&spec.runtimes)?;

    let mut clock = 0.0f64;
    let mut jobs = Vec::with_capacity(spec.job_count);
    for id in 0..spec.job_count {
        if id > 0 {
            clock += gaps.sample(&mut rng);
        }
        let sb = spec.sizes[size_pick.sample(&mut rng)];
        let size = rng.random_range(sb.lo..=sb.hi) as Nodes;
        let rb = spec.runtimes[runtime_pick.sample(&mut rng)];
        let runtime: Time = rng.random_range(rb.lo..=rb.hi);
        let factor = rng.random_range(1.0..=spec.walltime_factor);
        let walltime = ((runtime as f64 * factor) / 60.0).ceil() as Time * 60;
        jobs.push(Job::new(
            id as u64,
            clock as Time,
            size,
            walltime.max(runtime),
            runtime,
            spec.source,
        ));
    }
    Ok(Workload::new(spec.label.clone(), jobs))
}
