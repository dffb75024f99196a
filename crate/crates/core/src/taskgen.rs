//! Turning workload records into simulation jobs: job length estimation and
//! task length synthesis.
//!
//! Task lengths are drawn from a normal distribution with mean
//! `LJ / cores` and standard deviation `mean * upsilon`, appended until their
//! sum reaches the job length estimate. The random stream for a job depends
//! only on the global seed and the job id, so jobs can be generated in any
//! order or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JobId, ModelError, SimJob, VariationFactor};
use crate::platform::{core_rate, ClusterSpec};
use crate::swf::JobRecord;
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum TaskGenError {
    #[error("unusable record (job {0}): needs positive run time and core count")]
    UnusableRecord(i64),
    #[error("record (job {0}) has negative submit time")]
    NegativeSubmit(i64),
    #[error("invalid job length {0}")]
    BadLength(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskDistribution {
    #[default]
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub upsilon: VariationFactor,
    pub seed: u64,
    pub distribution: TaskDistribution,
}

impl GenConfig {
    pub fn new(upsilon: VariationFactor, seed: u64) -> Self {
        GenConfig {
            upsilon,
            seed,
            distribution: TaskDistribution::Normal,
        }
    }
}

/// `cores * core_rate * run_time`, in GFLOP.
pub fn estimate_job_length(rec: &JobRecord, spec: &ClusterSpec) -> Result<f64, TaskGenError> {
    let cores = rec
        .processors()
        .filter(|_| rec.run_time > 0)
        .ok_or(TaskGenError::UnusableRecord(rec.job_number))?;
    Ok(cores as f64 * core_rate(spec) * rec.run_time as f64)
}

/// Per-job random stream: the global seed keys the generator, the job id
/// selects the stream.
fn job_rng(seed: u64, job: JobId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(job.0));
    rng
}

/// Task lengths (GFLOP) for one job of estimated length `length` on `cores` cores.
pub fn synthesize_tasks(
    length: f64,
    cores: u32,
    cfg: &GenConfig,
    job: JobId,
) -> Result<Vec<f64>, TaskGenError> {
    if !(length.is_finite() && length > 0.0) {
        return Err(TaskGenError::BadLength(length));
    }
    if cores == 0 {
        return Err(ModelError::NoCores(job).into());
    }
    let mean = length / cores as f64;
    let upsilon = cfg.upsilon.value();
    if upsilon == 0.0 {
        return Ok(vec![equal_share(length, cores); cores as usize]);
    }
    let TaskDistribution::Normal = cfg.distribution;
    let normal = Normal::new(mean, mean * upsilon).expect("mean and sigma are positive and finite");
    let mut rng = job_rng(cfg.seed, job);
    let mut tasks = Vec::with_capacity(cores as usize + 1);
    let mut sum = 0.0;
    while sum < length {
        let draw = normal.sample(&mut rng);
        if draw > 0.0 {
            tasks.push(draw);
            sum += draw;
        }
    }
    Ok(tasks)
}

/// Smallest `t >= length / cores` whose `cores`-fold sum is not below `length`.
fn equal_share(length: f64, cores: u32) -> f64 {
    let mut share = length / cores as f64;
    while (0..cores).map(|_| share).sum::<f64>() < length {
        share = f64::from_bits(share.to_bits() + 1);
    }
    share
}

/// Scales the EDF deadline off the requested runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobOptions {
    pub edf_deadline_factor: f64,
}

impl Default for JobOptions {
    fn default() -> Self {
        JobOptions {
            edf_deadline_factor: 2.0,
        }
    }
}

/// Builds the simulation job for one usable record.
///
/// The requested runtime falls back to the actual run time when the record
/// does not state one; the deadline is `arrival + factor * requested_runtime`.
pub fn build_job(
    id: JobId,
    rec: &JobRecord,
    spec: &ClusterSpec,
    cfg: &GenConfig,
    opts: &JobOptions,
) -> Result<SimJob, TaskGenError> {
    if !rec.is_usable() {
        return Err(TaskGenError::UnusableRecord(rec.job_number));
    }
    if rec.submit_time < 0 {
        return Err(TaskGenError::NegativeSubmit(rec.job_number));
    }
    let cores = rec.processors().expect("usable records have a core count");
    let estimate = estimate_job_length(rec, spec)?;
    let tasks = synthesize_tasks(estimate, cores, cfg, id)?;
    let arrival = SimTime::from_secs(rec.submit_time as u64);
    let requested = if rec.requested_time > 0 {
        rec.requested_time
    } else {
        rec.run_time
    };
    let requested = SimTime::from_secs(requested as u64);
    let deadline =
        arrival + SimTime::from_secs_f64(opts.edf_deadline_factor * requested.as_secs_f64());
    Ok(SimJob::builder(id, cores, estimate)
        .arrival(arrival)
        .requested_runtime(requested)
        .deadline(deadline)
        .task_lengths(tasks)
        .build()?)
}

/// Builds jobs for every usable record, numbered in record order.
pub fn build_jobs<'a, I>(
    records: I,
    spec: &ClusterSpec,
    cfg: &GenConfig,
    opts: &JobOptions,
) -> Result<Vec<SimJob>, TaskGenError>
where
    I: IntoIterator<Item = &'a JobRecord>,
{
    let usable: Vec<&JobRecord> = records.into_iter().filter(|r| r.is_usable()).collect();
    usable
        .par_iter()
        .enumerate()
        .map(|(i, rec)| build_job(JobId(i as u32), rec, spec, cfg, opts))
        .collect()
}
