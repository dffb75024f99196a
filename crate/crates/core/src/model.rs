//! Shared vocabulary: jobs, tasks, allocations, completion reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::platform::CoreId;
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("no jobs")]
    NoJobs,
    #[error("job {0}: requested cores must be at least 1")]
    NoCores(JobId),
    #[error("job {0}: estimated length must be positive and finite, got {1}")]
    BadLength(JobId, f64),
    #[error("job {0}: task list is empty")]
    NoTasks(JobId),
    #[error("job {job}: task {index} has invalid length {length}")]
    BadTask {
        job: JobId,
        index: usize,
        length: f64,
    },
    #[error("job {job}: task lengths sum to {sum} GFLOP, below the estimate {estimate}")]
    ShortTasks { job: JobId, sum: f64, estimate: f64 },
    #[error("job {job}: {pinned} pinned cores but {requested} requested")]
    PinnedMismatch {
        job: JobId,
        pinned: usize,
        requested: u32,
    },
    #[error("variation factor must lie in [0, 1), got {0}")]
    BadVariation(f64),
    #[error("no completion report for job {0}")]
    MissingReport(JobId),
}

/// Ordinal job identifier, dense in `0..N` within one workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u32);

impl JobId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One unit of compute work inside a job, in GFLOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub index: usize,
    pub length: f64,
}

/// Coefficient of variation of synthesized task lengths.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct VariationFactor(f64);

impl VariationFactor {
    pub const ZERO: VariationFactor = VariationFactor(0.0);

    pub fn new(upsilon: f64) -> Result<Self, ModelError> {
        if (0.0..1.0).contains(&upsilon) {
            Ok(VariationFactor(upsilon))
        } else {
            Err(ModelError::BadVariation(upsilon))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for VariationFactor {
    type Error = ModelError;
    fn try_from(v: f64) -> Result<Self, ModelError> {
        VariationFactor::new(v)
    }
}

impl From<VariationFactor> for f64 {
    fn from(v: VariationFactor) -> f64 {
        v.0
    }
}

impl fmt::Display for VariationFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A simulation-ready batch job.
///
/// Built through [`SimJob::builder`], which checks the structural invariants
/// once; the job is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    id: JobId,
    arrival: SimTime,
    requested_cores: u32,
    deadline: Option<SimTime>,
    requested_runtime: SimTime,
    estimated_length: f64,
    tasks: Vec<Task>,
    pinned_cores: Option<Vec<CoreId>>,
}

impl SimJob {
    pub fn builder(id: JobId, requested_cores: u32, estimated_length: f64) -> SimJobBuilder {
        SimJobBuilder {
            job: SimJob {
                id,
                arrival: SimTime::ZERO,
                requested_cores,
                deadline: None,
                requested_runtime: SimTime::ZERO,
                estimated_length,
                tasks: Vec::new(),
                pinned_cores: None,
            },
        }
    }

    pub fn id(&self) -> JobId {
        self.id
    }

    pub fn arrival(&self) -> SimTime {
        self.arrival
    }

    pub fn requested_cores(&self) -> u32 {
        self.requested_cores
    }

    pub fn deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn requested_runtime(&self) -> SimTime {
        self.requested_runtime
    }

    /// The job length estimate the tasks were accumulated against.
    pub fn estimated_length(&self) -> f64 {
        self.estimated_length
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Exact cores this job must run on, when it names them explicitly.
    pub fn pinned_cores(&self) -> Option<&[CoreId]> {
        self.pinned_cores.as_deref()
    }

    /// Sum of task lengths, i.e. the job length actually simulated.
    pub fn total_length(&self) -> f64 {
        self.tasks.iter().map(|t| t.length).sum()
    }
}

pub struct SimJobBuilder {
    job: SimJob,
}

impl SimJobBuilder {
    pub fn arrival(mut self, at: SimTime) -> Self {
        self.job.arrival = at;
        self
    }

    pub fn deadline(mut self, deadline: SimTime) -> Self {
        self.job.deadline = Some(deadline);
        self
    }

    pub fn requested_runtime(mut self, runtime: SimTime) -> Self {
        self.job.requested_runtime = runtime;
        self
    }

    pub fn pinned_cores(mut self, cores: Vec<CoreId>) -> Self {
        self.job.pinned_cores = Some(cores);
        self
    }

    /// Task indices are reassigned to list positions.
    pub fn task_lengths(mut self, lengths: impl IntoIterator<Item = f64>) -> Self {
        self.job.tasks = lengths
            .into_iter()
            .enumerate()
            .map(|(index, length)| Task { index, length })
            .collect();
        self
    }

    pub fn build(self) -> Result<SimJob, ModelError> {
        let job = self.job;
        if job.requested_cores == 0 {
            return Err(ModelError::NoCores(job.id));
        }
        if !(job.estimated_length.is_finite() && job.estimated_length > 0.0) {
            return Err(ModelError::BadLength(job.id, job.estimated_length));
        }
        if job.tasks.is_empty() {
            return Err(ModelError::NoTasks(job.id));
        }
        if let Some(t) = job
            .tasks
            .iter()
            .find(|t| !(t.length.is_finite() && t.length > 0.0))
        {
            return Err(ModelError::BadTask {
                job: job.id,
                index: t.index,
                length: t.length,
            });
        }
        let sum = job.total_length();
        if sum < job.estimated_length {
            return Err(ModelError::ShortTasks {
                job: job.id,
                sum,
                estimate: job.estimated_length,
            });
        }
        if let Some(pinned) = &job.pinned_cores {
            if pinned.len() != job.requested_cores as usize {
                return Err(ModelError::PinnedMismatch {
                    job: job.id,
                    pinned: pinned.len(),
                    requested: job.requested_cores,
                });
            }
        }
        Ok(job)
    }
}

/// Cores granted to a job and the instant it started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub job: JobId,
    /// Sorted ascending.
    pub cores: Vec<CoreId>,
    pub start: SimTime,
}

/// One chunk of consecutive tasks executed on one core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub core: CoreId,
    pub first_task: usize,
    pub size: usize,
    pub start: SimTime,
    pub end: SimTime,
}

/// Outcome of simulating one job's tasks on its allocation. This is the
/// payload injected back into the batch-level event queue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionReport {
    pub job: JobId,
    pub start: SimTime,
    pub finish: SimTime,
    pub per_core_busy: BTreeMap<CoreId, SimTime>,
    /// In assignment order.
    pub chunk_log: Vec<ChunkRecord>,
}

impl CompletionReport {
    pub fn total_busy(&self) -> SimTime {
        self.per_core_busy.values().copied().sum()
    }
}

/// `max(FT) - min(AT)` over the given jobs; every job needs a report.
pub fn makespan(reports: &[CompletionReport], jobs: &[SimJob]) -> Result<SimTime, ModelError> {
    if jobs.is_empty() {
        return Err(ModelError::NoJobs);
    }
    let finish: HashMap<JobId, SimTime> = reports.iter().map(|r| (r.job, r.finish)).collect();
    let mut min_arrival = SimTime::MAX;
    let mut max_finish = SimTime::ZERO;
    for job in jobs {
        let ft = *finish
            .get(&job.id())
            .ok_or(ModelError::MissingReport(job.id()))?;
        min_arrival = min_arrival.min(job.arrival());
        max_finish = max_finish.max(ft);
    }
    Ok(max_finish.saturating_sub(min_arrival))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn job(id: u32, at: u64) -> SimJob {
        SimJob::builder(JobId(id), 1, 1.0)
            .arrival(SimTime::from_secs(at))
            .task_lengths([1.0])
            .build()
            .unwrap()
    }

    fn report(id: u32, ft: u64) -> CompletionReport {
        CompletionReport {
            job: JobId(id),
            start: SimTime::ZERO,
            finish: SimTime::from_secs(ft),
            per_core_busy: BTreeMap::new(),
            chunk_log: Vec::new(),
        }
    }

    #[test]
    fn makespan_direct_formula() {
        let jobs = [job(0, 0), job(1, 10)];
        let reports = [report(0, 50), report(1, 60)];
        assert_eq!(makespan(&reports, &jobs).unwrap(), SimTime::from_secs(60));
    }

    #[test]
    fn makespan_single_job() {
        let jobs = [job(0, 5)];
        let reports = [report(0, 5 + 17)];
        assert_eq!(makespan(&reports, &jobs).unwrap(), SimTime::from_secs(17));
    }

    #[test]
    fn makespan_errors() {
        assert_eq!(makespan(&[], &[]), Err(ModelError::NoJobs));
        assert_eq!(
            makespan(&[report(0, 3)], &[job(0, 0), job(1, 0)]),
            Err(ModelError::MissingReport(JobId(1)))
        );
    }

    #[test]
    fn builder_rejects_broken_jobs() {
        let b = || SimJob::builder(JobId(3), 2, 10.0);
        assert_eq!(b().build(), Err(ModelError::NoTasks(JobId(3))));
        assert!(matches!(
            b().task_lengths([4.0, 5.0]).build(),
            Err(ModelError::ShortTasks { .. })
        ));
        assert!(matches!(
            b().task_lengths([5.0, 0.0, 5.0]).build(),
            Err(ModelError::BadTask { index: 1, .. })
        ));
        assert_eq!(
            SimJob::builder(JobId(0), 0, 1.0)
                .task_lengths([1.0])
                .build(),
            Err(ModelError::NoCores(JobId(0)))
        );
        assert!(b()
            .task_lengths([10.0])
            .pinned_cores(vec![CoreId::new(0, 0)])
            .build()
            .is_err());
        assert!(b().task_lengths([5.0, 5.0]).build().is_ok());
    }

    #[test]
    fn variation_factor_range() {
        assert!(VariationFactor::new(0.0).is_ok());
        assert!(VariationFactor::new(0.999).is_ok());
        assert!(VariationFactor::new(1.0).is_err());
        assert!(VariationFactor::new(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn makespan_permutation_invariant(
            times in prop::collection::vec((0u64..1000, 1u64..1000), 1..30),
            rot in 0usize..30,
        ) {
            let jobs: Vec<_> = times.iter().enumerate().map(|(i, &(at, _))| job(i as u32, at)).collect();
            let reports: Vec<_> = times.iter().enumerate().map(|(i, &(at, d))| report(i as u32, at + d)).collect();
            let base = makespan(&reports, &jobs).unwrap();
            let mut jobs2 = jobs.clone();
            let k = rot % jobs2.len();
            jobs2.rotate_left(k);
            jobs2.reverse();
            prop_assert_eq!(makespan(&reports, &jobs2).unwrap(), base);
        }

        #[test]
        fn makespan_monotone_when_extending(
            times in prop::collection::vec((10u64..1000, 1u64..1000), 1..30),
            extra_finish in 0u64..500,
        ) {
            let mut jobs: Vec<_> = times.iter().enumerate().map(|(i, &(at, _))| job(i as u32, at)).collect();
            let mut reports: Vec<_> = times.iter().enumerate().map(|(i, &(at, d))| report(i as u32, at + d)).collect();
            let base = makespan(&reports, &jobs).unwrap();
            let max_ft = reports.iter().map(|r| r.finish).max().unwrap();
            let n = jobs.len() as u32;
            // a job arriving earliest and finishing latest
            jobs.push(job(n, 0));
            reports.push(report(n, max_ft.as_micros() / 1_000_000 + extra_finish));
            prop_assert!(makespan(&reports, &jobs).unwrap() >= base);
        }
    }
}
