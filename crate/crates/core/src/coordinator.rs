//! The two-level event loop.
//!
//! One batch-level loop owns the clock, the core ledger and the waiting
//! queue. Whenever the batch scheduler starts a job, the job's
//! application-level simulation is run to completion right away and its
//! completion report is injected back as an event at the job's finish time.
//! The batch clock therefore never advances past an instant whose outcome
//! still depends on a running job.
//!
//! Because a job running on dedicated cores cannot be perturbed once it has
//! started, its schedule relative to the start time is fixed. In
//! [`ExecMode::Parallel`] those relative schedules are computed for all jobs
//! on a worker pool before the loop starts, and the loop only places them.
//! Both modes produce identical results.
//!
//! At equal timestamps completions are processed before arrivals.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::als::{self, AlsError, ChunkPolicy, JobProfile};
use crate::bls::{BlsError, BlsPolicy, JobQueue};
use crate::model::{Allocation, CompletionReport, JobId, SimJob, VariationFactor};
use crate::platform::{core_rate, ClusterSpec, CoreLedger, PlatformError};
use crate::swf::JobRecord;
use crate::taskgen::{self, GenConfig, JobOptions, TaskGenError};
use crate::time::SimTime;
use crate::trace::{self, Combo, MetricsReport, TraceError, TraceEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no jobs to simulate")]
    NoJobs,
    #[error("job at position {index} has id {id}; ids must equal positions")]
    JobIds { index: usize, id: JobId },
    #[error("no job in the workload can run on this cluster")]
    NothingSchedulable,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Bls(#[from] BlsError),
    #[error(transparent)]
    Als(#[from] AlsError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    TaskGen(#[from] TaskGenError),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl SimError {
    /// Errors that mean the engine itself is broken rather than its input.
    pub fn is_internal(&self) -> bool {
        matches!(
            self,
            SimError::Invariant(_)
                | SimError::Trace(TraceError::Overlap { .. } | TraceError::ForeignCore { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecMode {
    /// Each job's ALS simulation runs inline when the job is dispatched.
    #[default]
    Sequential,
    /// ALS simulations are precomputed on a pool of `threads` workers
    /// (rayon's default when `None`).
    Parallel { threads: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub bls: BlsPolicy,
    pub als: ChunkPolicy,
    /// Added to every chunk's execution time.
    pub chunk_overhead_s: f64,
    pub mode: ExecMode,
    /// Recorded in the metrics; the jobs already carry their tasks.
    pub upsilon: f64,
}

impl RunConfig {
    pub fn new(bls: BlsPolicy, als: ChunkPolicy) -> Self {
        RunConfig {
            bls,
            als,
            chunk_overhead_s: 0.0,
            mode: ExecMode::Sequential,
            upsilon: 0.0,
        }
    }
}

/// A job left out of the run because the cluster can never host it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unschedulable {
    pub job: JobId,
    pub requested_cores: u32,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub trace: Vec<TraceEvent>,
    /// Ordered by job id.
    pub allocations: Vec<Allocation>,
    /// Ordered by job id.
    pub reports: Vec<CompletionReport>,
    pub unschedulable: Vec<Unschedulable>,
    /// Event times in processing order.
    pub event_times: Vec<SimTime>,
}

#[derive(Debug)]
enum EventKind {
    Completion(Box<CompletionReport>),
    Arrival(JobId),
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion(_) => 0,
            EventKind::Arrival(_) => 1,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.time, self.kind.rank(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // BinaryHeap is a max-heap; invert for earliest-first
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: SimTime, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

fn unschedulable_reason(job: &SimJob, spec: &ClusterSpec) -> Option<String> {
    let total = spec.total_cores();
    if job.requested_cores() > total {
        return Some(format!(
            "requests {} cores, cluster has {total}",
            job.requested_cores()
        ));
    }
    if let Some(c) = job
        .pinned_cores()
        .and_then(|p| p.iter().find(|c| !spec.contains(**c)))
    {
        return Some(format!("pinned to core {c}, which does not exist"));
    }
    None
}

/// Simulates the whole batch and returns its metrics and merged trace.
pub fn run(jobs: &[SimJob], spec: &ClusterSpec, cfg: &RunConfig) -> Result<RunOutput, SimError> {
    if jobs.is_empty() {
        return Err(SimError::NoJobs);
    }
    spec.validate()?;
    for (index, job) in jobs.iter().enumerate() {
        if job.id().index() != index {
            return Err(SimError::JobIds {
                index,
                id: job.id(),
            });
        }
    }
    let rate = core_rate(spec);

    let mut unschedulable = Vec::new();
    let mut schedulable = Vec::with_capacity(jobs.len());
    for job in jobs {
        match unschedulable_reason(job, spec) {
            Some(reason) => unschedulable.push(Unschedulable {
                job: job.id(),
                requested_cores: job.requested_cores(),
                reason,
            }),
            None => schedulable.push(job),
        }
    }
    if schedulable.is_empty() {
        return Err(SimError::NothingSchedulable);
    }

    let profiles: Option<BTreeMap<JobId, JobProfile>> = match cfg.mode {
        ExecMode::Sequential => None,
        ExecMode::Parallel { threads } => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                builder = builder.num_threads(n.max(1));
            }
            let pool = builder.build().map_err(|e| SimError::Pool(e.to_string()))?;
            let computed: Result<Vec<_>, AlsError> = pool.install(|| {
                schedulable
                    .par_iter()
                    .map(|j| {
                        JobProfile::compute(j, cfg.als, rate, cfg.chunk_overhead_s)
                            .map(|p| (j.id(), p))
                    })
                    .collect()
            });
            Some(computed?.into_iter().collect())
        }
    };

    let mut events = EventQueue::default();
    for job in &schedulable {
        events.push(job.arrival(), EventKind::Arrival(job.id()));
    }
    let mut ledger = CoreLedger::new(spec);
    let mut queue = JobQueue::new(cfg.bls);
    let mut running: BTreeMap<JobId, Allocation> = BTreeMap::new();
    let mut allocations: BTreeMap<JobId, Allocation> = BTreeMap::new();
    let mut reports: BTreeMap<JobId, CompletionReport> = BTreeMap::new();
    let mut clock = SimTime::ZERO;
    let mut event_times = Vec::with_capacity(schedulable.len() * 2);

    while let Some(event) = events.pop() {
        if event.time < clock {
            return Err(SimError::Invariant(format!(
                "clock moved backwards from {clock} to {}",
                event.time
            )));
        }
        clock = event.time;
        event_times.push(clock);
        match event.kind {
            EventKind::Arrival(id) => queue.push(&jobs[id.index()])?,
            EventKind::Completion(report) => {
                let alloc = running.remove(&report.job).ok_or_else(|| {
                    SimError::Invariant(format!(
                        "completion for job {} which is not running",
                        report.job
                    ))
                })?;
                ledger.release(&alloc)?;
                if reports.insert(report.job, *report).is_some() {
                    return Err(SimError::Invariant("job completed twice".into()));
                }
            }
        }
        for alloc in queue.dispatch(&mut ledger, jobs, clock)? {
            let job = &jobs[alloc.job.index()];
            let report = match &profiles {
                None => als::simulate_job(job, &alloc, cfg.als, rate, cfg.chunk_overhead_s)?,
                Some(p) => p[&alloc.job].place(&alloc)?,
            };
            events.push(report.finish, EventKind::Completion(Box::new(report)));
            running.insert(alloc.job, alloc.clone());
            allocations.insert(alloc.job, alloc);
        }
        if ledger.busy_count() > spec.total_cores() as usize {
            return Err(SimError::Invariant(
                "more cores busy than the cluster owns".into(),
            ));
        }
    }

    if !queue.is_empty() || !running.is_empty() {
        return Err(SimError::Invariant(format!(
            "loop ended with {} queued and {} running jobs",
            queue.len(),
            running.len()
        )));
    }

    let allocations: Vec<Allocation> = allocations.into_values().collect();
    let reports: Vec<CompletionReport> = reports.into_values().collect();
    let trace = trace::merge_traces(&reports, &allocations)?;
    let combo = Combo {
        bls: cfg.bls,
        als: cfg.als,
        upsilon: cfg.upsilon,
    };
    let metrics = MetricsReport::from_run(combo, spec, &schedulable, &allocations, &reports)?;
    Ok(RunOutput {
        metrics,
        trace,
        allocations,
        reports,
        unschedulable,
        event_times,
    })
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub seed: u64,
    pub chunk_overhead_s: f64,
    pub job_options: JobOptions,
    /// `Parallel` runs cells concurrently; each cell itself runs sequentially.
    pub mode: ExecMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            seed: 0,
            chunk_overhead_s: 0.0,
            job_options: JobOptions::default(),
            mode: ExecMode::Sequential,
        }
    }
}

/// Runs every (bls, als, Υ) combination over the same records. Task lists
/// are regenerated per Υ from the same seed, so cells sharing a Υ simulate
/// identical jobs. Rows come back ordered by bls, then als, then Υ.
pub fn run_grid(
    records: &[JobRecord],
    spec: &ClusterSpec,
    bls_list: &[BlsPolicy],
    als_list: &[ChunkPolicy],
    upsilon_list: &[VariationFactor],
    cfg: &GridConfig,
) -> Result<Vec<MetricsReport>, SimError> {
    if bls_list.is_empty() || als_list.is_empty() || upsilon_list.is_empty() {
        return Err(SimError::NoJobs);
    }
    let job_sets: Vec<Vec<SimJob>> = upsilon_list
        .iter()
        .map(|&u| {
            taskgen::build_jobs(
                records,
                spec,
                &GenConfig::new(u, cfg.seed),
                &cfg.job_options,
            )
        })
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for &bls in bls_list {
        for &als in als_list {
            for (ui, &u) in upsilon_list.iter().enumerate() {
                cells.push((bls, als, ui, u));
            }
        }
    }
    let run_cell = |&(bls, als, ui, u): &(BlsPolicy, ChunkPolicy, usize, VariationFactor)| {
        let rc = RunConfig {
            bls,
            als,
            chunk_overhead_s: cfg.chunk_overhead_s,
            mode: ExecMode::Sequential,
            upsilon: u.value(),
        };
        run(&job_sets[ui], spec, &rc).map(|o| o.metrics)
    };
    match cfg.mode {
        ExecMode::Sequential => cells.iter().map(run_cell).collect(),
        ExecMode::Parallel { threads } => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                builder = builder.num_threads(n.max(1));
            }
            let pool = builder.build().map_err(|e| SimError::Pool(e.to_string()))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
    }
}
