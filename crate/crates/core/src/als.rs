//! Application-level scheduling: dynamic loop scheduling chunk rules and the
//! per-job execution simulation.
//!
//! A job's tasks play the role of loop iterations. Cores pull chunks of
//! consecutive tasks whenever they go idle; the chunk size comes from the
//! selected rule:
//!
//! | rule   | chunk size                                                      |
//! |--------|-----------------------------------------------------------------|
//! | STATIC | `ceil(N/P)` for the first `N mod P` requests, then `floor(N/P)` |
//! | SS     | 1                                                               |
//! | GSS    | `ceil(R/P)`                                                     |
//! | FAC    | batches of `P` chunks of `ceil(R/(2P))`, `R` taken at batch start |
//!
//! with `N` tasks in total, `R` remaining and `P` cores.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Allocation, ChunkRecord, CompletionReport, JobId, SimJob, Task};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum AlsError {
    #[error("all tasks have been scheduled")]
    Exhausted,
    #[error("need at least one processing element")]
    NoCores,
    #[error("allocation for job {alloc} used for job {job}")]
    WrongJob { job: JobId, alloc: JobId },
    #[error("job {job} requested {requested} cores but was given {given}")]
    CoreCount {
        job: JobId,
        requested: u32,
        given: usize,
    },
    #[error("core rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("chunk overhead must be non-negative and finite, got {0}")]
    BadOverhead(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkPolicy {
    Static,
    Ss,
    Gss,
    Fac,
}

impl ChunkPolicy {
    pub const ALL: [ChunkPolicy; 4] = [
        ChunkPolicy::Static,
        ChunkPolicy::Ss,
        ChunkPolicy::Gss,
        ChunkPolicy::Fac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChunkPolicy::Static => "static",
            ChunkPolicy::Ss => "ss",
            ChunkPolicy::Gss => "gss",
            ChunkPolicy::Fac => "fac",
        }
    }
}

impl fmt::Display for ChunkPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChunkPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(ChunkPolicy::Static),
            "ss" => Ok(ChunkPolicy::Ss),
            "gss" => Ok(ChunkPolicy::Gss),
            "fac" => Ok(ChunkPolicy::Fac),
            _ => Err(format!(
                "unknown ALS policy `{s}` (expected static, ss, gss or fac)"
            )),
        }
    }
}

/// Recurrence state shared by all chunk rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkState {
    total: usize,
    remaining: usize,
    pes: usize,
    issued: usize,
    fac_batch_chunk: usize,
    fac_batch_left: usize,
}

impl ChunkState {
    pub fn new(total: usize, pes: usize) -> Result<Self, AlsError> {
        if pes == 0 {
            return Err(AlsError::NoCores);
        }
        Ok(ChunkState {
            total,
            remaining: total,
            pes,
            issued: 0,
            fac_batch_chunk: 0,
            fac_batch_left: 0,
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Index of the first task not yet handed out.
    pub fn next_task(&self) -> usize {
        self.total - self.remaining
    }

    pub fn next_chunk(&mut self, policy: ChunkPolicy) -> Result<usize, AlsError> {
        if self.remaining == 0 {
            return Err(AlsError::Exhausted);
        }
        let p = self.pes;
        let size = match policy {
            ChunkPolicy::Static => {
                let (q, r) = (self.total / p, self.total % p);
                if self.issued < r {
                    q + 1
                } else {
                    q
                }
            }
            ChunkPolicy::Ss => 1,
            ChunkPolicy::Gss => self.remaining.div_ceil(p),
            ChunkPolicy::Fac => {
                if self.fac_batch_left == 0 {
                    self.fac_batch_chunk = self.remaining.div_ceil(2 * p).max(1);
                    self.fac_batch_left = p;
                }
                self.fac_batch_left -= 1;
                self.fac_batch_chunk
            }
        }
        .min(self.remaining);
        debug_assert!(size >= 1);
        self.remaining -= size;
        self.issued += 1;
        Ok(size)
    }
}

/// The whole chunk sequence for `total` tasks on `pes` cores.
pub fn chunk_sequence(
    policy: ChunkPolicy,
    total: usize,
    pes: usize,
) -> Result<Vec<usize>, AlsError> {
    let mut state = ChunkState::new(total, pes)?;
    let mut out = Vec::new();
    while state.remaining() > 0 {
        out.push(state.next_chunk(policy)?);
    }
    Ok(out)
}

/// A chunk placed on a core position, relative to the job's start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RelChunk {
    pos: u32,
    first_task: usize,
    size: usize,
    start: SimTime,
    end: SimTime,
}

/// One job's execution schedule relative to its start time, with cores
/// numbered by position within the allocation.
///
/// It does not depend on when or where the job runs: placing it on an
/// allocation only shifts times and renames cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobProfile {
    job: JobId,
    chunks: Vec<RelChunk>,
    busy: Vec<SimTime>,
    span: SimTime,
}

fn chunk_duration(tasks: &[Task], rate: f64, overhead_s: f64) -> SimTime {
    let work: f64 = tasks.iter().map(|t| t.length).sum();
    SimTime::from_secs_f64(work / rate + overhead_s).max(SimTime::from_micros(1))
}

impl JobProfile {
    pub fn compute(
        job: &SimJob,
        policy: ChunkPolicy,
        rate: f64,
        overhead_s: f64,
    ) -> Result<Self, AlsError> {
        check_params(rate, overhead_s)?;
        let pes = job.requested_cores() as usize;
        let tasks = job.tasks();
        let mut state = ChunkState::new(tasks.len(), pes)?;
        let mut idle: BinaryHeap<Reverse<(SimTime, u32)>> = (0..pes as u32)
            .map(|p| Reverse((SimTime::ZERO, p)))
            .collect();
        let mut chunks = Vec::new();
        let mut busy = vec![SimTime::ZERO; pes];
        let mut span = SimTime::ZERO;
        while state.remaining() > 0 {
            let Reverse((now, pos)) = idle.pop().expect("a core is always idle eventually");
            let first = state.next_task();
            let size = state.next_chunk(policy)?;
            let dur = chunk_duration(&tasks[first..first + size], rate, overhead_s);
            let end = now + dur;
            chunks.push(RelChunk {
                pos,
                first_task: first,
                size,
                start: now,
                end,
            });
            busy[pos as usize] += dur;
            span = span.max(end);
            idle.push(Reverse((end, pos)));
        }
        Ok(JobProfile {
            job: job.id(),
            chunks,
            busy,
            span,
        })
    }

    /// Time from the job's start to its last chunk's end.
    pub fn span(&self) -> SimTime {
        self.span
    }

    pub fn place(&self, alloc: &Allocation) -> Result<CompletionReport, AlsError> {
        if alloc.job != self.job {
            return Err(AlsError::WrongJob {
                job: self.job,
                alloc: alloc.job,
            });
        }
        if alloc.cores.len() != self.busy.len() {
            return Err(AlsError::CoreCount {
                job: self.job,
                requested: self.busy.len() as u32,
                given: alloc.cores.len(),
            });
        }
        let st = alloc.start;
        let chunk_log = self
            .chunks
            .iter()
            .map(|c| ChunkRecord {
                core: alloc.cores[c.pos as usize],
                first_task: c.first_task,
                size: c.size,
                start: st + c.start,
                end: st + c.end,
            })
            .collect();
        let per_core_busy: BTreeMap<_, _> = alloc
            .cores
            .iter()
            .copied()
            .zip(self.busy.iter().copied())
            .collect();
        Ok(CompletionReport {
            job: self.job,
            start: st,
            finish: st + self.span,
            per_core_busy,
            chunk_log,
        })
    }
}

fn check_params(rate: f64, overhead_s: f64) -> Result<(), AlsError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(AlsError::BadRate(rate));
    }
    if !(overhead_s.is_finite() && overhead_s >= 0.0) {
        return Err(AlsError::BadOverhead(overhead_s));
    }
    Ok(())
}

/// Simulates `job` on `alloc` under `policy`.
///
/// All cores are idle at the allocation's start. The idle core with the
/// earliest free time (lowest core id on ties) takes the next chunk of
/// tasks in index order and runs it for `work / rate + overhead_s` seconds.
pub fn simulate_job(
    job: &SimJob,
    alloc: &Allocation,
    policy: ChunkPolicy,
    rate: f64,
    overhead_s: f64,
) -> Result<CompletionReport, AlsError> {
    if alloc.cores.is_empty() {
        return Err(AlsError::NoCores);
    }
    if alloc.job != job.id() {
        return Err(AlsError::WrongJob {
            job: job.id(),
            alloc: alloc.job,
        });
    }
    if alloc.cores.len() != job.requested_cores() as usize {
        return Err(AlsError::CoreCount {
            job: job.id(),
            requested: job.requested_cores(),
            given: alloc.cores.len(),
        });
    }
    JobProfile::compute(job, policy, rate, overhead_s)?.place(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::CoreId;
    use proptest::prelude::*;

    fn seq(p: ChunkPolicy, n: usize, pes: usize) -> Vec<usize> {
        chunk_sequence(p, n, pes).unwrap()
    }

    #[test]
    fn worked_sequences() {
        assert_eq!(seq(ChunkPolicy::Gss, 8, 2), vec![4, 2, 1, 1]);
        assert_eq!(
            seq(ChunkPolicy::Fac, 100, 4),
            vec![13, 13, 13, 13, 6, 6, 6, 6, 3, 3, 3, 3, 2, 2, 2, 2, 1, 1, 1, 1]
        );
        assert_eq!(seq(ChunkPolicy::Ss, 5, 3), vec![1; 5]);
        assert_eq!(seq(ChunkPolicy::Static, 10, 4), vec![3, 3, 2, 2]);
        assert_eq!(seq(ChunkPolicy::Static, 3, 8), vec![1, 1, 1]);
    }

    #[test]
    fn exhausted_state_errors() {
        let mut s = ChunkState::new(1, 1).unwrap();
        assert_eq!(s.next_chunk(ChunkPolicy::Gss), Ok(1));
        assert_eq!(s.next_chunk(ChunkPolicy::Gss), Err(AlsError::Exhausted));
        assert_eq!(ChunkState::new(4, 0), Err(AlsError::NoCores));
        assert!(seq(ChunkPolicy::Fac, 0, 3).is_empty());
    }

    fn job(lengths: &[f64]) -> SimJob {
        job_on(lengths, lengths.len() as u32)
    }

    fn job_on(lengths: &[f64], cores: u32) -> SimJob {
        SimJob::builder(JobId(0), cores, lengths.iter().sum())
            .task_lengths(lengths.iter().copied())
            .build()
            .unwrap()
    }

    fn alloc(n: u32, start: u64) -> Allocation {
        Allocation {
            job: JobId(0),
            cores: (0..n).map(|c| CoreId::new(0, c)).collect(),
            start: SimTime::from_secs(start),
        }
    }

    #[test]
    fn balanced_static() {
        let j = job(&[30.0; 4]);
        let r = simulate_job(&j, &alloc(4, 7), ChunkPolicy::Static, 30.0, 0.0).unwrap();
        assert_eq!(r.finish - r.start, SimTime::from_secs(1));
        assert_eq!(r.chunk_log.len(), 4);
        assert!(r.chunk_log.iter().all(|c| c.end == r.finish));
    }

    #[test]
    fn static_balance_depends_on_task_order() {
        // tasks (10, 20, 30): chunks {10,20} and {30} -> both cores busy 30 s
        let r = simulate_job(
            &job_on(&[10.0, 20.0, 30.0], 2),
            &alloc(2, 0),
            ChunkPolicy::Static,
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(r.finish, SimTime::from_secs(30));
        assert_eq!(
            r.per_core_busy.values().copied().collect::<Vec<_>>(),
            vec![SimTime::from_secs(30); 2]
        );
        // tasks (10, 30, 20): chunks {10,30} and {20} -> 40 s vs 20 s
        let r = simulate_job(
            &job_on(&[10.0, 30.0, 20.0], 2),
            &alloc(2, 0),
            ChunkPolicy::Static,
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(r.finish, SimTime::from_secs(40));
        assert_eq!(
            r.per_core_busy.values().copied().collect::<Vec<_>>(),
            vec![SimTime::from_secs(40), SimTime::from_secs(20)]
        );
    }

    #[test]
    fn self_scheduling_alternates() {
        let r = simulate_job(
            &job_on(&[1.0; 8], 2),
            &alloc(2, 0),
            ChunkPolicy::Ss,
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(r.finish, SimTime::from_secs(4));
        let on_core0 = r
            .chunk_log
            .iter()
            .filter(|c| c.core == CoreId::new(0, 0))
            .count();
        assert_eq!(on_core0, 4);
        // ties go to the lower core: task 0 on core 0, task 1 on core 1
        assert_eq!(r.chunk_log[0].core, CoreId::new(0, 0));
        assert_eq!(r.chunk_log[1].core, CoreId::new(0, 1));
    }

    #[test]
    fn gss_pulls_on_demand() {
        // 4 tasks of 1, 2 cores: GSS chunks 2,1,1
        let r = simulate_job(
            &job_on(&[1.0; 4], 2),
            &alloc(2, 0),
            ChunkPolicy::Gss,
            1.0,
            0.0,
        )
        .unwrap();
        let log: Vec<_> = r
            .chunk_log
            .iter()
            .map(|c| {
                (
                    c.core.core,
                    c.first_task,
                    c.size,
                    c.start.as_micros(),
                    c.end.as_micros(),
                )
            })
            .collect();
        assert_eq!(
            log,
            vec![
                (0, 0, 2, 0, 2_000_000),
                (1, 2, 1, 0, 1_000_000),
                (1, 3, 1, 1_000_000, 2_000_000)
            ]
        );
    }

    #[test]
    fn overhead_is_added_per_chunk() {
        let r = simulate_job(
            &job_on(&[1.0; 4], 1),
            &alloc(1, 0),
            ChunkPolicy::Ss,
            1.0,
            0.25,
        )
        .unwrap();
        assert_eq!(r.finish, SimTime::from_secs(5));
    }

    #[test]
    fn mismatched_allocations_rejected() {
        let j = job_on(&[1.0; 4], 2);
        let empty = Allocation {
            cores: vec![],
            ..alloc(2, 0)
        };
        assert_eq!(
            simulate_job(&j, &empty, ChunkPolicy::Ss, 1.0, 0.0),
            Err(AlsError::NoCores)
        );
        assert!(matches!(
            simulate_job(&j, &alloc(3, 0), ChunkPolicy::Ss, 1.0, 0.0),
            Err(AlsError::CoreCount { .. })
        ));
        let other = Allocation {
            job: JobId(9),
            ..alloc(2, 0)
        };
        assert!(matches!(
            simulate_job(&j, &other, ChunkPolicy::Ss, 1.0, 0.0),
            Err(AlsError::WrongJob { .. })
        ));
        assert_eq!(
            simulate_job(&j, &alloc(2, 0), ChunkPolicy::Ss, 0.0, 0.0),
            Err(AlsError::BadRate(0.0))
        );
    }

    fn gss_oracle(total: usize, p: usize) -> Vec<usize> {
        let mut r = total;
        let mut out = vec![];
        while r > 0 {
            let c = r.div_ceil(p);
            out.push(c);
            r -= c;
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn sequences_partition_total(total in 1usize..10_000, p in 1usize..128) {
            for policy in ChunkPolicy::ALL {
                let s = seq(policy, total, p);
                prop_assert_eq!(s.iter().sum::<usize>(), total);
                prop_assert!(s.iter().all(|&c| c >= 1));
            }
            prop_assert_eq!(seq(ChunkPolicy::Static, total, p).len(), total.min(p));
            prop_assert!(seq(ChunkPolicy::Ss, total, p).iter().all(|&c| c == 1));
            let gss = seq(ChunkPolicy::Gss, total, p);
            prop_assert!(gss.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(gss, gss_oracle(total, p));
            let fac = seq(ChunkPolicy::Fac, total, p);
            prop_assert!(fac.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn execution_invariants(
            lengths in prop::collection::vec(0.01f64..100.0, 1..60),
            cores in 1u32..9,
            policy in prop::sample::select(ChunkPolicy::ALL.to_vec()),
            start in 0u64..1000,
        ) {
            let j = job_on(&lengths, cores);
            let a = alloc(cores, start);
            let rate = 3.0;
            let r = simulate_job(&j, &a, policy, rate, 0.0).unwrap();
            prop_assert_eq!(&r, &simulate_job(&j, &a, policy, rate, 0.0).unwrap());
            // conservation, within half a microsecond per chunk
            let exact: f64 = lengths.iter().sum::<f64>() / rate * 1e6;
            let busy = r.total_busy().as_micros() as f64;
            prop_assert!((busy - exact).abs() <= 0.5 * r.chunk_log.len() as f64 + 1e-6);
            // perfect-balance lower bound
            let lb = SimTime::from_secs_f64(lengths.iter().sum::<f64>() / (rate * cores as f64));
            prop_assert!(r.finish - r.start + SimTime::from_micros(r.chunk_log.len() as u64) >= lb);
            // per-core disjoint, sorted, inside [ST, FT]
            for c in &a.cores {
                let mine: Vec<_> = r.chunk_log.iter().filter(|x| x.core == *c).collect();
                prop_assert!(mine.windows(2).all(|w| w[0].end <= w[1].start));
            }
            prop_assert!(r.chunk_log.iter().all(|c| c.start >= r.start && c.end <= r.finish));
            // chunks partition the task list in order
            let mut next = 0;
            for c in &r.chunk_log {
                prop_assert_eq!(c.first_task, next);
                next += c.size;
            }
            prop_assert_eq!(next, lengths.len());
        }
    }
}
