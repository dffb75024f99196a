//! Batch-level scheduling: the waiting queue and FCFS / EDF / SJF ordering.
//!
//! Dispatch is strictly in queue order. When the head job does not fit, the
//! queue waits for resources; nothing behind it may jump ahead.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Allocation, JobId, SimJob};
use crate::platform::{CoreLedger, PlatformError};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum BlsError {
    #[error("EDF needs a deadline for job {0}")]
    MissingDeadline(JobId),
    #[error("job {0} is not part of this workload")]
    UnknownJob(JobId),
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlsPolicy {
    /// Earliest arrival first.
    Fcfs,
    /// Earliest deadline first.
    Edf,
    /// Shortest requested runtime first.
    Sjf,
}

impl BlsPolicy {
    pub const ALL: [BlsPolicy; 3] = [BlsPolicy::Fcfs, BlsPolicy::Edf, BlsPolicy::Sjf];

    pub fn name(self) -> &'static str {
        match self {
            BlsPolicy::Fcfs => "fcfs",
            BlsPolicy::Edf => "edf",
            BlsPolicy::Sjf => "sjf",
        }
    }
}

impl fmt::Display for BlsPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlsPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fcfs" => Ok(BlsPolicy::Fcfs),
            "edf" => Ok(BlsPolicy::Edf),
            "sjf" => Ok(BlsPolicy::Sjf),
            _ => Err(format!(
                "unknown BLS policy `{s}` (expected fcfs, edf or sjf)"
            )),
        }
    }
}

/// Smaller key means higher priority.
pub fn priority_key(policy: BlsPolicy, job: &SimJob) -> Result<SimTime, BlsError> {
    match policy {
        BlsPolicy::Fcfs => Ok(job.arrival()),
        BlsPolicy::Edf => job.deadline().ok_or(BlsError::MissingDeadline(job.id())),
        BlsPolicy::Sjf => Ok(job.requested_runtime()),
    }
}

/// Waiting jobs ordered by `(key, arrival, id)`.
#[derive(Debug, Clone)]
pub struct JobQueue {
    policy: BlsPolicy,
    waiting: BTreeSet<(SimTime, SimTime, JobId)>,
}

impl JobQueue {
    pub fn new(policy: BlsPolicy) -> Self {
        JobQueue {
            policy,
            waiting: BTreeSet::new(),
        }
    }

    pub fn policy(&self) -> BlsPolicy {
        self.policy
    }

    pub fn push(&mut self, job: &SimJob) -> Result<(), BlsError> {
        let key = priority_key(self.policy, job)?;
        self.waiting.insert((key, job.arrival(), job.id()));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn head(&self) -> Option<JobId> {
        self.waiting.first().map(|&(_, _, id)| id)
    }

    /// Job ids in dispatch order.
    pub fn order(&self) -> Vec<JobId> {
        self.waiting.iter().map(|&(_, _, id)| id).collect()
    }

    pub fn contains(&self, id: JobId) -> bool {
        self.waiting.iter().any(|&(_, _, j)| j == id)
    }

    /// Starts queued jobs from the head while they fit; stops at the first
    /// that does not. `jobs` is indexed by job id.
    pub fn dispatch(
        &mut self,
        ledger: &mut CoreLedger,
        jobs: &[SimJob],
        now: SimTime,
    ) -> Result<Vec<Allocation>, BlsError> {
        let mut started = Vec::new();
        while let Some(&entry) = self.waiting.first() {
            let job = jobs
                .get(entry.2.index())
                .ok_or(BlsError::UnknownJob(entry.2))?;
            match ledger.allocate(job, now)? {
                Some(alloc) => {
                    self.waiting.pop_first();
                    started.push(alloc);
                }
                None => break,
            }
        }
        Ok(started)
    }
}
