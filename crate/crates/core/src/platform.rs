//! Cluster description and core bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Allocation, JobId, SimJob};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("cluster needs at least one host")]
    NoHosts,
    #[error("hosts need at least one core")]
    NoCores,
    #[error("host peak must be positive and finite, got {0}")]
    BadPeak(f64),
    #[error("job {0} is already allocated")]
    AlreadyAllocated(JobId),
    #[error("core {core} is not owned by job {job}")]
    NotOwner { core: CoreId, job: JobId },
    #[error("core {0} does not exist in this cluster")]
    UnknownCore(CoreId),
}

/// Homogeneous cluster: `hosts` identical hosts of `cores_per_host` cores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub hosts: u32,
    pub cores_per_host: u32,
    /// GFLOP/s per host.
    pub host_peak_gflops: f64,
    /// Recorded for completeness; compute-only jobs never touch the network.
    pub link_gbps: f64,
    pub link_latency_s: f64,
}

impl Default for ClusterSpec {
    /// Four 64-core hosts at 3 TFLOP/s each, 50 Gbps / 500 ns links.
    fn default() -> Self {
        ClusterSpec {
            hosts: 4,
            cores_per_host: 64,
            host_peak_gflops: 3000.0,
            link_gbps: 50.0,
            link_latency_s: 500e-9,
        }
    }
}

impl ClusterSpec {
    pub fn new(
        hosts: u32,
        cores_per_host: u32,
        host_peak_gflops: f64,
    ) -> Result<Self, PlatformError> {
        let spec = ClusterSpec {
            hosts,
            cores_per_host,
            host_peak_gflops,
            ..ClusterSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PlatformError> {
        if self.hosts == 0 {
            return Err(PlatformError::NoHosts);
        }
        if self.cores_per_host == 0 {
            return Err(PlatformError::NoCores);
        }
        if !(self.host_peak_gflops.is_finite() && self.host_peak_gflops > 0.0) {
            return Err(PlatformError::BadPeak(self.host_peak_gflops));
        }
        Ok(())
    }

    pub fn total_cores(&self) -> u32 {
        self.hosts * self.cores_per_host
    }

    pub fn contains(&self, core: CoreId) -> bool {
        core.host < self.hosts && core.core < self.cores_per_host
    }

    /// All cores in (host, core) order.
    pub fn cores(&self) -> impl Iterator<Item = CoreId> + '_ {
        (0..self.hosts).flat_map(move |h| (0..self.cores_per_host).map(move |c| CoreId::new(h, c)))
    }
}

/// GFLOP/s delivered by one core.
pub fn core_rate(spec: &ClusterSpec) -> f64 {
    spec.host_peak_gflops / spec.cores_per_host as f64
}

/// A core, addressed as `host.core`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoreId {
    pub host: u32,
    pub core: u32,
}

impl CoreId {
    pub const fn new(host: u32, core: u32) -> Self {
        CoreId { host, core }
    }
}

impl fmt::Display for CoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.host, self.core)
    }
}

impl FromStr for CoreId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, c) = s
            .split_once('.')
            .ok_or_else(|| format!("invalid core id `{s}`"))?;
        Ok(CoreId {
            host: h.parse().map_err(|_| format!("invalid host in `{s}`"))?,
            core: c.parse().map_err(|_| format!("invalid core in `{s}`"))?,
        })
    }
}

/// Free/busy state of every core. Owned by the event loop.
#[derive(Debug, Clone)]
pub struct CoreLedger {
    free: BTreeSet<CoreId>,
    busy: BTreeMap<CoreId, JobId>,
    running: HashSet<JobId>,
}

impl CoreLedger {
    pub fn new(spec: &ClusterSpec) -> Self {
        CoreLedger {
            free: spec.cores().collect(),
            busy: BTreeMap::new(),
            running: HashSet::new(),
        }
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn busy_count(&self) -> usize {
        self.busy.len()
    }

    pub fn is_free(&self, core: CoreId) -> bool {
        self.free.contains(&core)
    }

    pub fn owner(&self, core: CoreId) -> Option<JobId> {
        self.busy.get(&core).copied()
    }

    /// Grants the job its cores at `now`, or `Ok(None)` when not enough are free.
    ///
    /// Unpinned jobs get the lowest free cores in (host, core) order; pinned
    /// jobs wait until every named core is free.
    pub fn allocate(
        &mut self,
        job: &SimJob,
        now: SimTime,
    ) -> Result<Option<Allocation>, PlatformError> {
        if self.running.contains(&job.id()) {
            return Err(PlatformError::AlreadyAllocated(job.id()));
        }
        let cores: Vec<CoreId> = match job.pinned_cores() {
            Some(pinned) => {
                if let Some(&c) = pinned
                    .iter()
                    .find(|c| !self.free.contains(c) && !self.busy.contains_key(c))
                {
                    return Err(PlatformError::UnknownCore(c));
                }
                if !pinned.iter().all(|c| self.free.contains(c)) {
                    return Ok(None);
                }
                let mut v = pinned.to_vec();
                v.sort_unstable();
                v
            }
            None => {
                let want = job.requested_cores() as usize;
                if self.free.len() < want {
                    return Ok(None);
                }
                self.free.iter().take(want).copied().collect()
            }
        };
        for c in &cores {
            self.free.remove(c);
            self.busy.insert(*c, job.id());
        }
        self.running.insert(job.id());
        Ok(Some(Allocation {
            job: job.id(),
            cores,
            start: now,
        }))
    }

    /// Returns the allocation's cores to the free set. Leaves the ledger
    /// untouched on error.
    pub fn release(&mut self, alloc: &Allocation) -> Result<(), PlatformError> {
        if let Some(&core) = alloc
            .cores
            .iter()
            .find(|c| self.busy.get(c) != Some(&alloc.job))
        {
            return Err(PlatformError::NotOwner {
                core,
                job: alloc.job,
            });
        }
        for c in &alloc.cores {
            self.busy.remove(c);
            self.free.insert(*c);
        }
        self.running.remove(&alloc.job);
        Ok(())
    }

    /// Free and busy sets partition the cluster's cores.
    pub fn check_partition(&self, spec: &ClusterSpec) -> bool {
        self.free.len() + self.busy.len() == spec.total_cores() as usize
            && self
                .free
                .iter()
                .all(|c| spec.contains(*c) && !self.busy.contains_key(c))
            && self.busy.keys().all(|c| spec.contains(*c))
    }
}
