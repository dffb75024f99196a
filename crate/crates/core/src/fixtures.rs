//! Small hand-checkable workloads.

use crate::model::{JobId, SimJob};
use crate::platform::{ClusterSpec, CoreId};
use crate::time::SimTime;

/// Four two-core jobs on five 1 GFLOP/s cores, each job pinned to a named
/// core pair and made of tasks (10, 20, 30) GFLOP, so the third task equals
/// the first two combined.
///
/// J0 and J1 arrive at 0 on cores {0,1} and {2,3}; J2 arrives at 5 wanting
/// {2,4} and J3 at 10 wanting {0,4}. J2 has to wait for J1, and J3 for both
/// J0 and J2.
pub fn scenario42() -> (Vec<SimJob>, ClusterSpec) {
    let spec = ClusterSpec::new(1, 5, 5.0).expect("valid spec");
    let layout: [(u64, [u32; 2]); 4] = [(0, [0, 1]), (0, [2, 3]), (5, [2, 4]), (10, [0, 4])];
    let jobs = layout
        .iter()
        .enumerate()
        .map(|(i, &(at, cores))| {
            SimJob::builder(JobId(i as u32), 2, 60.0)
                .arrival(SimTime::from_secs(at))
                .requested_runtime(SimTime::from_secs(30))
                .deadline(SimTime::from_secs(at + 60))
                .pinned_cores(cores.iter().map(|&c| CoreId::new(0, c)).collect())
                .task_lengths([10.0, 20.0, 30.0])
                .build()
                .expect("valid fixture job")
        })
        .collect();
    (jobs, spec)
}
