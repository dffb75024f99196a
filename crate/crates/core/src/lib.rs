//! Two-level scheduling simulator.
//!
//! A batch-level scheduler (FCFS, EDF or SJF, no backfilling) hands cluster
//! cores to jobs; inside every running job an application-level dynamic loop
//! scheduler (STATIC, SS, GSS or FAC) spreads the job's tasks over those
//! cores. Each job's execution is simulated when it starts and its
//! completion is fed back to the batch level as an event, so the two levels
//! share one consistent clock.
//!
//! ```text
//!  SWF / synthetic ──▶ taskgen ──▶ coordinator ──▶ trace / metrics
//!                                   │       ▲
//!                          dispatch │       │ completion report
//!                                   ▼       │
//!                          bls (queue) ─▶ als (per-job engine)
//! ```

pub mod als;
pub mod bls;
pub mod coordinator;
pub mod fixtures;
pub mod model;
pub mod platform;
pub mod scaling;
pub mod swf;
pub mod synthetic;
pub mod taskgen;
pub mod time;
pub mod trace;

pub use als::{chunk_sequence, simulate_job, AlsError, ChunkPolicy, ChunkState, JobProfile};
pub use bls::{priority_key, BlsError, BlsPolicy, JobQueue};
pub use coordinator::{
    run, run_grid, ExecMode, GridConfig, RunConfig, RunOutput, SimError, Unschedulable,
};
pub use model::{
    makespan, Allocation, ChunkRecord, CompletionReport, JobId, ModelError, SimJob, Task,
    VariationFactor,
};
pub use platform::{core_rate, ClusterSpec, CoreId, CoreLedger, PlatformError};
pub use swf::{densest_window, parse_swf, JobRecord, SwfError, Window, WorkloadFile};
pub use taskgen::{
    build_job, build_jobs, estimate_job_length, synthesize_tasks, GenConfig, JobOptions,
};
pub use time::SimTime;
pub use trace::{
    export_timeline, makespan_ratio, merge_traces, Combo, MetricsReport, TimelineFormat,
    TraceEvent, TraceMeta,
};

/// Crate version, embedded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
