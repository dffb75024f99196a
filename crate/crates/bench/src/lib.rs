//! Workload builders shared by the benchmarks.

use dualsim_core::synthetic::{generate, SyntheticConfig};
use dualsim_core::taskgen::{build_jobs, GenConfig, JobOptions};
use dualsim_core::{ClusterSpec, SimJob, VariationFactor};

/// `n` synthetic jobs on the default cluster.
pub fn synthetic_jobs(n: usize, upsilon: f64, seed: u64) -> (Vec<SimJob>, ClusterSpec) {
    let spec = ClusterSpec::default();
    let w = generate(&SyntheticConfig {
        jobs: n,
        seed,
        ..SyntheticConfig::default()
    });
    let cfg = GenConfig::new(
        VariationFactor::new(upsilon).expect("upsilon in [0, 1)"),
        seed,
    );
    let jobs = build_jobs(&w.records, &spec, &cfg, &JobOptions::default())
        .expect("synthetic records are usable");
    (jobs, spec)
}
