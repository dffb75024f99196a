//! Synthetic SWF workloads: Poisson arrivals, log-normal run times and
//! power-of-two core requests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::swf::{JobRecord, WorkloadFile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub jobs: usize,
    pub mean_interarrival_s: f64,
    /// Median run time; the log-normal's `exp(mu)`.
    pub runtime_median_s: f64,
    pub runtime_sigma: f64,
    /// Largest core request; requests are `2^k` up to this bound.
    pub max_cores: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            jobs: 1000,
            mean_interarrival_s: 60.0,
            runtime_median_s: 600.0,
            runtime_sigma: 1.0,
            max_cores: 64,
            seed: 0,
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> WorkloadFile {
    generate_from(cfg, 0, 1)
}

/// Like [`generate`], with arrivals starting at `t0` and job numbers at `first_number`.
pub fn generate_from(cfg: &SyntheticConfig, t0: i64, first_number: i64) -> WorkloadFile {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gaps = Exp::new(1.0 / cfg.mean_interarrival_s.max(1e-9)).expect("positive rate");
    let runtimes = LogNormal::new(
        cfg.runtime_median_s.max(1.0).ln(),
        cfg.runtime_sigma.max(0.0),
    )
    .expect("finite log-normal parameters");
    let max_exp = 31 - cfg.max_cores.max(1).leading_zeros();
    let mut clock = t0 as f64;
    let mut records = Vec::with_capacity(cfg.jobs);
    for i in 0..cfg.jobs {
        if i > 0 {
            clock += gaps.sample(&mut rng);
        }
        let run = (runtimes.sample(&mut rng).round() as i64).max(1);
        let cores = 1i64 << rng.random_range(0..=max_exp);
        let requested = (run as f64 * rng.random_range(1.0..3.0)).ceil() as i64;
        records.push(JobRecord {
            job_number: first_number + i as i64,
            submit_time: clock.floor() as i64,
            wait_time: -1,
            run_time: run,
            allocated_processors: cores,
            requested_processors: cores,
            requested_time: requested,
            status: 1,
            user_id: rng.random_range(1..=50),
            ..JobRecord::unknown()
        });
    }
    let header = vec![
        "; Synthetic workload".to_string(),
        format!(
            "; Jobs: {} MeanInterarrival: {} RuntimeMedian: {} RuntimeSigma: {} MaxCores: {} Seed: {}",
            cfg.jobs, cfg.mean_interarrival_s, cfg.runtime_median_s, cfg.runtime_sigma, cfg.max_cores, cfg.seed
        ),
    ];
    WorkloadFile::new(header, records)
}
