//! Wall-clock scaling of the simulator with the number of jobs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::als::ChunkPolicy;
use crate::bls::BlsPolicy;
use crate::coordinator::{self, RunConfig, SimError};
use crate::model::VariationFactor;
use crate::platform::ClusterSpec;
use crate::swf::JobRecord;
use crate::synthetic::{self, SyntheticConfig};
use crate::taskgen::{self, GenConfig, JobOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub jobs: usize,
    pub min_s: f64,
    pub avg_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// `n` usable records: the workload's first ones, topped up with synthetic
/// records arriving after the last of them.
pub fn records_for(workload: &[JobRecord], n: usize, synth: &SyntheticConfig) -> Vec<JobRecord> {
    let mut out: Vec<JobRecord> = workload
        .iter()
        .filter(|r| r.is_usable())
        .take(n)
        .copied()
        .collect();
    if out.len() < n {
        let t0 = out.last().map_or(0, |r| r.submit_time);
        let next = out.iter().map(|r| r.job_number).max().map_or(1, |m| m + 1);
        let extra = SyntheticConfig {
            jobs: n - out.len(),
            ..*synth
        };
        out.extend(synthetic::generate_from(&extra, t0, next).records);
    }
    out
}

/// Settings for one scaling ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    pub ladder: Vec<usize>,
    pub repetitions: usize,
    pub bls: BlsPolicy,
    pub als: ChunkPolicy,
    pub upsilon: VariationFactor,
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            ladder: vec![10, 100, 1_000, 10_000],
            repetitions: 10,
            bls: BlsPolicy::Fcfs,
            als: ChunkPolicy::Static,
            upsilon: VariationFactor::new(0.25).expect("in range"),
            seed: 0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Times job synthesis plus the full simulation at every ladder size.
pub fn run_ladder(
    workload: &[JobRecord],
    spec: &ClusterSpec,
    cfg: &LadderConfig,
) -> Result<Vec<ScalingPoint>, SimError> {
    let mut points = Vec::with_capacity(cfg.ladder.len());
    for &n in &cfg.ladder {
        let records = records_for(workload, n, &cfg.synthetic);
        let mut times = Vec::with_capacity(cfg.repetitions);
        for _ in 0..cfg.repetitions.max(1) {
            let t = Instant::now();
            let jobs = taskgen::build_jobs(
                &records,
                spec,
                &GenConfig::new(cfg.upsilon, cfg.seed),
                &JobOptions::default(),
            )?;
            let rc = RunConfig {
                upsilon: cfg.upsilon.value(),
                ..RunConfig::new(cfg.bls, cfg.als)
            };
            coordinator::run(&jobs, spec, &rc)?;
            times.push(t.elapsed().as_secs_f64());
        }
        let min_s = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_s = times.iter().cloned().fold(0.0, f64::max);
        let avg_s = times.iter().sum::<f64>() / times.len() as f64;
        points.push(ScalingPoint {
            jobs: n,
            min_s,
            avg_s,
            max_s,
        });
    }
    Ok(points)
}
