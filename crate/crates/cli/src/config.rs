//! Experiment configuration: defaults, then a flat `key = value` file, then
//! command-line flags, each layer overriding the previous one.

use std::path::PathBuf;
use std::str::FromStr;

use dualsim_core::{BlsPolicy, ChunkPolicy, ClusterSpec, VariationFactor};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every setting that can influence a run's results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Built-in workload used instead of a file or synthetic jobs.
    pub fixture: Option<String>,
    pub workload_path: Option<PathBuf>,
    pub window_hours: Option<f64>,
    /// Number of usable jobs to simulate; synthetic workloads default to 1000.
    pub jobs: Option<usize>,
    pub platform: ClusterSpec,
    pub bls_list: Vec<BlsPolicy>,
    pub als_list: Vec<ChunkPolicy>,
    pub upsilon_list: Vec<VariationFactor>,
    pub seed: u64,
    pub chunk_overhead_s: f64,
    pub edf_deadline_factor: f64,
    /// Left out of the hash: it does not change results.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            fixture: None,
            workload_path: None,
            window_hours: None,
            jobs: None,
            platform: ClusterSpec::default(),
            bls_list: BlsPolicy::ALL.to_vec(),
            als_list: ChunkPolicy::ALL.to_vec(),
            upsilon_list: vec![VariationFactor::ZERO],
            seed: 0,
            chunk_overhead_s: 0.0,
            edf_deadline_factor: 2.0,
            output_dir: PathBuf::from("dualsim-out"),
        }
    }
}

pub const FIXTURES: [&str; 1] = ["scenario42"];

pub const KEYS: [&str; 16] = [
    "fixture",
    "workload_path",
    "window_hours",
    "jobs",
    "hosts",
    "cores_per_host",
    "host_peak_gflops",
    "link_gbps",
    "link_latency_s",
    "bls",
    "als",
    "upsilon",
    "seed",
    "chunk_overhead_s",
    "edf_deadline_factor",
    "output_dir",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse `{raw}`: {e}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("{key}: list is empty")));
    }
    Ok(items)
}

fn upsilons(raw: &str) -> Result<Vec<VariationFactor>, CliError> {
    list::<f64>("upsilon", raw)?
        .into_iter()
        .map(|u| VariationFactor::new(u).map_err(|e| CliError::Config(format!("upsilon: {e}"))))
        .collect()
}

impl ExperimentConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let raw = raw.trim();
        match key {
            "fixture" => self.fixture = Some(raw.to_string()),
            "workload_path" => self.workload_path = Some(PathBuf::from(raw)),
            "window_hours" => self.window_hours = Some(value(key, raw)?),
            "jobs" => self.jobs = Some(value(key, raw)?),
            "hosts" => self.platform.hosts = value(key, raw)?,
            "cores_per_host" => self.platform.cores_per_host = value(key, raw)?,
            "host_peak_gflops" => self.platform.host_peak_gflops = value(key, raw)?,
            "link_gbps" => self.platform.link_gbps = value(key, raw)?,
            "link_latency_s" => self.platform.link_latency_s = value(key, raw)?,
            "bls" => self.bls_list = list(key, raw)?,
            "als" => self.als_list = list(key, raw)?,
            "upsilon" => self.upsilon_list = upsilons(raw)?,
            "seed" => self.seed = value(key, raw)?,
            "chunk_overhead_s" => self.chunk_overhead_s = value(key, raw)?,
            "edf_deadline_factor" => self.edf_deadline_factor = value(key, raw)?,
            "output_dir" => self.output_dir = PathBuf::from(raw),
            _ => {
                return Err(CliError::Config(format!(
                    "unknown setting `{key}` (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a config file's `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), raw)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.platform
            .validate()
            .map_err(|e| CliError::Config(format!("platform: {e}")))?;
        if let Some(f) = &self.fixture {
            if !FIXTURES.contains(&f.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown fixture `{f}` (available: {})",
                    FIXTURES.join(", ")
                )));
            }
        }
        if let Some(h) = self.window_hours {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::Config(format!(
                    "window_hours must be positive, got {h}"
                )));
            }
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be positive".into()));
        }
        if !(self.chunk_overhead_s.is_finite() && self.chunk_overhead_s >= 0.0) {
            return Err(CliError::Config(format!(
                "chunk_overhead_s must be non-negative, got {}",
                self.chunk_overhead_s
            )));
        }
        if !(self.edf_deadline_factor.is_finite() && self.edf_deadline_factor > 0.0) {
            return Err(CliError::Config(format!(
                "edf_deadline_factor must be positive, got {}",
                self.edf_deadline_factor
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
