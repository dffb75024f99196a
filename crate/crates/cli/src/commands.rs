use std::fs;
use std::io::Write;
use std::path::Path;

use dualsim_core::coordinator::{run, run_grid, ExecMode, GridConfig, RunConfig};
use dualsim_core::scaling::{linear_fit, run_ladder, LadderConfig};
use dualsim_core::swf::{densest_window, parse_swf_str, JobRecord, WorkloadFile};
use dualsim_core::synthetic::{self, SyntheticConfig};
use dualsim_core::taskgen::{build_jobs, GenConfig, JobOptions};
use dualsim_core::trace::{metrics_csv_string, timeline_to_bytes, TimelineFormat, TraceMeta};
use dualsim_core::{
    fixtures, BlsPolicy, ChunkPolicy, ClusterSpec, SimJob, VariationFactor, VERSION,
};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub fn single_run_defaults() -> ExperimentConfig {
    ExperimentConfig {
        bls_list: vec![BlsPolicy::Fcfs],
        als_list: vec![ChunkPolicy::Static],
        ..ExperimentConfig::default()
    }
}

pub fn bench_defaults() -> ExperimentConfig {
    ExperimentConfig {
        upsilon_list: vec![VariationFactor::new(0.25).expect("in range")],
        ..single_run_defaults()
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_swf(path: &Path) -> Result<WorkloadFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_swf_str(&text)?)
}

fn window_span(hours: f64) -> i64 {
    (hours * 3600.0).round() as i64
}

/// Usable records selected by the config: a file or a synthetic workload,
/// optionally cut to its busiest window, then truncated to `jobs`.
fn load_records(cfg: &ExperimentConfig) -> Result<Vec<JobRecord>, CliError> {
    let workload = match &cfg.workload_path {
        Some(path) => read_swf(path)?,
        None => synthetic::generate(&SyntheticConfig {
            jobs: cfg.jobs.unwrap_or(1000),
            seed: cfg.seed,
            ..SyntheticConfig::default()
        }),
    };
    let workload = match cfg.window_hours {
        Some(h) => densest_window(&workload, window_span(h))?.workload,
        None => workload,
    };
    let records: Vec<JobRecord> = workload
        .usable()
        .take(cfg.jobs.unwrap_or(usize::MAX))
        .copied()
        .collect();
    if records.is_empty() {
        return Err(CliError::Parse("workload has no usable jobs".into()));
    }
    Ok(records)
}

fn job_options(cfg: &ExperimentConfig) -> JobOptions {
    JobOptions {
        edf_deadline_factor: cfg.edf_deadline_factor,
    }
}

fn exec_mode(threads: Option<usize>) -> ExecMode {
    ExecMode::Parallel { threads }
}

fn single<T: Copy>(name: &str, items: &[T]) -> Result<T, CliError> {
    match items {
        [one] => Ok(*one),
        _ => Err(CliError::Config(format!(
            "{name} takes exactly one value here, got {}",
            items.len()
        ))),
    }
}

fn metadata(command: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": VERSION,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg,
        "result": extra,
    })
}

pub fn extract_window(input: &Path, hours: f64, out: &Path) -> Result<(), CliError> {
    if !(hours.is_finite() && hours > 0.0) {
        return Err(CliError::Config(format!(
            "hours must be positive, got {hours}"
        )));
    }
    let w = read_swf(input)?;
    let win = densest_window(&w, window_span(hours))?;
    write_atomic(out, win.workload.to_swf_string().as_bytes())?;
    println!(
        "window start {}s: {} usable jobs, {} records written to {}",
        win.start,
        win.usable_jobs,
        win.workload.records.len(),
        out.display()
    );
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<(), CliError> {
    let bls = single("bls", &cfg.bls_list)?;
    let als = single("als", &cfg.als_list)?;
    let upsilon = single("upsilon", &cfg.upsilon_list)?;
    let (jobs, spec): (Vec<SimJob>, ClusterSpec) = match cfg.fixture.as_deref() {
        Some("scenario42") => fixtures::scenario42(),
        Some(other) => return Err(CliError::Config(format!("unknown fixture `{other}`"))),
        None => {
            let records = load_records(cfg)?;
            let gen = GenConfig::new(upsilon, cfg.seed);
            let jobs = build_jobs(&records, &cfg.platform, &gen, &job_options(cfg))
                .map_err(|e| CliError::Parse(e.to_string()))?;
            (jobs, cfg.platform.clone())
        }
    };
    let rc = RunConfig {
        bls,
        als,
        chunk_overhead_s: cfg.chunk_overhead_s,
        mode: exec_mode(threads),
        upsilon: upsilon.value(),
    };
    let out = run(&jobs, &spec, &rc)?;
    let meta = TraceMeta {
        combo: Some(out.metrics.combo),
        seed: Some(cfg.seed),
        platform: Some(spec.clone()),
        config_hash: Some(cfg.hash()),
        version: VERSION.to_string(),
    };
    let dir = &cfg.output_dir;
    write_atomic(
        &dir.join("metrics.csv"),
        metrics_csv_string(std::slice::from_ref(&out.metrics), false).as_bytes(),
    )?;
    write_atomic(
        &dir.join("trace.txt"),
        &timeline_to_bytes(&out.trace, &meta, TimelineFormat::Text),
    )?;
    write_atomic(
        &dir.join("trace.json"),
        &timeline_to_bytes(&out.trace, &meta, TimelineFormat::Json),
    )?;
    let sidecar = dir.join("unschedulable.json");
    if out.unschedulable.is_empty() {
        if sidecar.exists() {
            fs::remove_file(&sidecar).map_err(|e| CliError::io(&sidecar, e))?;
        }
    } else {
        write_json(&sidecar, &json!(out.unschedulable))?;
        eprintln!(
            "warning: {} job(s) need more cores than the cluster has; see {}",
            out.unschedulable.len(),
            sidecar.display()
        );
    }
    write_json(
        &dir.join("metadata.json"),
        &metadata(
            "simulate",
            cfg,
            json!({
                "platform": spec,
                "jobs": jobs.len(),
                "scheduled": out.reports.len(),
                "unschedulable": out.unschedulable.len(),
                "makespan_s": out.metrics.makespan.to_string(),
            }),
        ),
    )?;

    if cfg.fixture.is_some() {
        println!(
            "{:>4} {:>12} {:>12} {:>12} {:>12}",
            "job", "arrival", "start", "finish", "wait"
        );
        for (id, t) in &out.metrics.per_job {
            println!(
                "{:>4} {:>12} {:>12} {:>12} {:>12}",
                id.to_string(),
                t.arrival.to_string(),
                t.start.to_string(),
                t.finish.to_string(),
                t.wait.to_string()
            );
        }
    }
    println!(
        "{bls}/{als} upsilon={}: {} jobs, makespan {}s, mean wait {:.6}s, utilization {:.6}; outputs in {}",
        upsilon.value(),
        out.reports.len(),
        out.metrics.makespan,
        out.metrics.mean_wait_secs(),
        out.metrics.utilization(),
        dir.display()
    );
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig, ratio: bool, threads: Option<usize>) -> Result<(), CliError> {
    if cfg.fixture.is_some() {
        return Err(CliError::Config("sweep does not take a fixture".into()));
    }
    let records = load_records(cfg)?;
    let total = cfg.platform.total_cores();
    let oversized = records
        .iter()
        .filter(|r| r.processors().is_some_and(|p| p > total))
        .count();
    let grid = GridConfig {
        seed: cfg.seed,
        chunk_overhead_s: cfg.chunk_overhead_s,
        job_options: job_options(cfg),
        mode: exec_mode(threads),
    };
    let rows = run_grid(
        &records,
        &cfg.platform,
        &cfg.bls_list,
        &cfg.als_list,
        &cfg.upsilon_list,
        &grid,
    )?;
    let dir = &cfg.output_dir;
    let path = dir.join("sweep.csv");
    write_atomic(&path, metrics_csv_string(&rows, ratio).as_bytes())?;
    write_json(
        &dir.join("metadata.json"),
        &metadata(
            "sweep",
            cfg,
            json!({ "jobs": records.len(), "rows": rows.len(), "unschedulable": oversized }),
        ),
    )?;
    if oversized > 0 {
        eprintln!(
            "warning: {oversized} job(s) need more cores than the cluster has and were skipped"
        );
    }
    println!(
        "{} rows over {} jobs written to {}",
        rows.len(),
        records.len(),
        path.display()
    );
    Ok(())
}

pub fn bench(cfg: &ExperimentConfig, ladder: &[usize], reps: usize) -> Result<(), CliError> {
    if ladder.is_empty() || ladder.contains(&0) || reps == 0 {
        return Err(CliError::Config(
            "ladder entries and reps must be positive".into(),
        ));
    }
    let workload = match &cfg.workload_path {
        Some(path) => read_swf(path)?.records,
        None => Vec::new(),
    };
    let lc = LadderConfig {
        ladder: ladder.to_vec(),
        repetitions: reps,
        bls: single("bls", &cfg.bls_list)?,
        als: single("als", &cfg.als_list)?,
        upsilon: single("upsilon", &cfg.upsilon_list)?,
        seed: cfg.seed,
        synthetic: SyntheticConfig {
            seed: cfg.seed,
            ..SyntheticConfig::default()
        },
    };
    let points = run_ladder(&workload, &cfg.platform, &lc)?;
    let mut csv = String::from("jobs,min_s,avg_s,max_s\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            p.jobs, p.min_s, p.avg_s, p.max_s
        ));
        println!(
            "{:>8} jobs: min {:.4}s avg {:.4}s max {:.4}s",
            p.jobs, p.min_s, p.avg_s, p.max_s
        );
    }
    let xs: Vec<f64> = points.iter().map(|p| p.jobs as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.avg_s).collect();
    let fit = linear_fit(&xs, &ys);
    match fit {
        Some(f) => println!("linear fit: {:.3e} s/job, R^2 {:.4}", f.slope, f.r_squared),
        None => println!("linear fit: needs at least two distinct job counts"),
    }
    let dir = &cfg.output_dir;
    write_atomic(&dir.join("scaling.csv"), csv.as_bytes())?;
    write_json(
        &dir.join("metadata.json"),
        &metadata(
            "bench",
            cfg,
            json!({
                "ladder": ladder,
                "reps": reps,
                "slope_s_per_job": fit.map(|f| f.slope),
                "r_squared": fit.map(|f| f.r_squared),
            }),
        ),
    )?;
    Ok(())
}

pub fn gen_synthetic(cfg: &SyntheticConfig, out: &Path) -> Result<(), CliError> {
    if cfg.jobs == 0 {
        return Err(CliError::Config("jobs must be positive".into()));
    }
    let bad = |v: f64| !(v.is_finite() && v > 0.0);
    if bad(cfg.mean_interarrival_s)
        || bad(cfg.runtime_median_s)
        || !(cfg.runtime_sigma.is_finite() && cfg.runtime_sigma >= 0.0)
    {
        return Err(CliError::Config(
            "interarrival and runtime median must be positive, sigma non-negative".into(),
        ));
    }
    if cfg.max_cores == 0 {
        return Err(CliError::Config("max-cores must be positive".into()));
    }
    let w = synthetic::generate(cfg);
    write_atomic(out, w.to_swf_string().as_bytes())?;
    println!("{} jobs written to {}", w.records.len(), out.display());
    Ok(())
}
