//! Metrics over completed runs and per-core execution timelines.
//!
//! Timelines come in two lossless forms:
//!
//! * text, one event per line: `host.core job task_first task_size start end`
//!   with times in seconds to six decimals, preceded by `#` metadata lines;
//! * JSON in the Chrome trace-event layout (`traceEvents` with complete `X`
//!   events, one process per host and one thread lane per core), which
//!   Perfetto and `chrome://tracing` open directly.
//!
//! Idle time is not recorded; it is the gaps between a core's events.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::als::ChunkPolicy;
use crate::bls::BlsPolicy;
use crate::model::{Allocation, CompletionReport, JobId, SimJob};
use crate::platform::{ClusterSpec, CoreId};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("core {core}: job {a} [{a_start}, {a_end}) overlaps job {b} [{b_start}, {b_end})")]
    Overlap {
        core: CoreId,
        a: JobId,
        a_start: SimTime,
        a_end: SimTime,
        b: JobId,
        b_start: SimTime,
        b_end: SimTime,
    },
    #[error("job {job}: chunk on core {core} outside its allocation")]
    ForeignCore { job: JobId, core: CoreId },
    #[error("job {0}: report without an allocation")]
    MissingAllocation(JobId),
    #[error("job {job}: empty interval at {at}")]
    EmptyInterval { job: JobId, at: SimTime },
    #[error("makespan_b must be positive")]
    ZeroBaseline,
    #[error("no jobs")]
    NoJobs,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One chunk of a job's tasks on one core, in cluster time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub core: CoreId,
    pub job: JobId,
    pub task_first: usize,
    pub task_size: usize,
    pub start: SimTime,
    pub end: SimTime,
}

/// Policy pair and variation factor a run was made with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub bls: BlsPolicy,
    pub als: ChunkPolicy,
    pub upsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobTiming {
    pub arrival: SimTime,
    pub start: SimTime,
    pub finish: SimTime,
    pub wait: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub combo: Combo,
    pub makespan: SimTime,
    pub per_job: BTreeMap<JobId, JobTiming>,
    /// Busy fraction of every cluster core over `[min AT, max FT]`.
    pub core_utilization: BTreeMap<CoreId, f64>,
    pub total_busy: SimTime,
    pub total_cores: u32,
}

impl MetricsReport {
    /// Builds the report from the scheduled jobs' allocations and completions.
    pub fn from_run(
        combo: Combo,
        spec: &ClusterSpec,
        jobs: &[&SimJob],
        allocations: &[Allocation],
        reports: &[CompletionReport],
    ) -> Result<Self, TraceError> {
        if jobs.is_empty() {
            return Err(TraceError::NoJobs);
        }
        let starts: HashMap<JobId, SimTime> =
            allocations.iter().map(|a| (a.job, a.start)).collect();
        let finishes: HashMap<JobId, &CompletionReport> =
            reports.iter().map(|r| (r.job, r)).collect();
        let mut per_job = BTreeMap::new();
        for job in jobs {
            let st = *starts
                .get(&job.id())
                .ok_or(TraceError::MissingAllocation(job.id()))?;
            let ft = finishes
                .get(&job.id())
                .ok_or(TraceError::MissingAllocation(job.id()))?
                .finish;
            per_job.insert(
                job.id(),
                JobTiming {
                    arrival: job.arrival(),
                    start: st,
                    finish: ft,
                    wait: st.saturating_sub(job.arrival()),
                },
            );
        }
        let min_at = per_job
            .values()
            .map(|t| t.arrival)
            .min()
            .expect("non-empty");
        let max_ft = per_job.values().map(|t| t.finish).max().expect("non-empty");
        let makespan = max_ft.saturating_sub(min_at);
        let mut busy: BTreeMap<CoreId, SimTime> =
            spec.cores().map(|c| (c, SimTime::ZERO)).collect();
        for r in reports {
            for (core, b) in &r.per_core_busy {
                *busy.entry(*core).or_default() += *b;
            }
        }
        let total_busy = busy.values().copied().sum();
        let window = makespan.as_micros() as f64;
        let core_utilization = busy
            .into_iter()
            .map(|(c, b)| {
                let u = if window > 0.0 {
                    b.as_micros() as f64 / window
                } else {
                    0.0
                };
                (c, u)
            })
            .collect();
        Ok(MetricsReport {
            combo,
            makespan,
            per_job,
            core_utilization,
            total_busy,
            total_cores: spec.total_cores(),
        })
    }

    pub fn mean_wait_secs(&self) -> f64 {
        let n = self.per_job.len().max(1) as f64;
        self.per_job
            .values()
            .map(|t| t.wait.as_secs_f64())
            .sum::<f64>()
            / n
    }

    pub fn max_wait(&self) -> SimTime {
        self.per_job
            .values()
            .map(|t| t.wait)
            .max()
            .unwrap_or_default()
    }

    /// Cluster-wide busy fraction over the makespan window.
    pub fn utilization(&self) -> f64 {
        let cap = self.makespan.as_micros() as f64 * self.total_cores as f64;
        if cap > 0.0 {
            self.total_busy.as_micros() as f64 / cap
        } else {
            0.0
        }
    }
}

/// Maps every report's chunk log onto trace events sorted by
/// `(start, core, job)`, and checks that no core runs two chunks at once.
pub fn merge_traces(
    reports: &[CompletionReport],
    allocations: &[Allocation],
) -> Result<Vec<TraceEvent>, TraceError> {
    let allocs: HashMap<JobId, &Allocation> = allocations.iter().map(|a| (a.job, a)).collect();
    let mut events = Vec::with_capacity(reports.iter().map(|r| r.chunk_log.len()).sum());
    for r in reports {
        let alloc = allocs
            .get(&r.job)
            .ok_or(TraceError::MissingAllocation(r.job))?;
        for c in &r.chunk_log {
            if alloc.cores.binary_search(&c.core).is_err() {
                return Err(TraceError::ForeignCore {
                    job: r.job,
                    core: c.core,
                });
            }
            if c.start >= c.end {
                return Err(TraceError::EmptyInterval {
                    job: r.job,
                    at: c.start,
                });
            }
            events.push(TraceEvent {
                core: c.core,
                job: r.job,
                task_first: c.first_task,
                task_size: c.size,
                start: c.start,
                end: c.end,
            });
        }
    }
    check_disjoint(&events)?;
    events.sort_by_key(|e| (e.start, e.core, e.job, e.task_first));
    Ok(events)
}

/// Per-core non-overlap check.
pub fn check_disjoint(events: &[TraceEvent]) -> Result<(), TraceError> {
    let mut by_core: BTreeMap<CoreId, Vec<&TraceEvent>> = BTreeMap::new();
    for e in events {
        by_core.entry(e.core).or_default().push(e);
    }
    for (core, mut lane) in by_core {
        lane.sort_by_key(|e| (e.start, e.end));
        for w in lane.windows(2) {
            if w[1].start < w[0].end {
                return Err(TraceError::Overlap {
                    core,
                    a: w[0].job,
                    a_start: w[0].start,
                    a_end: w[0].end,
                    b: w[1].job,
                    b_start: w[1].start,
                    b_end: w[1].end,
                });
            }
        }
    }
    Ok(())
}

/// `makespan_upsilon / makespan_b`.
pub fn makespan_ratio(m_upsilon: SimTime, m_b: SimTime) -> Result<f64, TraceError> {
    if m_b == SimTime::ZERO {
        return Err(TraceError::ZeroBaseline);
    }
    Ok(m_upsilon.as_micros() as f64 / m_b.as_micros() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimelineFormat {
    Text,
    Json,
}

/// Provenance carried in timeline headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub combo: Option<Combo>,
    pub seed: Option<u64>,
    pub platform: Option<ClusterSpec>,
    pub config_hash: Option<String>,
    pub version: String,
}

pub fn export_timeline<W: Write>(
    events: &[TraceEvent],
    meta: &TraceMeta,
    format: TimelineFormat,
    mut out: W,
) -> Result<(), TraceError> {
    match format {
        TimelineFormat::Text => write_text(events, meta, &mut out)?,
        TimelineFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &json_document(events, meta))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn timeline_to_bytes(
    events: &[TraceEvent],
    meta: &TraceMeta,
    format: TimelineFormat,
) -> Vec<u8> {
    let mut buf = Vec::new();
    export_timeline(events, meta, format, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn write_text<W: Write>(events: &[TraceEvent], meta: &TraceMeta, out: &mut W) -> io::Result<()> {
    writeln!(out, "# dualsim timeline v1")?;
    writeln!(out, "# version {}", meta.version)?;
    if let Some(c) = &meta.combo {
        writeln!(
            out,
            "# combo bls={} als={} upsilon={}",
            c.bls, c.als, c.upsilon
        )?;
    }
    if let Some(seed) = meta.seed {
        writeln!(out, "# seed {seed}")?;
    }
    if let Some(p) = &meta.platform {
        writeln!(
            out,
            "# platform hosts={} cores_per_host={} host_peak_gflops={}",
            p.hosts, p.cores_per_host, p.host_peak_gflops
        )?;
    }
    if let Some(h) = &meta.config_hash {
        writeln!(out, "# config_hash {h}")?;
    }
    writeln!(out, "# core job task_first task_size start end")?;
    for e in events {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            e.core, e.job, e.task_first, e.task_size, e.start, e.end
        )?;
    }
    Ok(())
}

/// Reads the event lines of a text timeline; `#` lines are skipped.
pub fn parse_text_timeline(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("`{s}`: {e}")));
        events.push(TraceEvent {
            core: f[0].parse().map_err(err)?,
            job: JobId(u32::try_from(int(f[1])?).map_err(|e| err(e.to_string()))?),
            task_first: int(f[2])? as usize,
            task_size: int(f[3])? as usize,
            start: f[4].parse().map_err(err)?,
            end: f[5].parse().map_err(err)?,
        });
    }
    Ok(events)
}

fn json_document(events: &[TraceEvent], meta: &TraceMeta) -> Value {
    let mut lanes: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for e in events {
        let cores = lanes.entry(e.core.host).or_default();
        if let Err(pos) = cores.binary_search(&e.core.core) {
            cores.insert(pos, e.core.core);
        }
    }
    let mut trace = Vec::with_capacity(events.len() + lanes.len() * 2);
    for (host, cores) in &lanes {
        trace.push(json!({
            "name": "process_name", "ph": "M", "pid": host,
            "args": { "name": format!("host {host}") },
        }));
        for core in cores {
            trace.push(json!({
                "name": "thread_name", "ph": "M", "pid": host, "tid": core,
                "args": { "name": format!("core {host}.{core}") },
            }));
        }
    }
    for e in events {
        trace.push(json!({
            "name": format!("job {}", e.job),
            "cat": "job",
            "ph": "X",
            "ts": e.start.as_micros(),
            "dur": (e.end - e.start).as_micros(),
            "pid": e.core.host,
            "tid": e.core.core,
            "args": { "job": e.job.0, "task_first": e.task_first, "task_size": e.task_size },
        }));
    }
    json!({
        "displayTimeUnit": "ms",
        "otherData": meta,
        "traceEvents": trace,
    })
}

#[derive(Deserialize)]
struct JsonEvent {
    ph: String,
    #[serde(default)]
    ts: u64,
    #[serde(default)]
    dur: u64,
    pid: u32,
    #[serde(default)]
    tid: u32,
    #[serde(default)]
    args: JsonArgs,
}

#[derive(Deserialize, Default)]
struct JsonArgs {
    #[serde(default)]
    job: u32,
    #[serde(default)]
    task_first: usize,
    #[serde(default)]
    task_size: usize,
}

#[derive(Deserialize)]
struct JsonDoc {
    #[serde(rename = "otherData", default)]
    other: TraceMeta,
    #[serde(rename = "traceEvents")]
    events: Vec<JsonEvent>,
}

/// Reads back a JSON timeline written by [`export_timeline`].
pub fn parse_json_timeline(bytes: &[u8]) -> Result<(TraceMeta, Vec<TraceEvent>), TraceError> {
    let doc: JsonDoc = serde_json::from_slice(bytes)?;
    let events = doc
        .events
        .into_iter()
        .filter(|e| e.ph == "X")
        .map(|e| TraceEvent {
            core: CoreId::new(e.pid, e.tid),
            job: JobId(e.args.job),
            task_first: e.args.task_first,
            task_size: e.args.task_size,
            start: SimTime::from_micros(e.ts),
            end: SimTime::from_micros(e.ts + e.dur),
        })
        .collect();
    Ok((doc.other, events))
}

pub const METRICS_HEADER: [&str; 7] = [
    "bls",
    "als",
    "upsilon",
    "makespan_s",
    "mean_wait_s",
    "max_wait_s",
    "utilization",
];

/// Metrics table, one row per report. With `ratios`, a trailing `ratio`
/// column holds each row's makespan over the matching Υ = 0 row of the same
/// policy pair (empty when there is none).
pub fn write_metrics_csv<W: Write>(
    reports: &[MetricsReport],
    ratios: bool,
    out: W,
) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = METRICS_HEADER.to_vec();
    if ratios {
        header.push("ratio");
    }
    w.write_record(&header)?;
    let baselines: HashMap<(BlsPolicy, ChunkPolicy), SimTime> = reports
        .iter()
        .filter(|r| r.combo.upsilon == 0.0)
        .map(|r| ((r.combo.bls, r.combo.als), r.makespan))
        .collect();
    for r in reports {
        let mut row = vec![
            r.combo.bls.to_string(),
            r.combo.als.to_string(),
            r.combo.upsilon.to_string(),
            r.makespan.to_string(),
            format!("{:.6}", r.mean_wait_secs()),
            r.max_wait().to_string(),
            format!("{:.6}", r.utilization()),
        ];
        if ratios {
            let ratio = baselines
                .get(&(r.combo.bls, r.combo.als))
                .and_then(|&b| makespan_ratio(r.makespan, b).ok())
                .map(|x| format!("{x:.6}"))
                .unwrap_or_default();
            row.push(ratio);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_csv_string(reports: &[MetricsReport], ratios: bool) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(reports, ratios, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChunkRecord;

    fn ev(host: u32, core: u32, job: u32, first: usize, size: usize, s: u64, e: u64) -> TraceEvent {
        TraceEvent {
            core: CoreId::new(host, core),
            job: JobId(job),
            task_first: first,
            task_size: size,
            start: SimTime::from_micros(s),
            end: SimTime::from_micros(e),
        }
    }

    fn report(job: u32, chunks: &[(u32, u64, u64)]) -> (CompletionReport, Allocation) {
        let mut cores: Vec<CoreId> = chunks.iter().map(|c| CoreId::new(0, c.0)).collect();
        cores.sort();
        cores.dedup();
        let log: Vec<ChunkRecord> = chunks
            .iter()
            .enumerate()
            .map(|(i, &(c, s, e))| ChunkRecord {
                core: CoreId::new(0, c),
                first_task: i,
                size: 1,
                start: SimTime::from_secs(s),
                end: SimTime::from_secs(e),
            })
            .collect();
        let start = log.iter().map(|c| c.start).min().unwrap();
        let finish = log.iter().map(|c| c.end).max().unwrap();
        (
            CompletionReport {
                job: JobId(job),
                start,
                finish,
                per_core_busy: BTreeMap::new(),
                chunk_log: log,
            },
            Allocation {
                job: JobId(job),
                cores,
                start,
            },
        )
    }

    #[test]
    fn text_line_format() {
        let e = ev(0, 3, 7, 0, 2, 1_000_000, 2_500_000);
        let out = String::from_utf8(timeline_to_bytes(
            &[e],
            &TraceMeta::default(),
            TimelineFormat::Text,
        ))
        .unwrap();
        assert_eq!(out.lines().last().unwrap(), "0.3 7 0 2 1.000000 2.500000");
        assert_eq!(parse_text_timeline(&out).unwrap(), vec![e]);
    }

    #[test]
    fn empty_timeline_has_only_headers() {
        let meta = TraceMeta {
            seed: Some(3),
            version: "x".into(),
            ..Default::default()
        };
        let text = String::from_utf8(timeline_to_bytes(&[], &meta, TimelineFormat::Text)).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert!(text.contains("# seed 3"));
        let json = timeline_to_bytes(&[], &meta, TimelineFormat::Json);
        let (m, evs) = parse_json_timeline(&json).unwrap();
        assert!(evs.is_empty());
        assert_eq!(m, meta);
    }

    #[test]
    fn json_round_trip_and_lanes() {
        let events = vec![
            ev(0, 1, 2, 0, 3, 0, 10),
            ev(1, 0, 2, 3, 1, 0, 5),
            ev(0, 1, 4, 0, 1, 10, 12),
        ];
        let meta = TraceMeta {
            combo: Some(Combo {
                bls: BlsPolicy::Sjf,
                als: ChunkPolicy::Fac,
                upsilon: 0.1,
            }),
            platform: Some(ClusterSpec::default()),
            version: "t".into(),
            ..Default::default()
        };
        let bytes = timeline_to_bytes(&events, &meta, TimelineFormat::Json);
        let (m, back) = parse_json_timeline(&bytes).unwrap();
        assert_eq!(back, events);
        assert_eq!(m, meta);
        let doc: Value = serde_json::from_slice(&bytes).unwrap();
        let lanes = doc["traceEvents"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|e| e["name"] == "thread_name")
            .count();
        assert_eq!(lanes, 2);
    }

    #[test]
    fn merge_sorts_and_detects_overlap() {
        let (r0, a0) = report(0, &[(0, 5, 9), (1, 5, 6)]);
        let (r1, a1) = report(1, &[(2, 1, 3)]);
        let events = merge_traces(&[r0.clone(), r1.clone()], &[a0.clone(), a1.clone()]).unwrap();
        let starts: Vec<_> = events
            .iter()
            .map(|e| (e.start.as_micros() / 1_000_000, e.core.core))
            .collect();
        assert_eq!(starts, vec![(1, 2), (5, 0), (5, 1)]);

        let (r2, a2) = report(2, &[(0, 8, 10)]);
        assert!(matches!(
            merge_traces(&[r0.clone(), r2], &[a0.clone(), a2]),
            Err(TraceError::Overlap { .. })
        ));
        let mut foreign = r1;
        foreign.chunk_log[0].core = CoreId::new(0, 0);
        assert!(matches!(
            merge_traces(&[foreign], &[a1]),
            Err(TraceError::ForeignCore { .. })
        ));
        assert!(matches!(
            merge_traces(&[r0], &[]),
            Err(TraceError::MissingAllocation(_))
        ));
    }

    #[test]
    fn back_to_back_is_not_overlap() {
        assert!(check_disjoint(&[ev(0, 0, 1, 0, 1, 0, 5), ev(0, 0, 2, 0, 1, 5, 6)]).is_ok());
    }

    #[test]
    fn ratio() {
        assert_eq!(
            makespan_ratio(SimTime::from_secs(120), SimTime::from_secs(100)).unwrap(),
            1.2
        );
        assert_eq!(
            makespan_ratio(SimTime::from_secs(7), SimTime::from_secs(7)).unwrap(),
            1.0
        );
        assert!(matches!(
            makespan_ratio(SimTime::from_secs(1), SimTime::ZERO),
            Err(TraceError::ZeroBaseline)
        ));
    }

    #[test]
    fn csv_columns() {
        let spec = ClusterSpec::new(1, 2, 2.0).unwrap();
        let job = SimJob::builder(JobId(0), 1, 1.0)
            .arrival(SimTime::from_secs(1))
            .task_lengths([1.0])
            .build()
            .unwrap();
        let alloc = Allocation {
            job: JobId(0),
            cores: vec![CoreId::new(0, 0)],
            start: SimTime::from_secs(2),
        };
        let rep = CompletionReport {
            job: JobId(0),
            start: SimTime::from_secs(2),
            finish: SimTime::from_secs(3),
            per_core_busy: [(CoreId::new(0, 0), SimTime::from_secs(1))]
                .into_iter()
                .collect(),
            chunk_log: vec![],
        };
        let combo = |u| Combo {
            bls: BlsPolicy::Fcfs,
            als: ChunkPolicy::Gss,
            upsilon: u,
        };
        let m0 = MetricsReport::from_run(
            combo(0.0),
            &spec,
            &[&job],
            std::slice::from_ref(&alloc),
            std::slice::from_ref(&rep),
        )
        .unwrap();
        assert_eq!(m0.makespan, SimTime::from_secs(2));
        assert_eq!(m0.core_utilization[&CoreId::new(0, 0)], 0.5);
        assert_eq!(m0.core_utilization[&CoreId::new(0, 1)], 0.0);
        let mut m1 = m0.clone();
        m1.combo = combo(0.25);
        m1.makespan = SimTime::from_secs(3);
        let csv = metrics_csv_string(&[m0.clone(), m1], true);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "bls,als,upsilon,makespan_s,mean_wait_s,max_wait_s,utilization,ratio"
        );
        assert_eq!(
            lines[1],
            "fcfs,gss,0,2.000000,1.000000,1.000000,0.250000,1.000000"
        );
        assert!(lines[2].starts_with("fcfs,gss,0.25,3.000000,") && lines[2].ends_with(",1.500000"));
        let plain = metrics_csv_string(&[m0], false);
        assert_eq!(plain.lines().next().unwrap(), METRICS_HEADER.join(","));
    }
}
