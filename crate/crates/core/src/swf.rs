//! Standard Workload Format (SWF) reading, writing and window extraction.
//!
//! An SWF file is line oriented: lines starting with `;` are header
//! comments, every other non-blank line carries 18 whitespace-separated
//! integers, with `-1` meaning "unknown".

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SwfError {
    #[error("line {line}, field {column}: `{token}` is not an integer")]
    BadToken {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}: expected 18 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("workload has no usable jobs")]
    Empty,
    #[error("window span must be positive, got {0}")]
    BadSpan(i64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const FIELD_COUNT: usize = 18;

/// SWF status code for a job cancelled by the user.
pub const STATUS_CANCELLED: i64 = 5;

/// One SWF data line. Field order follows the format definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JobRecord {
    pub job_number: i64,
    pub submit_time: i64,
    pub wait_time: i64,
    pub run_time: i64,
    pub allocated_processors: i64,
    pub average_cpu_time: i64,
    pub used_memory: i64,
    pub requested_processors: i64,
    pub requested_time: i64,
    pub requested_memory: i64,
    pub status: i64,
    pub user_id: i64,
    pub group_id: i64,
    pub executable: i64,
    pub queue: i64,
    pub partition: i64,
    pub preceding_job: i64,
    pub think_time: i64,
}

impl JobRecord {
    pub fn from_fields(f: [i64; FIELD_COUNT]) -> Self {
        JobRecord {
            job_number: f[0],
            submit_time: f[1],
            wait_time: f[2],
            run_time: f[3],
            allocated_processors: f[4],
            average_cpu_time: f[5],
            used_memory: f[6],
            requested_processors: f[7],
            requested_time: f[8],
            requested_memory: f[9],
            status: f[10],
            user_id: f[11],
            group_id: f[12],
            executable: f[13],
            queue: f[14],
            partition: f[15],
            preceding_job: f[16],
            think_time: f[17],
        }
    }

    pub fn fields(&self) -> [i64; FIELD_COUNT] {
        [
            self.job_number,
            self.submit_time,
            self.wait_time,
            self.run_time,
            self.allocated_processors,
            self.average_cpu_time,
            self.used_memory,
            self.requested_processors,
            self.requested_time,
            self.requested_memory,
            self.status,
            self.user_id,
            self.group_id,
            self.executable,
            self.queue,
            self.partition,
            self.preceding_job,
            self.think_time,
        ]
    }

    /// Core demand: requested processors, falling back to allocated when unknown.
    pub fn processors(&self) -> Option<u32> {
        [self.requested_processors, self.allocated_processors]
            .into_iter()
            .find(|&p| p > 0)
            .and_then(|p| u32::try_from(p).ok())
    }

    /// Whether the job can be simulated: it ran, it asked for cores, and it
    /// was not cancelled.
    pub fn is_usable(&self) -> bool {
        self.run_time > 0 && self.processors().is_some() && self.status != STATUS_CANCELLED
    }

    /// A blank record with every field unknown.
    pub fn unknown() -> Self {
        JobRecord::from_fields([-1; FIELD_COUNT])
    }
}

/// A parsed SWF file. Records are kept sorted by submit time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkloadFile {
    pub header_comments: Vec<String>,
    pub records: Vec<JobRecord>,
}

impl WorkloadFile {
    pub fn new(header_comments: Vec<String>, mut records: Vec<JobRecord>) -> Self {
        records.sort_by_key(|r| r.submit_time);
        WorkloadFile {
            header_comments,
            records,
        }
    }

    pub fn usable(&self) -> impl Iterator<Item = &JobRecord> {
        self.records.iter().filter(|r| r.is_usable())
    }

    pub fn usable_count(&self) -> usize {
        self.usable().count()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for line in &self.header_comments {
            writeln!(out, "{line}")?;
        }
        for r in &self.records {
            let mut first = true;
            for v in r.fields() {
                if !first {
                    out.write_all(b" ")?;
                }
                write!(out, "{v}")?;
                first = false;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_swf_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("SWF output is ASCII")
    }
}

pub fn parse_swf<R: BufRead>(input: R) -> Result<WorkloadFile, SwfError> {
    let mut header = Vec::new();
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.starts_with(';') {
            header.push(line.trim_end_matches('\r').to_string());
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = [0i64; FIELD_COUNT];
        let mut n = 0;
        for tok in trimmed.split_whitespace() {
            if n < FIELD_COUNT {
                fields[n] = tok.parse().map_err(|_| SwfError::BadToken {
                    line: lineno,
                    column: n + 1,
                    token: tok.to_string(),
                })?;
            }
            n += 1;
        }
        if n != FIELD_COUNT {
            return Err(SwfError::FieldCount {
                line: lineno,
                found: n,
            });
        }
        records.push(JobRecord::from_fields(fields));
    }
    Ok(WorkloadFile::new(header, records))
}

pub fn parse_swf_str(text: &str) -> Result<WorkloadFile, SwfError> {
    parse_swf(text.as_bytes())
}

/// Result of [`densest_window`]: the extracted workload and where it started
/// in the original time base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub start: i64,
    pub usable_jobs: usize,
    pub workload: WorkloadFile,
}

/// Finds the `span`-second window `[t, t + span)` holding the most usable
/// jobs, earliest `t` on ties, and returns its records with submit times
/// shifted so the window opens at 0.
///
/// Only usable records' submit times are tried as window starts.
pub fn densest_window(w: &WorkloadFile, span: i64) -> Result<Window, SwfError> {
    if span <= 0 {
        return Err(SwfError::BadSpan(span));
    }
    let times: Vec<i64> = w.usable().map(|r| r.submit_time).collect();
    if times.is_empty() {
        return Err(SwfError::Empty);
    }
    let mut best: Option<(usize, i64)> = None;
    let mut hi = 0;
    for (lo, &t) in times.iter().enumerate() {
        if lo > 0 && times[lo - 1] == t {
            continue;
        }
        let end = t.saturating_add(span);
        hi = hi.max(lo);
        while hi < times.len() && times[hi] < end {
            hi += 1;
        }
        let count = hi - lo;
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, t));
        }
    }
    let (usable_jobs, start) = best.expect("at least one candidate");
    let end = start.saturating_add(span);
    let records = w
        .records
        .iter()
        .filter(|r| r.submit_time >= start && r.submit_time < end)
        .map(|r| JobRecord {
            submit_time: r.submit_time - start,
            ..*r
        })
        .collect();
    Ok(Window {
        start,
        usable_jobs,
        workload: WorkloadFile::new(w.header_comments.clone(), records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(job: i64, submit: i64, run: i64, procs: i64) -> JobRecord {
        JobRecord {
            job_number: job,
            submit_time: submit,
            run_time: run,
            allocated_processors: procs,
            requested_processors: procs,
            status: 1,
            ..JobRecord::unknown()
        }
    }

    #[test]
    fn positional_mapping() {
        let w = parse_swf_str("1 0 0 100 64 -1 -1 64 3600 -1 1 7 -1 -1 -1 -1 -1 -1\n").unwrap();
        let r = &w.records[0];
        assert_eq!(r.job_number, 1);
        assert_eq!(r.submit_time, 0);
        assert_eq!(r.run_time, 100);
        assert_eq!(r.allocated_processors, 64);
        assert_eq!(r.requested_time, 3600);
        assert_eq!(r.user_id, 7);
        assert_eq!(r.think_time, -1);
    }

    #[test]
    fn comments_kept() {
        let w = parse_swf_str("; MaxNodes: 512\n;\n\n2 5 0 1 1 -1 -1 1 1 -1 1 1 1 1 1 1 -1 -1\n")
            .unwrap();
        assert_eq!(w.header_comments, vec!["; MaxNodes: 512", ";"]);
        assert_eq!(w.records.len(), 1);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_swf_str("; h\n1 0 0 x 1 1 1 1 1 1 1 1 1 1 1 1 1 1\n") {
            Err(SwfError::BadToken {
                line: 2,
                column: 4,
                token,
            }) => assert_eq!(token, "x"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_swf_str("1 2 3\n"),
            Err(SwfError::FieldCount { line: 1, found: 3 })
        ));
        assert!(matches!(
            parse_swf_str(&"1 ".repeat(19)),
            Err(SwfError::FieldCount { found: 19, .. })
        ));
    }

    #[test]
    fn records_sorted_stably() {
        let w = WorkloadFile::new(
            vec![],
            vec![
                rec(1, 9, 1, 1),
                rec(2, 3, 1, 1),
                rec(3, 9, 1, 1),
                rec(4, 0, 1, 1),
            ],
        );
        let order: Vec<_> = w.records.iter().map(|r| r.job_number).collect();
        assert_eq!(order, vec![4, 2, 1, 3]);
    }

    #[test]
    fn usability() {
        assert!(rec(1, 0, 10, 4).is_usable());
        assert!(!rec(1, 0, 0, 4).is_usable());
        assert!(!rec(1, 0, 10, -1).is_usable());
        let only_alloc = JobRecord {
            requested_processors: -1,
            ..rec(1, 0, 10, 8)
        };
        assert_eq!(only_alloc.processors(), Some(8));
        let only_req = JobRecord {
            allocated_processors: -1,
            ..rec(1, 0, 10, 8)
        };
        assert_eq!(only_req.processors(), Some(8));
        let cancelled = JobRecord {
            status: STATUS_CANCELLED,
            ..rec(1, 0, 10, 4)
        };
        assert!(!cancelled.is_usable());
    }

    #[test]
    fn unique_densest_window() {
        let w = WorkloadFile::new(
            vec![],
            [0, 1, 2, 100].iter().map(|&t| rec(t, t, 5, 1)).collect(),
        );
        let win = densest_window(&w, 10).unwrap();
        assert_eq!(win.start, 0);
        assert_eq!(win.usable_jobs, 3);
        let subs: Vec<_> = win.workload.records.iter().map(|r| r.submit_time).collect();
        assert_eq!(subs, vec![0, 1, 2]);
    }

    #[test]
    fn tie_goes_to_earliest_window() {
        let w = WorkloadFile::new(
            vec![],
            [0, 5, 10].iter().map(|&t| rec(t, t, 5, 1)).collect(),
        );
        // exhaustive oracle over every integer start in range
        let mut best = (0usize, i64::MIN);
        for t in -5..=10 {
            let c = w
                .records
                .iter()
                .filter(|r| r.submit_time >= t && r.submit_time < t + 5)
                .count();
            if c > best.0 {
                best = (c, t);
            }
        }
        assert_eq!(best, (1, -4));
        let win = densest_window(&w, 5).unwrap();
        assert_eq!((win.usable_jobs, win.start), (1, 0));
        assert_eq!(win.workload.records.len(), 1);
        assert_eq!(win.workload.records[0].job_number, 0);
    }

    #[test]
    fn unusable_jobs_do_not_start_or_count() {
        let mut records: Vec<_> = [0, 50, 51, 52].iter().map(|&t| rec(t, t, 5, 1)).collect();
        records[1].run_time = 0;
        let w = WorkloadFile::new(vec![], records);
        let win = densest_window(&w, 10).unwrap();
        assert_eq!(win.start, 51);
        assert_eq!(win.usable_jobs, 2);
    }

    #[test]
    fn window_errors() {
        assert!(matches!(
            densest_window(&WorkloadFile::default(), 10),
            Err(SwfError::Empty)
        ));
        let w = WorkloadFile::new(vec![], vec![rec(1, 0, 1, 1)]);
        assert!(matches!(densest_window(&w, 0), Err(SwfError::BadSpan(0))));
        assert_eq!(
            densest_window(&w, 86_400).unwrap().workload.records.len(),
            1
        );
    }

    fn arb_record() -> impl Strategy<Value = JobRecord> {
        (
            0i64..100_000,
            -1i64..5_000,
            prop::array::uniform16(-1i64..1_000),
        )
            .prop_map(|(submit, run, rest)| {
                let mut f = [0i64; FIELD_COUNT];
                f[0] = rest[0];
                f[1] = submit;
                f[3] = run;
                f[2] = rest[1];
                f[4..].copy_from_slice(&rest[2..16]);
                JobRecord::from_fields(f)
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_fixed_point(
            header in prop::collection::vec("; [a-zA-Z0-9: ]{0,20}", 0..4),
            records in prop::collection::vec(arb_record(), 0..40),
        ) {
            let w = WorkloadFile::new(header, records);
            let once = parse_swf_str(&w.to_swf_string()).unwrap();
            prop_assert_eq!(&once, &w);
            let twice = parse_swf_str(&once.to_swf_string()).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn densest_matches_quadratic_scan(
            submits in prop::collection::vec(0i64..500, 1..80),
            span in 1i64..100,
        ) {
            let w = WorkloadFile::new(vec![], submits.iter().enumerate().map(|(i, &t)| rec(i as i64, t, 1, 1)).collect());
            let win = densest_window(&w, span).unwrap();
            let mut best = (0usize, 0i64);
            for a in &w.records {
                let c = w.records.iter().filter(|b| b.submit_time >= a.submit_time && b.submit_time < a.submit_time + span).count();
                if c > best.0 || (c == best.0 && a.submit_time < best.1) {
                    best = (c, a.submit_time);
                }
            }
            prop_assert_eq!((win.usable_jobs, win.start), best);
            prop_assert_eq!(win.workload.records.iter().map(|r| r.submit_time).min(), Some(0));
        }
    }
}
