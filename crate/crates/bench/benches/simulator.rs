use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dualsim_bench::synthetic_jobs;
use dualsim_core::coordinator::{run, ExecMode, RunConfig};
use dualsim_core::{
    chunk_sequence, Allocation, BlsPolicy, ChunkPolicy, CoreId, JobId, SimJob, SimTime,
};

fn chunks(c: &mut Criterion) {
    let mut g = c.benchmark_group("chunk_sequence");
    for policy in ChunkPolicy::ALL {
        g.bench_function(BenchmarkId::new(policy.name(), "10000/64"), |b| {
            b.iter(|| chunk_sequence(policy, black_box(10_000), black_box(64)).unwrap())
        });
    }
    g.finish();
}

fn one_job(c: &mut Criterion) {
    let job = SimJob::builder(JobId(0), 64, 50_000.0)
        .task_lengths((0..4096).map(|i| 10.0 + (i % 7) as f64))
        .build()
        .unwrap();
    let alloc = Allocation {
        job: JobId(0),
        cores: (0..64).map(|i| CoreId::new(0, i)).collect(),
        start: SimTime::ZERO,
    };
    let mut g = c.benchmark_group("simulate_job");
    g.throughput(Throughput::Elements(job.tasks().len() as u64));
    for policy in ChunkPolicy::ALL {
        g.bench_function(policy.name(), |b| {
            b.iter(|| {
                dualsim_core::simulate_job(black_box(&job), &alloc, policy, 46.875, 0.0).unwrap()
            })
        });
    }
    g.finish();
}

fn batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(10);
    for n in [100, 1000] {
        let (jobs, spec) = synthetic_jobs(n, 0.25, 1);
        g.throughput(Throughput::Elements(n as u64));
        for (label, mode) in [
            ("sequential", ExecMode::Sequential),
            ("parallel", ExecMode::Parallel { threads: None }),
        ] {
            let cfg = RunConfig {
                mode,
                upsilon: 0.25,
                ..RunConfig::new(BlsPolicy::Fcfs, ChunkPolicy::Static)
            };
            g.bench_with_input(BenchmarkId::new(label, n), &jobs, |b, jobs| {
                b.iter(|| run(jobs, &spec, &cfg).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, chunks, one_job, batch);
criterion_main!(benches);
