//! Worker scaling and backend comparison. Run with and without
//! `--no-default-features`; ids carry the backend name.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lanecuckoo::{par, HashFn};
use lanecuckoo_bench::{csr_sweep, run_once, Plan, RunOptions, WorkloadKind, WorkloadSpec};

fn opts() -> RunOptions {
    RunOptions {
        buckets: 1 << 12,
        reps: 1,
        warmup: false,
        ..RunOptions::default()
    }
}

fn workers(c: &mut Criterion) {
    let backend = par::backend_name();
    let n = 1 << 17;
    let mut g = c.benchmark_group("workers");
    g.sample_size(10);
    g.throughput(Throughput::Elements(n as u64));
    for (name, kind) in [
        ("bulk-insert", WorkloadKind::BulkInsert),
        ("mixed", WorkloadKind::mixed(0.5, 0.3, 0.2)),
    ] {
        for w in [1, 2, 4, 8] {
            let spec = WorkloadSpec {
                workers: w,
                key_space: if name == "mixed" {
                    n as u64
                } else {
                    u32::MAX as u64
                },
                ..WorkloadSpec::new(kind, n)
            };
            let plan = Plan::new(&spec, &opts()).unwrap();
            g.bench_with_input(
                BenchmarkId::new(format!("{name}/{backend}"), w),
                &plan,
                |b, p| b.iter(|| run_once(p).unwrap().report.ops),
            );
        }
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let backend = par::backend_name();
    let mut g = c.benchmark_group("csr_sweep");
    g.sample_size(10);
    g.bench_function(format!("all_fns_to_2^20/{backend}"), |b| {
        b.iter(|| csr_sweep(&HashFn::ALL, 1 << 18, &[1 << 16, 1 << 18, 1 << 20], 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, workers, sweep);
criterion_main!(benches);
