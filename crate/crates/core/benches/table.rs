//! Run once with default features and once with `--no-default-features` to
//! compare the rayon and sequential backends; every benchmark id carries the
//! backend name.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use lanecuckoo::hashing::observed_collisions;
use lanecuckoo::{par, HashFn, Key, Table, TableConfig};

fn filled(buckets: usize, load: f64) -> Table {
    let t = Table::new(buckets, TableConfig::default()).unwrap();
    let n = (load * t.capacity() as f64) as u32;
    for k in 0..n {
        t.insert(Key::must(k.wrapping_mul(0x9E37_79B9) % u32::MAX), k);
    }
    t
}

fn scans(c: &mut Criterion) {
    let backend = par::backend_name();
    let t = filled(1 << 14, 0.8);
    let mut g = c.benchmark_group("scan");
    g.throughput(Throughput::Elements(t.capacity() as u64));
    g.bench_function(format!("count_entries/{backend}"), |b| {
        b.iter(|| t.count_entries())
    });
    g.bench_function(format!("check_consistency/{backend}"), |b| {
        b.iter(|| t.check_consistency().unwrap())
    });
    g.finish();
}

fn collisions(c: &mut Criterion) {
    let backend = par::backend_name();
    let keys: Vec<Key> = (0..1u32 << 20)
        .map(|k| Key::must(k.wrapping_mul(2_654_435_761) % u32::MAX))
        .collect();
    let mut g = c.benchmark_group("collisions");
    g.throughput(Throughput::Elements(keys.len() as u64));
    for f in [HashFn::BitHash1, HashFn::Crc32] {
        g.bench_function(format!("{f}/{backend}"), |b| {
            b.iter(|| observed_collisions(&keys, f, 1 << 18))
        });
    }
    g.finish();
}

fn resize(c: &mut Criterion) {
    let backend = par::backend_name();
    let mut g = c.benchmark_group("resize");
    g.sample_size(20);
    g.bench_function(format!("expand_round_4096/{backend}"), |b| {
        b.iter_batched(
            || filled(1 << 12, 0.85),
            |mut t| {
                t.expand_batch(1 << 12);
                t
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn point_ops(c: &mut Criterion) {
    let t = filled(1 << 14, 0.7);
    let mut g = c.benchmark_group("ops");
    g.bench_function("lookup_hit", |b| {
        let mut i = 0u32;
        b.iter(|| {
            i = (i + 1) % 1000;
            t.lookup(Key::must(i.wrapping_mul(0x9E37_79B9) % u32::MAX))
        })
    });
    g.bench_function("insert_replace", |b| {
        let mut i = 0u32;
        b.iter(|| {
            i = (i + 1) % 1000;
            t.insert(Key::must(i.wrapping_mul(0x9E37_79B9) % u32::MAX), i)
        })
    });
    g.finish();
}

criterion_group!(benches, scans, collisions, resize, point_ops);
criterion_main!(benches);
