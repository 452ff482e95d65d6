//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lanecuckoo::hashing::{bithash1, bithash2, uniform_model};
use lanecuckoo::lane_group::{
    ballot, first_set, prefix_rank, select_nth_one, LaneMask, LaneVector,
};
use lanecuckoo::{HashFn, InsertKind, Key, Table, TableConfig};
use lanecuckoo_bench::stats::{ideal_loads, ideal_trials};
use lanecuckoo_bench::workload::Op;
use lanecuckoo_bench::{
    csr_sweep, resize_stress, run_once, run_workload, step_breakdown_report, Plan, RunOptions,
    WorkloadKind, WorkloadSpec,
};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(
        elapsed < Duration::from_secs(limit_secs),
        format!("took {:.1} s, limit {limit_secs} s", elapsed.as_secs_f64()),
    )
}

fn opts(buckets: usize) -> RunOptions {
    RunOptions {
        buckets,
        reps: 1,
        warmup: false,
        ..RunOptions::default()
    }
}

fn sequential_oracle() -> Outcome {
    let start = Instant::now();
    let spec = WorkloadSpec {
        key_space: 1 << 14,
        seed: 0x5EED,
        ..WorkloadSpec::new(WorkloadKind::mixed(0.5, 0.3, 0.2), 100_000)
    };
    let plan = Plan::new(&spec, &opts(64)).map_err(|e| e.to_string())?;
    let run = run_once(&plan).map_err(|e| e.to_string())?;
    let mut model = BTreeMap::new();
    for op in plan.stream(0) {
        match op {
            Op::Insert(k, v) => {
                model.insert(k, v);
            }
            Op::Lookup(_) => {}
            Op::Delete(k) => {
                model.remove(&k);
            }
        }
    }
    let want: Vec<(Key, u32)> = model.into_iter().collect();
    let got = run.table.entries();
    ensure(
        got == want,
        format!("table holds {} entries, model {}", got.len(), want.len()),
    )?;
    ensure(
        run.report.audit.passed(),
        format!("{:?}", run.report.audit.errors),
    )?;
    within(start.elapsed(), 10)?;
    Ok(format!(
        "{} live entries equal the model, {} resize batches, {:.2} s",
        got.len(),
        run.report.resize_events,
        start.elapsed().as_secs_f64()
    ))
}

fn concurrent_audit() -> Outcome {
    let start = Instant::now();
    let spec = WorkloadSpec {
        key_space: 1 << 20,
        seed: 2,
        workers: 8,
        ..WorkloadSpec::new(WorkloadKind::mixed(0.5, 0.3, 0.2), 8 << 17)
    };
    let r = run_workload(&spec, &opts(1 << 12)).map_err(|e| e.to_string())?;
    let a = &r.audit;
    ensure(
        a.exact && a.conserved,
        format!("conservation: {:?}", a.errors),
    )?;
    ensure(
        a.findable && a.divergences == 0,
        format!("findability: {:?}", a.errors),
    )?;
    ensure(a.passed(), format!("{:?}", a.errors))?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{} inserted - {} deleted = {} live, all findable, {} resize batches, {:.2} s",
        a.expected_live + r.deletes_ok,
        r.deletes_ok,
        a.live_entries,
        r.resize_events,
        start.elapsed().as_secs_f64()
    ))
}

fn high_load_fill() -> Outcome {
    let start = Instant::now();
    let slots = 1usize << 20;
    let spec = WorkloadSpec {
        target_load: Some(0.95),
        seed: 3,
        ..WorkloadSpec::new(WorkloadKind::BulkInsert, 0)
    };
    let r = run_workload(&spec, &opts(1 << 15)).map_err(|e| e.to_string())?;
    let want = (0.95 * slots as f64).ceil() as u64;
    ensure(
        r.ops == want,
        format!("inserted {} keys, wanted {want}", r.ops),
    )?;
    ensure(
        r.resize_events == 0 && r.final_buckets == 1 << 15,
        "table resized",
    )?;
    ensure(
        r.counters.failed_pending == 0,
        format!("{} FailedPending outcomes", r.counters.failed_pending),
    )?;
    let limit = slots / 50;
    ensure(
        r.stash_peak <= limit,
        format!("stash peak {} > {limit}", r.stash_peak),
    )?;
    ensure(r.audit.passed(), format!("{:?}", r.audit.errors))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "{want} keys, 0 failed, stash peak {} (limit {limit}), {:.2} s",
        r.stash_peak,
        start.elapsed().as_secs_f64()
    ))
}

fn step_distribution() -> Outcome {
    let spec = WorkloadSpec {
        target_load: Some(0.75),
        seed: 4,
        ..WorkloadSpec::new(WorkloadKind::BulkInsert, 0)
    };
    let r = run_workload(&spec, &opts(1 << 12)).map_err(|e| e.to_string())?;
    let b = step_breakdown_report(&r.counters).map_err(|e| e.to_string())?;
    ensure(
        b.step3_entry_rate <= 0.05,
        format!("step 3 entry rate {:.4}", b.step3_entry_rate),
    )?;
    ensure(b.lock_rate <= 0.02, format!("lock rate {:.4}", b.lock_rate))?;
    Ok(format!(
        "step 3 entered by {:.3}% of inserts, locks {:.3}%",
        100.0 * b.step3_entry_rate,
        100.0 * b.lock_rate
    ))
}

fn resize_round_trip() -> Outcome {
    let start = Instant::now();
    let cfg = TableConfig::default();
    let s = resize_stress(1 << 10, cfg.clone(), 5).map_err(|e| e.to_string())?;
    for p in &s.phases {
        ensure(
            p.matches_model,
            format!("{}: multiset differs from model", p.phase),
        )?;
        ensure(p.all_found, format!("{}: lookup failed", p.phase))?;
        ensure(p.consistent, format!("{}: inconsistent", p.phase))?;
    }
    let grown = &s.phases[0];
    ensure(
        grown.load_factor <= cfg.grow_threshold,
        format!("load {:.4} after expansion", grown.load_factor),
    )?;
    ensure(
        s.expand_batches > 0 && s.contract_batches > 0,
        "no resize happened",
    )?;
    ensure(
        s.peak_buckets >= 2 * s.initial_buckets,
        "no full expansion round",
    )?;
    ensure(
        s.final_buckets == s.initial_buckets,
        format!(
            "ended at {} buckets, started at {}",
            s.final_buckets, s.initial_buckets
        ),
    )?;
    ensure(s.pending_lost == 0, "entries lost")?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "buckets {} -> {} -> {}, {} expand / {} contract batches, {:.2} s",
        s.initial_buckets,
        s.peak_buckets,
        s.final_buckets,
        s.expand_batches,
        s.contract_batches,
        start.elapsed().as_secs_f64()
    ))
}

/// Exact variance of the empty-bin count, which equals `Var(Y)` since
/// `Y = n - m + empty`.
fn empty_bin_variance(n: f64, m: f64) -> f64 {
    let p0 = (1.0 - 1.0 / m).powf(n);
    let p00 = (1.0 - 2.0 / m).powf(n);
    m * p0 + m * (m - 1.0) * p00 - (m * p0).powi(2)
}

fn uniform_binning() -> Outcome {
    let (n, m) = (1u64 << 16, 1u64 << 12);
    let (nf, mf) = (n as f64, m as f64);
    let expected = nf - mf * (1.0 - (1.0 - 1.0 / mf).powf(nf));
    let trials = 50;
    let ys = ideal_trials(n, m, trials, 6);
    let mean = ys.iter().sum::<u64>() as f64 / trials as f64;
    let sample_var =
        ys.iter().map(|&y| (y as f64 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    // At this load almost no bin stays empty, so every trial tends to give
    // the same Y and the sample variance collapses to zero; the standard
    // error comes from the exact variance instead.
    let se = (empty_bin_variance(nf, mf) / trials as f64).sqrt();
    ensure(
        (mean - expected).abs() <= 3.0 * se,
        format!("mean Y {mean:.4} vs E[Y] {expected:.4}, SE {se:.5}, sample var {sample_var:.5}"),
    )?;
    ensure(
        (uniform_model(n, m).expected_collisions - expected).abs() < 1e-6 * expected,
        "library model disagrees with the closed form",
    )?;

    let (n, m) = (1u64 << 12, 1u64 << 16);
    let empty = ideal_loads(n, m, 66).iter().filter(|&&l| l == 0).count() as f64;
    let poisson = m as f64 * (-(n as f64) / m as f64).exp();
    let rel = (empty - poisson).abs() / poisson;
    ensure(rel <= 0.01, format!("empty bins {empty} vs {poisson:.1}"))?;
    Ok(format!(
        "mean Y {mean:.4} vs E[Y] {expected:.4} ({:.2} SE); empty bins off by {:.3}%",
        (mean - expected).abs() / se,
        100.0 * rel
    ))
}

fn csr_behavior() -> Outcome {
    let m = 1u64 << 18;
    let crc = csr_sweep(&[HashFn::Crc32], m, &[1 << 16, 1 << 18, 1 << 20], 7)
        .map_err(|e| e.to_string())?;
    let bit = csr_sweep(
        &[HashFn::BitHash1, HashFn::BitHash2],
        m,
        &[1 << 18, 1 << 20],
        7,
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<_> = crc.iter().chain(&bit).collect();
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !(0.9..=1.1).contains(&r.csr))
        .map(|r| format!("{} n={} csr={:.4}", r.hash, r.n, r.csr))
        .collect();
    ensure(bad.is_empty(), bad.join("; "))?;
    Ok(rows
        .iter()
        .map(|r| format!("{}@2^{}={:.3}", r.hash, r.n.trailing_zeros(), r.csr))
        .collect::<Vec<_>>()
        .join(" "))
}

fn lane_primitives() -> Outcome {
    let mut rng = SplitMix64::seed_from_u64(8);
    for i in 0..100_000 {
        let bits: u32 = match i % 4 {
            0 => rng.gen(),
            1 => rng.gen::<u32>() & rng.gen::<u32>() & rng.gen::<u32>(),
            2 => rng.gen::<u32>() | rng.gen::<u32>(),
            _ => [0, u32::MAX, 1, 1 << 31][(i / 4) % 4],
        };
        let preds = LaneVector::from_fn(|l| bits >> l & 1 == 1);
        let mut naive_ballot = 0u32;
        for l in 0..32 {
            if preds.0[l] {
                naive_ballot |= 1 << l;
            }
        }
        let mask = ballot(&preds);
        ensure(mask.bits() == naive_ballot, format!("ballot {bits:#x}"))?;
        let naive_first = (0..32).find(|&l| bits >> l & 1 == 1);
        ensure(
            first_set(LaneMask(bits)) == naive_first,
            format!("first_set {bits:#x}"),
        )?;
        let mut below = 0;
        let mut ones = Vec::new();
        for l in 0..32 {
            ensure(
                prefix_rank(LaneMask(bits), l) == below,
                format!("prefix_rank {bits:#x} {l}"),
            )?;
            if bits >> l & 1 == 1 {
                below += 1;
                ones.push(l);
            }
        }
        for r in 0..33u32 {
            ensure(
                select_nth_one(LaneMask(bits), r) == ones.get(r as usize).copied(),
                format!("select_nth_one {bits:#x} {r}"),
            )?;
        }
    }
    Ok("100000 masks agree with bit loops".into())
}

fn eviction_bound() -> Outcome {
    let mut lines = Vec::new();
    for max_evictions in [1u32, 4, 16] {
        let cfg = TableConfig {
            max_evictions,
            ..TableConfig::default()
        };
        let t = Table::new(2, cfg).map_err(|e| e.to_string())?;
        // Every key's candidates are buckets 0 and 1 in some order, so two
        // full buckets form a closed cycle.
        let keys: Vec<u32> = (0..)
            .filter(|&k| bithash1(k) & 1 != bithash2(k) & 1)
            .take(65)
            .collect();
        for &k in &keys[..64] {
            let o = t.insert(Key::must(k), k);
            ensure(
                o.kind.is_success() && !o.entered_step3,
                format!("fill key {k}: {:?}", o.kind),
            )?;
        }
        let last = keys[64];
        let o = t.insert(Key::must(last), last);
        ensure(o.entered_step3, "step 3 not entered")?;
        ensure(
            o.rounds == max_evictions,
            format!("{} rounds with max_evictions {max_evictions}", o.rounds),
        )?;
        ensure(
            o.kind == InsertKind::Stashed,
            format!("outcome {:?}", o.kind),
        )?;
        ensure(
            t.stash().len() == 1,
            "stash does not hold exactly one entry",
        )?;
        let got: Vec<u32> = t.entries().iter().map(|e| e.0.get()).collect();
        let mut want = keys.clone();
        want.sort_unstable();
        ensure(got == want, "multiset changed")?;
        ensure(
            keys.iter().all(|&k| t.lookup(Key::must(k)) == Some(k)),
            "lookup failed",
        )?;
        t.check_consistency()?;
        lines.push(format!("{max_evictions}->{}", o.rounds));
    }
    Ok(format!(
        "rounds {} then stash, 65/65 keys present",
        lines.join(" ")
    ))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_lanecuckoo-bench");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: &[&[&str]] = &[
        &["--mode", "mixed", "--ops", "50000", "--buckets", "64"],
        &["--mode", "bulk-insert", "--ops", "30000", "--buckets", "64"],
        &[
            "--mode",
            "bulk-lookup",
            "--ops",
            "20000",
            "--buckets",
            "256",
        ],
        &["--mode", "breakdown", "--buckets", "256"],
        &["--mode", "resize-stress", "--buckets", "64"],
        &["--mode", "csr", "--buckets", "4096", "--ops", "65536"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let path = dir.path().join(format!("run{i}_{rep}.csv"));
            let status = Command::new(bin)
                .args(*args)
                .args(["--workers", "1", "--seed", "42", "--reps", "2", "--csv"])
                .arg(&path)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(
                status.status.success(),
                format!("{args:?} exited with {}", status.status),
            )?;
            outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(
            outputs[0] == outputs[1],
            format!("{args:?}: CSV differs between runs"),
        )?;
        ensure(outputs[0].len() > 40, format!("{args:?}: CSV too short"))?;
    }
    Ok(format!(
        "{} modes produced byte-identical CSV twice",
        runs.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("sequential oracle equivalence", sequential_oracle),
        ("concurrent audit", concurrent_audit),
        ("high-load fill", high_load_fill),
        ("step distribution", step_distribution),
        ("resize round trip", resize_round_trip),
        ("uniform binning model", uniform_binning),
        ("collision speedup ratio", csr_behavior),
        ("lane primitives", lane_primitives),
        ("eviction bound", eviction_bound),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
