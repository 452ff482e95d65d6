//! Collision statistics, step breakdown and the resize stress driver.

use lanecuckoo::hashing::{collisions_from_loads, csr, observed_collisions, uniform_model};
use lanecuckoo::{par, HashFn, InsertKind, Key, ResizeAction, StepCounters, Table, TableConfig};
use rand::Rng;
use serde::Serialize;

use crate::error::BenchError;
use crate::keys::{self, gen_keys, FULL_KEY_SPACE};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsrRow {
    #[serde(rename = "fn")]
    pub hash: String,
    pub n: u64,
    pub m: u64,
    pub expected_y: f64,
    pub observed_y: u64,
    pub csr: f64,
    /// Fewer than one expected collision; not meaningful for pass/fail.
    pub low_signal: bool,
}

/// CSR of each hash function for each key count, over `m` single-slot bins.
/// Key sets are nested prefixes of one seeded draw.
pub fn csr_sweep(
    fns: &[HashFn],
    m: u64,
    n_values: &[u64],
    seed: u64,
) -> Result<Vec<CsrRow>, BenchError> {
    if m == 0 {
        return Err(BenchError::Config("bin count must be at least 1".into()));
    }
    let n_max = n_values.iter().copied().max().unwrap_or(0);
    let keys = gen_keys(n_max as usize, seed, FULL_KEY_SPACE)?;
    let mut rows = Vec::with_capacity(fns.len() * n_values.len());
    for &f in fns {
        for &n in n_values {
            let model = uniform_model(n, m);
            let observed = observed_collisions(&keys[..n as usize], f, m);
            rows.push(CsrRow {
                hash: f.name().to_string(),
                n,
                m,
                expected_y: model.expected_collisions,
                observed_y: observed,
                csr: csr(model.expected_collisions, observed),
                low_signal: model.expected_collisions < 1.0,
            });
        }
    }
    Ok(rows)
}

/// Bin loads after throwing `n` balls into `m` bins with the seeded PRNG.
pub fn ideal_loads(n: u64, m: u64, seed: u64) -> Vec<u32> {
    let mut rng = keys::rng(seed);
    let bins: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m) as usize).collect();
    par::histogram(&bins, m as usize, |&b| b)
}

/// Observed collision counts of `trials` independent ideal binnings.
pub fn ideal_trials(n: u64, m: u64, trials: usize, seed: u64) -> Vec<u64> {
    par::map_indices(trials, |t| {
        collisions_from_loads(&ideal_loads(n, m, keys::substream(seed, t as u64)))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Breakdown {
    pub inserts: u64,
    /// Share of inserts finishing in each step; Step 4 includes stash-full
    /// failures.
    pub count_pct: [f64; 4],
    /// Share of sampled wall time spent in each step.
    pub time_pct: [f64; 4],
    pub timed_samples: u64,
    pub step3_entry_rate: f64,
    pub lock_rate: f64,
    pub failed_pct: f64,
}

pub fn step_breakdown_report(c: &StepCounters) -> Result<Breakdown, BenchError> {
    if c.inserts == 0 {
        return Err(BenchError::Config(
            "breakdown needs at least one insert".into(),
        ));
    }
    let n = c.inserts as f64;
    let counts = [
        c.step1_hits,
        c.step2_hits,
        c.step3_successes,
        c.step4_hits + c.failed_pending,
    ];
    let total_time: f64 = c.step_time.iter().map(|d| d.as_secs_f64()).sum();
    let time_pct = if total_time > 0.0 {
        c.step_time.map(|d| 100.0 * d.as_secs_f64() / total_time)
    } else {
        [0.0; 4]
    };
    Ok(Breakdown {
        inserts: c.inserts,
        count_pct: counts.map(|x| 100.0 * x as f64 / n),
        time_pct,
        timed_samples: c.timed_samples,
        step3_entry_rate: c.step3_entries as f64 / n,
        lock_rate: c.lock_acquisitions as f64 / n,
        failed_pct: 100.0 * c.failed_pending as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseCheck {
    pub phase: String,
    pub buckets: usize,
    pub load_factor: f64,
    pub live: usize,
    pub matches_model: bool,
    pub all_found: bool,
    pub consistent: bool,
}

impl PhaseCheck {
    pub fn ok(&self) -> bool {
        self.matches_model && self.all_found && self.consistent
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StressReport {
    pub initial_buckets: usize,
    pub peak_buckets: usize,
    pub final_buckets: usize,
    pub expand_batches: usize,
    pub contract_batches: usize,
    pub aborted_contractions: usize,
    pub pending_lost: usize,
    pub stash_peak: usize,
    pub phases: Vec<PhaseCheck>,
    #[serde(serialize_with = "crate::report::ser_counters")]
    pub counters: StepCounters,
}

impl StressReport {
    pub fn passed(&self) -> bool {
        self.pending_lost == 0
            && self.phases.iter().all(PhaseCheck::ok)
            && self.final_buckets == self.initial_buckets
            && self.peak_buckets > self.initial_buckets
    }
}

fn check_phase(
    table: &Table,
    phase: &str,
    model: &std::collections::BTreeMap<Key, u32>,
) -> PhaseCheck {
    let entries = table.entries();
    let matches_model = entries.len() == model.len()
        && entries
            .iter()
            .zip(model)
            .all(|(a, b)| a.0 == *b.0 && a.1 == *b.1);
    let all_found = model.iter().all(|(k, v)| table.lookup(*k) == Some(*v));
    PhaseCheck {
        phase: phase.to_string(),
        buckets: table.n_buckets(),
        load_factor: table.load_factor(),
        live: entries.len(),
        matches_model,
        all_found,
        consistent: table.check_consistency().is_ok(),
    }
}

/// Grows a table from `buckets` by inserting `2 * capacity` keys with
/// resizing after every insert, then deletes down to a tenth of the original
/// capacity so that contraction returns it to its initial size.
pub fn resize_stress(
    buckets: usize,
    cfg: TableConfig,
    seed: u64,
) -> Result<StressReport, BenchError> {
    let mut t = Table::new(buckets, cfg)?;
    let n = 2 * t.capacity();
    let keep = t.capacity() / 10;
    let keys = gen_keys(n, seed, FULL_KEY_SPACE)?;
    let mut model = std::collections::BTreeMap::new();
    let mut counters = StepCounters::default();
    let (mut expands, mut contracts, mut aborted) = (0, 0, 0);
    let mut pending = Vec::new();
    let mut peak = t.n_buckets();

    let mut stash_peak = 0;
    let mut step = |t: &mut Table, pending: &mut Vec<lanecuckoo::PackedEntry>| {
        stash_peak = stash_peak.max(t.stash().peak());
        for (action, r) in t.rebalance() {
            match action {
                ResizeAction::Expand => expands += 1,
                ResizeAction::Contract => contracts += 1,
                ResizeAction::None => {}
            }
            aborted += r.aborted as usize;
        }
        for e in std::mem::take(pending) {
            if let InsertKind::FailedPending(p) = t.insert_entry(e).kind {
                pending.push(p);
            }
        }
    };

    for (i, &k) in keys.iter().enumerate() {
        let v = i as u32;
        let o = t.insert(k, v);
        counters.record(&o);
        model.insert(k, v);
        if let InsertKind::FailedPending(p) = o.kind {
            pending.push(p);
        }
        if t.maybe_resize() != ResizeAction::None || !pending.is_empty() {
            step(&mut t, &mut pending);
        }
        peak = peak.max(t.n_buckets());
    }
    let mut phases = vec![check_phase(&t, "expand", &model)];

    for &k in &keys[keep..] {
        t.delete(k);
        model.remove(&k);
        if t.maybe_resize() != ResizeAction::None {
            step(&mut t, &mut pending);
        }
    }
    step(&mut t, &mut pending);
    phases.push(check_phase(&t, "contract", &model));

    Ok(StressReport {
        initial_buckets: buckets,
        peak_buckets: peak,
        final_buckets: t.n_buckets(),
        expand_batches: expands,
        contract_batches: contracts,
        aborted_contractions: aborted,
        pending_lost: pending.len(),
        stash_peak: stash_peak.max(t.stash().peak()),
        phases,
        counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn breakdown_of_empty_table_fill_is_all_step2() {
        let t = Table::new(64, TableConfig::default()).unwrap();
        let mut c = StepCounters::default();
        for k in 0..100 {
            c.record(&t.insert(Key::must(k), k));
        }
        let b = step_breakdown_report(&c).unwrap();
        assert_eq!(b.count_pct, [0.0, 100.0, 0.0, 0.0]);
        assert_eq!(b.step3_entry_rate, 0.0);
    }

    #[test]
    fn breakdown_percentages_sum_to_100() {
        let c = StepCounters {
            step1_hits: 3,
            step2_hits: 5,
            step3_entries: 3,
            step3_successes: 1,
            step4_hits: 1,
            failed_pending: 1,
            inserts: 11,
            lock_acquisitions: 2,
            step_time: [1, 2, 3, 4].map(Duration::from_millis),
            timed_samples: 4,
            ..StepCounters::default()
        };
        let b = step_breakdown_report(&c).unwrap();
        assert!((b.count_pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert!((b.time_pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert!((b.time_pct[3] - 40.0).abs() < 1e-9);
        assert!(step_breakdown_report(&StepCounters::default()).is_err());
    }

    #[test]
    fn sweep_flags_low_signal_rows() {
        let rows = csr_sweep(&[HashFn::Crc32], 1 << 18, &[16, 1 << 16], 1).unwrap();
        assert!(rows[0].low_signal);
        assert!(!rows[1].low_signal);
        assert_eq!(rows[1].n, 1 << 16);
        assert!(
            (rows[1].expected_y - uniform_model(1 << 16, 1 << 18).expected_collisions).abs() < 1e-9
        );
    }

    #[test]
    fn ideal_loads_conserve_balls() {
        let loads = ideal_loads(1000, 37, 5);
        assert_eq!(loads.len(), 37);
        assert_eq!(loads.iter().map(|&l| l as u64).sum::<u64>(), 1000);
        assert_eq!(ideal_trials(100, 10, 3, 9), ideal_trials(100, 10, 3, 9));
    }

    #[test]
    fn stress_round_trip_small() {
        let r = resize_stress(8, TableConfig::default(), 4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.expand_batches > 0 && r.contract_batches > 0);
    }
}
