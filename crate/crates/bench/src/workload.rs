//! Workload generation and the multi-worker driver.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use lanecuckoo::{InsertKind, Key, PackedEntry, ResizeAction, StepCounters, Table, TableConfig};
use rand::Rng;
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::error::BenchError;
use crate::keys::{self, gen_keys, FULL_KEY_SPACE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadKind {
    BulkInsert,
    BulkLookup,
    Mixed {
        insert: f64,
        lookup: f64,
        delete: f64,
    },
}

impl WorkloadKind {
    pub fn mixed(insert: f64, lookup: f64, delete: f64) -> Self {
        WorkloadKind::Mixed {
            insert,
            lookup,
            delete,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WorkloadKind::BulkInsert => "bulk-insert",
            WorkloadKind::BulkLookup => "bulk-lookup",
            WorkloadKind::Mixed { .. } => "mixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Operations per run. For `BulkInsert` with a target load this is
    /// replaced by the key count the target requires.
    pub n_ops: usize,
    /// Keys are drawn from `[0, key_space)`.
    pub key_space: u64,
    pub seed: u64,
    pub workers: usize,
    /// `BulkInsert` only: fill to this fraction of the initial slots with
    /// resizing disabled.
    pub target_load: Option<f64>,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, n_ops: usize) -> Self {
        WorkloadSpec {
            kind,
            n_ops,
            key_space: FULL_KEY_SPACE,
            seed: 1,
            workers: 1,
            target_load: None,
        }
    }
}

/// Driver settings that are not part of the workload itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOptions {
    pub buckets: usize,
    #[serde(skip)]
    pub table: TableConfig,
    /// Measured repetitions after one warm-up run.
    pub reps: usize,
    pub warmup: bool,
    /// Every n-th insert records per-step wall time; 0 disables timing.
    pub timing_sample: u64,
    /// Mixed only: all workers share one key range instead of private shards.
    pub overlapping: bool,
    pub resize: bool,
    /// Ops a worker runs between resize checks.
    pub chunk: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            buckets: 1 << 12,
            table: TableConfig::default(),
            reps: 10,
            warmup: true,
            timing_sample: 64,
            overlapping: false,
            resize: true,
            chunk: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Insert(Key, u32),
    Lookup(Key),
    Delete(Key),
}

/// Per-run audit at quiescence.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Audit {
    pub consistent: bool,
    pub no_duplicates: bool,
    pub counters_consistent: bool,
    /// `live_entries + pending == expected_live`.
    pub conserved: bool,
    /// Every key the workers' models hold is found with its latest value.
    pub findable: bool,
    /// Operation results that disagreed with the owning worker's model.
    pub divergences: u64,
    pub expected_live: u64,
    pub live_entries: u64,
    /// Entries left unplaced after the final resize phase.
    pub pending_lost: u64,
    /// False in overlapping mode, where only structural checks are gated.
    pub exact: bool,
    pub errors: Vec<String>,
}

impl Audit {
    pub fn passed(&self) -> bool {
        let structural = self.consistent && self.no_duplicates && self.counters_consistent;
        if !self.exact {
            return structural;
        }
        structural
            && self.conserved
            && self.findable
            && self.divergences == 0
            && self.pending_lost == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub ops: u64,
    pub workers: usize,
    pub seed: u64,
    /// Mean over measured repetitions.
    pub ops_per_second: f64,
    #[serde(serialize_with = "crate::report::ser_counters")]
    pub counters: StepCounters,
    /// Stored entries (buckets and stash) over bucket slots.
    pub final_load_factor: f64,
    pub final_buckets: usize,
    pub stash_peak: usize,
    pub resize_events: usize,
    /// Mean over measured repetitions.
    pub wall_time: Duration,
    pub reps: usize,
    pub lookup_hits: u64,
    pub lookup_misses: u64,
    pub deletes_ok: u64,
    pub deletes_missed: u64,
    pub audit: Audit,
}

/// Ops assigned to `worker` out of `total`.
fn share(total: usize, workers: usize, worker: usize) -> std::ops::Range<usize> {
    let base = total / workers;
    let extra = total % workers;
    let start = worker * base + worker.min(extra);
    start..start + base + (worker < extra) as usize
}

fn value_for(i: usize) -> u32 {
    (i as u32).wrapping_mul(0x9E37_79B1) ^ 0x5BD1_E995
}

/// Deterministic op schedule of one worker.
pub struct OpStream {
    inner: Source,
}

enum Source {
    Keys {
        keys: Arc<Vec<Key>>,
        range: std::ops::Range<usize>,
        lookup: bool,
    },
    Random {
        rng: SplitMix64,
        left: usize,
        insert: f64,
        lookup: f64,
        worker: u64,
        stride: u64,
        shard_len: u64,
    },
}

impl Iterator for OpStream {
    type Item = Op;

    fn next(&mut self) -> Option<Op> {
        match &mut self.inner {
            Source::Keys {
                keys,
                range,
                lookup,
            } => {
                let i = range.next()?;
                Some(if *lookup {
                    Op::Lookup(keys[i])
                } else {
                    Op::Insert(keys[i], value_for(i))
                })
            }
            Source::Random {
                rng,
                left,
                insert,
                lookup,
                worker,
                stride,
                shard_len,
            } => {
                if *left == 0 {
                    return None;
                }
                *left -= 1;
                let u: f64 = rng.gen();
                let k = Key::must((rng.gen_range(0..*shard_len) * *stride + *worker) as u32);
                Some(if u < *insert {
                    Op::Insert(k, rng.gen())
                } else if u < *insert + *lookup {
                    Op::Lookup(k)
                } else {
                    Op::Delete(k)
                })
            }
        }
    }
}

/// Validated, fully resolved run plan shared by all repetitions.
pub struct Plan {
    spec: WorkloadSpec,
    opts: RunOptions,
    /// Key set for the bulk kinds.
    keys: Arc<Vec<Key>>,
    resize: bool,
}

impl Plan {
    pub fn new(spec: &WorkloadSpec, opts: &RunOptions) -> Result<Plan, BenchError> {
        opts.table.validate()?;
        if !opts.buckets.is_power_of_two() || opts.buckets < 2 {
            return Err(BenchError::Config(format!(
                "bucket count {} must be a power of two of at least 2",
                opts.buckets
            )));
        }
        if spec.workers == 0 {
            return Err(BenchError::Config("workers must be at least 1".into()));
        }
        if opts.reps == 0 {
            return Err(BenchError::Config("reps must be at least 1".into()));
        }
        if opts.chunk == 0 {
            return Err(BenchError::Config("chunk must be at least 1".into()));
        }
        if spec.key_space == 0 || spec.key_space > FULL_KEY_SPACE {
            return Err(BenchError::Config(format!(
                "key space {} must lie in [1, {FULL_KEY_SPACE}]",
                spec.key_space
            )));
        }
        let mut resize = opts.resize;
        let keys = match spec.kind {
            WorkloadKind::Mixed {
                insert,
                lookup,
                delete,
            } => {
                let ratios = [insert, lookup, delete];
                if ratios.iter().any(|r| !(0.0..=1.0).contains(r))
                    || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(BenchError::Config(format!(
                        "ratios {insert}:{lookup}:{delete} must be non-negative and sum to 1"
                    )));
                }
                if !opts.overlapping && spec.key_space < spec.workers as u64 {
                    return Err(BenchError::Config(format!(
                        "key space {} cannot be split into {} shards",
                        spec.key_space, spec.workers
                    )));
                }
                if spec.target_load.is_some() {
                    return Err(BenchError::Config(
                        "target load applies to bulk-insert only".into(),
                    ));
                }
                Vec::new()
            }
            WorkloadKind::BulkInsert => {
                let n = match spec.target_load {
                    Some(f) => {
                        if !(f > 0.0 && f <= 1.0) {
                            return Err(BenchError::Config(format!(
                                "target load {f} must lie in (0, 1]"
                            )));
                        }
                        resize = false;
                        (f * (opts.buckets * lanecuckoo::SLOTS) as f64).ceil() as usize
                    }
                    None => spec.n_ops,
                };
                gen_keys(n, spec.seed, spec.key_space)?
            }
            WorkloadKind::BulkLookup => {
                if spec.target_load.is_some() {
                    return Err(BenchError::Config(
                        "target load applies to bulk-insert only".into(),
                    ));
                }
                gen_keys(spec.n_ops, spec.seed, spec.key_space)?
            }
        };
        Ok(Plan {
            spec: spec.clone(),
            opts: opts.clone(),
            keys: Arc::new(keys),
            resize,
        })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    /// Ops per run.
    pub fn ops(&self) -> usize {
        match self.spec.kind {
            WorkloadKind::Mixed { .. } => self.spec.n_ops,
            _ => self.keys.len(),
        }
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn resize_enabled(&self) -> bool {
        self.resize
    }

    pub fn stream(&self, worker: usize) -> OpStream {
        let workers = self.spec.workers;
        let inner = match self.spec.kind {
            WorkloadKind::BulkInsert | WorkloadKind::BulkLookup => Source::Keys {
                keys: Arc::clone(&self.keys),
                range: share(self.keys.len(), workers, worker),
                lookup: self.spec.kind == WorkloadKind::BulkLookup,
            },
            WorkloadKind::Mixed { insert, lookup, .. } => {
                let (w, stride) = if self.opts.overlapping {
                    (0, 1)
                } else {
                    (worker as u64, workers as u64)
                };
                Source::Random {
                    rng: keys::rng(keys::substream(self.spec.seed, worker as u64)),
                    left: share(self.spec.n_ops, workers, worker).len(),
                    insert,
                    lookup,
                    worker: w,
                    stride,
                    shard_len: (self.spec.key_space - w).div_ceil(stride),
                }
            }
        };
        OpStream { inner }
    }

    fn new_table(&self) -> Result<Table, BenchError> {
        Ok(Table::new(self.opts.buckets, self.opts.table.clone())?)
    }
}

#[derive(Default)]
struct WorkerResult {
    counters: StepCounters,
    model: HashMap<Key, u32>,
    new_inserts: u64,
    lookup_hits: u64,
    lookup_misses: u64,
    deletes_ok: u64,
    deletes_missed: u64,
    divergences: u64,
}

#[derive(Default)]
struct PhaseLog {
    events: usize,
    stash_peak: usize,
}

struct Shared {
    table: RwLock<Table>,
    pending: Mutex<Vec<PackedEntry>>,
    log: Mutex<PhaseLog>,
}

/// Stop-the-world phase: the write lock is only granted once every worker
/// has left its current chunk.
fn resize_phase(shared: &Shared, resize: bool) {
    let mut table = shared.table.write().unwrap();
    let mut pending = shared.pending.lock().unwrap();
    let mut log = shared.log.lock().unwrap();
    log.stash_peak = log.stash_peak.max(table.stash().peak());
    if resize {
        log.events += table.rebalance().len();
    }
    settle_pending(&mut table, &mut pending, resize, &mut log.events);
}

fn settle_pending(
    table: &mut Table,
    pending: &mut Vec<PackedEntry>,
    resize: bool,
    events: &mut usize,
) {
    for attempt in 0..8 {
        if pending.is_empty() {
            return;
        }
        if resize && attempt > 0 {
            let k = table.config().batch_k;
            table.expand_batch(k);
            *events += 1;
        }
        for e in std::mem::take(pending) {
            if let InsertKind::FailedPending(p) = table.insert_entry(e).kind {
                pending.push(p);
            }
        }
        if !resize {
            return;
        }
    }
}

fn worker_loop(
    shared: &Shared,
    stream: OpStream,
    track_model: bool,
    resize: bool,
    chunk: usize,
    timing_sample: u64,
) -> WorkerResult {
    let mut r = WorkerResult::default();
    let mut stream = stream.peekable();
    let mut inserts = 0u64;
    while stream.peek().is_some() {
        let mut want_phase = false;
        {
            let t = shared.table.read().unwrap();
            for op in stream.by_ref().take(chunk) {
                match op {
                    Op::Insert(k, v) => {
                        inserts += 1;
                        let o = if timing_sample > 0 && inserts.is_multiple_of(timing_sample) {
                            t.insert_timed(k, v)
                        } else {
                            t.insert(k, v)
                        };
                        r.counters.record(&o);
                        let existed = if track_model {
                            r.model.insert(k, v).is_some()
                        } else {
                            false
                        };
                        match o.kind {
                            InsertKind::ReplacedExisting => {
                                if track_model && !existed {
                                    r.divergences += 1;
                                }
                            }
                            kind => {
                                r.new_inserts += 1;
                                if track_model && existed {
                                    r.divergences += 1;
                                }
                                if let InsertKind::FailedPending(p) = kind {
                                    shared.pending.lock().unwrap().push(p);
                                    want_phase = true;
                                    break;
                                }
                            }
                        }
                    }
                    Op::Lookup(k) => {
                        let got = t.lookup(k);
                        if got.is_some() {
                            r.lookup_hits += 1;
                        } else {
                            r.lookup_misses += 1;
                        }
                        if track_model && got != r.model.get(&k).copied() {
                            r.divergences += 1;
                        }
                    }
                    Op::Delete(k) => {
                        let ok = t.delete(k);
                        if ok {
                            r.deletes_ok += 1;
                        } else {
                            r.deletes_missed += 1;
                        }
                        if track_model && ok != r.model.remove(&k).is_some() {
                            r.divergences += 1;
                        }
                    }
                }
            }
            if resize && t.maybe_resize() != ResizeAction::None {
                want_phase = true;
            }
        }
        if want_phase {
            resize_phase(shared, resize);
        }
    }
    r
}

/// Result of a single run, with the final table for inspection.
pub struct SingleRun {
    pub report: RunReport,
    pub table: Table,
}

/// One run on a fresh table (no warm-up, no repetition).
pub fn run_once(plan: &Plan) -> Result<SingleRun, BenchError> {
    let spec = &plan.spec;
    let mut table = plan.new_table()?;
    let mut prefill_events = 0;
    if spec.kind == WorkloadKind::BulkLookup {
        let mut pending = Vec::new();
        for (i, &k) in plan.keys.iter().enumerate() {
            if let InsertKind::FailedPending(p) = table.insert(k, value_for(i)).kind {
                pending.push(p);
            }
            if plan.resize && table.maybe_resize() != ResizeAction::None {
                prefill_events += table.rebalance().len();
            }
            settle_pending(&mut table, &mut pending, plan.resize, &mut prefill_events);
        }
        if !pending.is_empty() {
            return Err(BenchError::Config(format!(
                "prefill left {} keys unplaced; use more buckets",
                pending.len()
            )));
        }
    }
    table.stash().reset_peak();

    let exact = !(plan.opts.overlapping && matches!(spec.kind, WorkloadKind::Mixed { .. }));
    let shared = Shared {
        table: RwLock::new(table),
        pending: Mutex::new(Vec::new()),
        log: Mutex::new(PhaseLog::default()),
    };
    let start = Instant::now();
    let results: Vec<WorkerResult> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..spec.workers)
            .map(|w| {
                let stream = plan.stream(w);
                let shared = &shared;
                let track = exact && spec.kind != WorkloadKind::BulkLookup;
                s.spawn(move || {
                    worker_loop(
                        shared,
                        stream,
                        track,
                        plan.resize,
                        plan.opts.chunk,
                        plan.opts.timing_sample,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    // Final phase places anything still pending.
    resize_phase(&shared, plan.resize);
    let wall = start.elapsed();

    let Shared {
        table,
        pending,
        log,
    } = shared;
    let table = table.into_inner().unwrap();
    let pending = pending.into_inner().unwrap();
    let log = log.into_inner().unwrap();

    let mut counters = StepCounters::default();
    let mut model: HashMap<Key, u32> = HashMap::new();
    let (mut lookup_hits, mut lookup_misses, mut deletes_ok, mut deletes_missed) = (0, 0, 0, 0);
    let (mut new_inserts, mut divergences) = (0u64, 0u64);
    for r in results {
        counters.merge(&r.counters);
        model.extend(r.model);
        lookup_hits += r.lookup_hits;
        lookup_misses += r.lookup_misses;
        deletes_ok += r.deletes_ok;
        deletes_missed += r.deletes_missed;
        new_inserts += r.new_inserts;
        divergences += r.divergences;
    }
    if spec.kind == WorkloadKind::BulkLookup {
        model.extend(
            plan.keys
                .iter()
                .enumerate()
                .map(|(i, &k)| (k, value_for(i))),
        );
        new_inserts = plan.keys.len() as u64;
        divergences += lookup_misses;
    }

    let mut audit = audit(
        &table,
        &model,
        new_inserts - deletes_ok,
        &pending,
        &counters,
        exact,
    );
    audit.divergences = divergences;
    if divergences > 0 {
        audit.errors.push(format!(
            "{divergences} op results disagreed with the worker model"
        ));
    }
    let ops = plan.ops() as u64;
    let secs = wall.as_secs_f64();
    let report = RunReport {
        mode: spec.kind.name().to_string(),
        ops,
        workers: spec.workers,
        seed: spec.seed,
        ops_per_second: if secs > 0.0 { ops as f64 / secs } else { 0.0 },
        counters,
        final_load_factor: table.count_entries() as f64 / table.capacity() as f64,
        final_buckets: table.n_buckets(),
        stash_peak: log.stash_peak.max(table.stash().peak()),
        resize_events: log.events + prefill_events,
        wall_time: wall,
        reps: 1,
        lookup_hits,
        lookup_misses,
        deletes_ok,
        deletes_missed,
        audit,
    };
    Ok(SingleRun { report, table })
}

fn audit(
    table: &Table,
    model: &HashMap<Key, u32>,
    expected_live: u64,
    pending: &[PackedEntry],
    counters: &StepCounters,
    exact: bool,
) -> Audit {
    let mut a = Audit {
        exact,
        counters_consistent: counters.is_consistent(),
        expected_live,
        pending_lost: pending.len() as u64,
        ..Audit::default()
    };
    match table.check_consistency() {
        Ok(()) => a.consistent = true,
        Err(e) => a.errors.push(e),
    }
    let entries = table.entries();
    a.live_entries = entries.len() as u64;
    let dups = entries.windows(2).filter(|w| w[0].0 == w[1].0).count();
    a.no_duplicates = dups == 0;
    if dups > 0 {
        a.errors.push(format!("{dups} duplicate keys"));
    }
    a.conserved = a.live_entries + a.pending_lost == expected_live;
    if !a.conserved {
        a.errors.push(format!(
            "conservation: {} live + {} pending != {} expected",
            a.live_entries, a.pending_lost, expected_live
        ));
    }
    if exact {
        let missing = lanecuckoo::par::map_slice(&model.iter().collect::<Vec<_>>(), |(k, v)| {
            (table.lookup(**k) != Some(**v)) as u64
        })
        .into_iter()
        .sum::<u64>();
        a.findable = missing == 0 && model.len() as u64 == a.live_entries;
        if !a.findable {
            a.errors.push(format!(
                "findability: {missing} of {} model keys not found, {} live entries",
                model.len(),
                a.live_entries
            ));
        }
    }
    if !a.counters_consistent {
        a.errors
            .push("step counters violate the sum identity".into());
    }
    a
}

/// Warm-up run (discarded), then `reps` measured runs. Throughput and wall
/// time are averaged; everything else comes from the last run. The audit is
/// the first failing one, if any.
pub fn run_workload(spec: &WorkloadSpec, opts: &RunOptions) -> Result<RunReport, BenchError> {
    let plan = Plan::new(spec, opts)?;
    if opts.warmup {
        run_once(&plan)?;
    }
    let mut runs = Vec::with_capacity(opts.reps);
    for _ in 0..opts.reps {
        runs.push(run_once(&plan)?.report);
    }
    let reps = runs.len();
    let mean_ops = runs.iter().map(|r| r.ops_per_second).sum::<f64>() / reps as f64;
    let mean_wall = runs.iter().map(|r| r.wall_time).sum::<Duration>() / reps as u32;
    let failing = runs.iter().position(|r| !r.audit.passed());
    let audit = runs[failing.unwrap_or(reps - 1)].audit.clone();
    let mut report = runs.pop().unwrap();
    report.ops_per_second = mean_ops;
    report.wall_time = mean_wall;
    report.reps = reps;
    report.audit = audit;
    Ok(report)
}
