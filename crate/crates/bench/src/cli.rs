//! Command-line front end.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use lanecuckoo::{HashFn, TableConfig};
use serde::Serialize;

use crate::error::BenchError;
use crate::keys::FULL_KEY_SPACE;
use crate::report::{self, CSR_HEADER, RUN_HEADER};
use crate::stats::{self, Breakdown};
use crate::workload::{run_workload, RunOptions, RunReport, WorkloadKind, WorkloadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    BulkInsert,
    BulkLookup,
    Mixed,
    Csr,
    Breakdown,
    ResizeStress,
}

#[derive(Debug, Parser)]
#[command(
    name = "lanecuckoo-bench",
    version,
    about = "Workloads and hash statistics for lanecuckoo"
)]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Mode::Mixed)]
    pub mode: Mode,
    /// Initial bucket count (power of two). In csr mode, the bin count.
    #[arg(long, default_value_t = 4096)]
    pub buckets: usize,
    /// Operations per run. In csr mode, the largest key count.
    #[arg(long, default_value_t = 1 << 20)]
    pub ops: usize,
    /// Mixed-mode insert:lookup:delete ratio.
    #[arg(long, default_value = "0.5:0.3:0.2", value_parser = parse_ratio)]
    pub ratio: Ratio,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub max_evictions: u32,
    #[arg(long, default_value_t = 0.02)]
    pub stash_frac: f64,
    #[arg(long, default_value_t = 1024)]
    pub batch_k: usize,
    /// Bulk-insert fill target as a fraction of the initial slots; disables
    /// resizing. Breakdown mode defaults to 0.75.
    #[arg(long)]
    pub target_load: Option<f64>,
    /// Measured repetitions after one warm-up run.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Key universe size. Defaults to --ops for mixed mode and to every
    /// non-reserved key otherwise.
    #[arg(long)]
    pub key_space: Option<u64>,
    /// Mixed mode: let all workers draw from one key range.
    #[arg(long)]
    pub overlapping: bool,
    /// Record per-step time on every n-th insert (0 disables).
    #[arg(long, default_value_t = 64)]
    pub timing_sample: u64,
    /// Fill the ops_per_sec CSV column (makes the CSV run-dependent).
    #[arg(long)]
    pub csv_timing: bool,
    #[arg(long)]
    pub no_warmup: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio(pub f64, pub f64, pub f64);

pub fn parse_ratio(s: &str) -> Result<Ratio, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected I:L:D, got {s:?}"));
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(&parts) {
        *slot = p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if slot.is_nan() || *slot < 0.0 {
            return Err(format!("ratio parts must be non-negative, got {p:?}"));
        }
    }
    let sum: f64 = r.iter().sum();
    if sum <= 0.0 {
        return Err("ratio must have a positive part".into());
    }
    Ok(Ratio(r[0] / sum, r[1] / sum, r[2] / sum))
}

impl Cli {
    fn table_config(&self) -> TableConfig {
        TableConfig {
            max_evictions: self.max_evictions,
            batch_k: self.batch_k,
            stash_fraction: self.stash_frac,
            ..TableConfig::default()
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            buckets: self.buckets,
            table: self.table_config(),
            reps: self.reps,
            warmup: !self.no_warmup,
            timing_sample: self.timing_sample,
            overlapping: self.overlapping,
            ..RunOptions::default()
        }
    }

    fn spec(&self, kind: WorkloadKind, target_load: Option<f64>) -> WorkloadSpec {
        let default_space = match kind {
            WorkloadKind::Mixed { .. } => {
                (self.ops as u64).clamp(self.workers.max(1) as u64, FULL_KEY_SPACE)
            }
            _ => FULL_KEY_SPACE,
        };
        WorkloadSpec {
            kind,
            n_ops: self.ops,
            key_space: self.key_space.unwrap_or(default_space),
            seed: self.seed,
            workers: self.workers,
            target_load,
        }
    }
}

#[derive(Serialize)]
struct BreakdownJson<'a> {
    run: &'a RunReport,
    breakdown: &'a Breakdown,
}

/// Runs the CLI; `Ok(true)` iff the post-run audit passed.
pub fn run(cli: &Cli) -> Result<bool, BenchError> {
    match cli.mode {
        Mode::BulkInsert | Mode::BulkLookup | Mode::Mixed => {
            let kind = match cli.mode {
                Mode::BulkInsert => WorkloadKind::BulkInsert,
                Mode::BulkLookup => WorkloadKind::BulkLookup,
                _ => WorkloadKind::mixed(cli.ratio.0, cli.ratio.1, cli.ratio.2),
            };
            let r = run_workload(&cli.spec(kind, cli.target_load), &cli.run_options())?;
            print_run(&r);
            emit_run(cli, &r, &r)?;
            Ok(r.audit.passed())
        }
        Mode::Breakdown => {
            let target = Some(cli.target_load.unwrap_or(0.75));
            let r = run_workload(
                &cli.spec(WorkloadKind::BulkInsert, target),
                &cli.run_options(),
            )?;
            let b = stats::step_breakdown_report(&r.counters)?;
            print_run(&r);
            println!("step   count%   time%");
            for i in 0..4 {
                println!(
                    "{:<6} {:>7.3} {:>7.3}",
                    i + 1,
                    b.count_pct[i],
                    b.time_pct[i]
                );
            }
            println!(
                "step3 entry rate {:.4}%  lock rate {:.4}%  failed {:.4}%  ({} timed samples)",
                100.0 * b.step3_entry_rate,
                100.0 * b.lock_rate,
                b.failed_pct,
                b.timed_samples
            );
            emit_run(
                cli,
                &r,
                &BreakdownJson {
                    run: &r,
                    breakdown: &b,
                },
            )?;
            Ok(r.audit.passed())
        }
        Mode::ResizeStress => {
            let start = Instant::now();
            let s = stats::resize_stress(cli.buckets, cli.table_config(), cli.seed)?;
            let secs = start.elapsed().as_secs_f64();
            let c = &s.counters;
            let ops = c.inserts + (c.inserts - s.phases.last().map_or(0, |p| p.live as u64));
            let row = [
                "resize-stress".to_string(),
                ops.to_string(),
                "1".into(),
                cli.seed.to_string(),
                if cli.csv_timing {
                    format!("{:.1}", ops as f64 / secs)
                } else {
                    String::new()
                },
                format!("{:.6}", s.phases.last().map_or(0.0, |p| p.load_factor)),
                s.stash_peak.to_string(),
                (s.expand_batches + s.contract_batches).to_string(),
                c.step1_hits.to_string(),
                c.step2_hits.to_string(),
                c.step3_successes.to_string(),
                c.step4_hits.to_string(),
                c.lock_acquisitions.to_string(),
            ];
            for p in &s.phases {
                println!(
                    "{:<8} buckets {:>8} load {:.4} live {:>9} model {} found {} consistent {}",
                    p.phase,
                    p.buckets,
                    p.load_factor,
                    p.live,
                    p.matches_model,
                    p.all_found,
                    p.consistent
                );
            }
            println!(
                "buckets {} -> {} -> {}; {} expand / {} contract batches ({} aborted)",
                s.initial_buckets,
                s.peak_buckets,
                s.final_buckets,
                s.expand_batches,
                s.contract_batches,
                s.aborted_contractions
            );
            if let Some(p) = &cli.csv {
                report::write_csv_file(p, RUN_HEADER, &[row])?;
            }
            if let Some(p) = &cli.json {
                report::write_json(p, &s)?;
            }
            println!("audit: {}", if s.passed() { "pass" } else { "FAIL" });
            Ok(s.passed())
        }
        Mode::Csr => {
            let m = cli.buckets as u64;
            let n_values: Vec<u64> = (10..=32)
                .step_by(2)
                .map(|e| 1u64 << e)
                .take_while(|&n| n <= cli.ops as u64)
                .collect();
            let rows = stats::csr_sweep(&HashFn::ALL, m, &n_values, cli.seed)?;
            println!(
                "{:<9} {:>9} {:>9} {:>12} {:>10} {:>9}",
                "fn", "n", "m", "expected_Y", "observed_Y", "csr"
            );
            for r in &rows {
                println!(
                    "{:<9} {:>9} {:>9} {:>12.1} {:>10} {:>9.4}{}",
                    r.hash,
                    r.n,
                    r.m,
                    r.expected_y,
                    r.observed_y,
                    r.csr,
                    if r.low_signal { "  (low signal)" } else { "" }
                );
            }
            if let Some(p) = &cli.csv {
                let table: Vec<_> = rows.iter().map(report::csr_row).collect();
                report::write_csv_file(p, CSR_HEADER, &table)?;
            }
            if let Some(p) = &cli.json {
                report::write_json(p, &rows)?;
            }
            Ok(true)
        }
    }
}

fn print_run(r: &RunReport) {
    println!(
        "{} ops={} workers={} reps={} backend={}",
        r.mode,
        r.ops,
        r.workers,
        r.reps,
        lanecuckoo::par::backend_name()
    );
    println!(
        "  {:.3} Mops/s, wall {:.3} s, load {:.4}, buckets {}, stash peak {}, resizes {}",
        r.ops_per_second / 1e6,
        r.wall_time.as_secs_f64(),
        r.final_load_factor,
        r.final_buckets,
        r.stash_peak,
        r.resize_events
    );
    let c = &r.counters;
    println!(
        "  inserts {} (step1 {}, step2 {}, step3 {}/{}, step4 {}, failed {}), locks {}",
        c.inserts,
        c.step1_hits,
        c.step2_hits,
        c.step3_successes,
        c.step3_entries,
        c.step4_hits,
        c.failed_pending,
        c.lock_acquisitions
    );
    println!("audit: {}", if r.audit.passed() { "pass" } else { "FAIL" });
    for e in &r.audit.errors {
        println!("  {e}");
    }
}

fn emit_run<T: Serialize>(cli: &Cli, r: &RunReport, json: &T) -> Result<(), BenchError> {
    if let Some(p) = &cli.csv {
        report::write_csv_file(p, RUN_HEADER, &[report::run_row(r, cli.csv_timing)])?;
    }
    if let Some(p) = &cli.json {
        report::write_json(p, json)?;
    }
    Ok(())
}
