//! CSV and JSON output.

use std::io::Write;
use std::path::Path;

use lanecuckoo::StepCounters;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::BenchError;
use crate::stats::CsrRow;
use crate::workload::RunReport;

pub const RUN_HEADER: [&str; 13] = [
    "mode",
    "ops",
    "workers",
    "seed",
    "ops_per_sec",
    "load_factor",
    "stash_peak",
    "resizes",
    "step1",
    "step2",
    "step3",
    "step4",
    "lock_acq",
];

pub const CSR_HEADER: [&str; 6] = ["fn", "n", "m", "expected_Y", "observed_Y", "csr"];

pub fn ser_counters<S: Serializer>(c: &StepCounters, s: S) -> Result<S::Ok, S::Error> {
    let mut st = s.serialize_struct("StepCounters", 11)?;
    st.serialize_field("step1_hits", &c.step1_hits)?;
    st.serialize_field("step2_hits", &c.step2_hits)?;
    st.serialize_field("step3_entries", &c.step3_entries)?;
    st.serialize_field("step3_successes", &c.step3_successes)?;
    st.serialize_field("step3_rounds_total", &c.step3_rounds_total)?;
    st.serialize_field("step4_hits", &c.step4_hits)?;
    st.serialize_field("failed_pending", &c.failed_pending)?;
    st.serialize_field("lock_acquisitions", &c.lock_acquisitions)?;
    st.serialize_field("inserts", &c.inserts)?;
    st.serialize_field("step_time_secs", &c.step_time.map(|d| d.as_secs_f64()))?;
    st.serialize_field("timed_samples", &c.timed_samples)?;
    st.end()
}

fn fixed(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{x:.digits$}")
    } else {
        x.to_string()
    }
}

/// One run-report row. `ops_per_sec` is left empty unless `with_timing`,
/// since it is the only field that varies between identical runs.
pub fn run_row(r: &RunReport, with_timing: bool) -> [String; 13] {
    let c = &r.counters;
    [
        r.mode.clone(),
        r.ops.to_string(),
        r.workers.to_string(),
        r.seed.to_string(),
        if with_timing {
            fixed(r.ops_per_second, 1)
        } else {
            String::new()
        },
        fixed(r.final_load_factor, 6),
        r.stash_peak.to_string(),
        r.resize_events.to_string(),
        c.step1_hits.to_string(),
        c.step2_hits.to_string(),
        c.step3_successes.to_string(),
        c.step4_hits.to_string(),
        c.lock_acquisitions.to_string(),
    ]
}

pub fn csr_row(r: &CsrRow) -> [String; 6] {
    [
        r.hash.clone(),
        r.n.to_string(),
        r.m.to_string(),
        fixed(r.expected_y, 3),
        r.observed_y.to_string(),
        fixed(r.csr, 6),
    ]
}

pub fn write_csv<W: Write, const N: usize>(
    out: W,
    header: [&str; N],
    rows: &[[String; N]],
) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: &[[String; N]],
) -> Result<(), BenchError> {
    write_csv(std::fs::File::create(path)?, header, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}
