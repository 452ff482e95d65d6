//! Workload harness for `lanecuckoo`: key generation, a multi-worker driver
//! with stop-the-world resize phases, collision statistics and report output.

pub mod cli;
pub mod error;
pub mod keys;
pub mod report;
pub mod stats;
pub mod workload;

pub use error::BenchError;
pub use keys::gen_keys;
pub use stats::{csr_sweep, resize_stress, step_breakdown_report, CsrRow};
pub use workload::{
    run_once, run_workload, Plan, RunOptions, RunReport, WorkloadKind, WorkloadSpec,
};
