//! A concurrent, resizable bucketized cuckoo hash table for 32-bit keys and
//! values.
//!
//! Buckets hold 32 packed 64-bit slots. Every operation is written as a
//! 32-lane lockstep protocol (see [`lane_group`]) executed by one worker:
//! lanes gather a bucket, vote with a ballot, and the elected lane issues the
//! single atomic that publishes the result. Inserts that find both candidate
//! buckets full fall back to bounded cuckoo eviction and then to a small
//! overflow stash. Capacity grows and shrinks incrementally by linear hashing
//! in stop-the-world phases.
//!
//! ```
//! use lanecuckoo::{Key, Table, TableConfig};
//!
//! let table = Table::new(64, TableConfig::default()).unwrap();
//! table.insert(Key::must(7), 70);
//! assert_eq!(table.lookup(Key::must(7)), Some(70));
//! assert!(table.delete(Key::must(7)));
//! ```

pub mod error;
pub mod hashing;
pub mod lane_group;
pub mod ops;
pub mod packed_kv;
pub mod par;
pub mod resize;
pub mod table;

pub use error::TableError;
pub use hashing::{AddressingState, HashFn, ModelStats};
pub use ops::{InsertKind, InsertOutcome, StepCounters};
pub use packed_kv::{pack, unpack, Key, PackedEntry, EMPTY};
pub use resize::{ResizeAction, ResizeReport};
pub use table::{Table, TableConfig, TableMeta, SLOTS};
