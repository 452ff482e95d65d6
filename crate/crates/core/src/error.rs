use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("key 0xFFFFFFFF is reserved for the empty-slot sentinel")]
    ReservedKey,
    #[error("initial bucket count {0} must be a power of two and at least 2")]
    BucketCount(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}
