//! External merge sort with offset-value coding.
//!
//! Rows are sequences of normalized `u64` column codes compared
//! lexicographically. Every row in a sorted stream carries an [`Ovc`]
//! relative to its predecessor, which lets the tree-of-losers merge decide
//! most contests without touching column values, lets runs be stored with
//! prefix truncation, and lets downstream operators find group boundaries
//! with a single integer test.

pub mod consumers;
pub mod error;
pub mod keycodec;
pub mod losertree;
pub mod merge;
pub mod runformat;
pub mod rungen;
pub mod stream;

pub use error::{OvcError, Result};
pub use keycodec::{Counters, KeySchema, Ovc, Row};
pub use losertree::LoserTree;
pub use merge::{external_sort, merge_runs, SortOptions, SortReport};
pub use runformat::{RunFormat, RunManifest};
pub use rungen::{RunGenConfig, RunGenMode};
pub use stream::{Aggregate, CodedRow, DedupMode, RowSink};
