//! Coded row streams, row sinks and duplicate handling shared by run
//! generation, merging and the stream consumers.

use crate::error::{OvcError, Result};
use crate::keycodec::{Ovc, Row};

/// A row with its code relative to its predecessor in a sorted stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedRow {
    pub row: Row,
    pub ovc: Ovc,
}

impl CodedRow {
    pub fn new(row: Row, ovc: Ovc) -> Self {
        Self { row, ovc }
    }
}

/// Receiver of a sorted, coded row stream.
pub trait RowSink {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()>;
}

impl RowSink for Vec<CodedRow> {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        Vec::push(self, CodedRow { row, ovc });
        Ok(())
    }
}

impl<S: RowSink + ?Sized> RowSink for &mut S {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        (**self).push(row, ovc)
    }
}

/// Combiner applied to the payloads of rows with equal keys.
///
/// Payloads are 8-byte little-endian integers. An empty payload stands for a
/// count of one, or a value of zero for the other combiners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Count,
    Sum,
    Min,
    Max,
}

impl Aggregate {
    /// The payload a single row contributes.
    pub fn init(self, payload: &[u8]) -> Result<Vec<u8>> {
        match (self, payload.len()) {
            (Aggregate::Count, 0) => Ok(1u64.to_le_bytes().to_vec()),
            (_, 0) => Ok(0i64.to_le_bytes().to_vec()),
            (_, 8) => Ok(payload.to_vec()),
            (_, n) => Err(OvcError::Config(format!(
                "aggregate payload must be empty or 8 bytes, got {n}"
            ))),
        }
    }

    /// Folds `other` (an initialized payload) into `acc`.
    pub fn fold(self, acc: &mut [u8], other: &[u8]) -> Result<()> {
        let a = read8(acc)?;
        let b = read8(other)?;
        let out = match self {
            Aggregate::Count => u64::from_le_bytes(a)
                .checked_add(u64::from_le_bytes(b))
                .ok_or(OvcError::AggregateOverflow)?
                .to_le_bytes(),
            Aggregate::Sum => i64::from_le_bytes(a)
                .checked_add(i64::from_le_bytes(b))
                .ok_or(OvcError::AggregateOverflow)?
                .to_le_bytes(),
            Aggregate::Min => i64::from_le_bytes(a).min(i64::from_le_bytes(b)).to_le_bytes(),
            Aggregate::Max => i64::from_le_bytes(a).max(i64::from_le_bytes(b)).to_le_bytes(),
        };
        acc.copy_from_slice(&out);
        Ok(())
    }
}

fn read8(bytes: &[u8]) -> Result<[u8; 8]> {
    bytes
        .try_into()
        .map_err(|_| OvcError::Config(format!("aggregate payload must be 8 bytes, got {}", bytes.len())))
}

/// What to do with rows whose key equals their predecessor's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupMode {
    #[default]
    Off,
    Drop,
    Aggregate(Aggregate),
}

/// Applies a [`DedupMode`] to a coded stream using only the duplicate code.
#[derive(Debug)]
pub struct Dedup {
    mode: DedupMode,
    pending: Option<(Row, Ovc)>,
}

impl Dedup {
    pub fn new(mode: DedupMode) -> Self {
        Self { mode, pending: None }
    }

    pub fn mode(&self) -> DedupMode {
        self.mode
    }

    pub fn push<S: RowSink + ?Sized>(&mut self, mut row: Row, ovc: Ovc, sink: &mut S) -> Result<()> {
        match self.mode {
            DedupMode::Off => sink.push(row, ovc),
            DedupMode::Drop if ovc.is_duplicate() => Ok(()),
            DedupMode::Drop => sink.push(row, ovc),
            DedupMode::Aggregate(agg) => {
                if ovc.is_duplicate() {
                    if let Some((acc, _)) = &mut self.pending {
                        let contribution = agg.init(&row.payload)?;
                        return agg.fold(&mut acc.payload, &contribution);
                    }
                }
                row.payload = agg.init(&row.payload)?;
                if let Some((prev, prev_ovc)) = self.pending.replace((row, ovc)) {
                    sink.push(prev, prev_ovc)?;
                }
                Ok(())
            }
        }
    }

    /// Emits the row held back for aggregation, if any.
    pub fn finish<S: RowSink + ?Sized>(&mut self, sink: &mut S) -> Result<()> {
        if let Some((row, ovc)) = self.pending.take() {
            sink.push(row, ovc)?;
        }
        Ok(())
    }
}
