//! Key normalization, offset-value codes (OVCs) and the code-word space
//! shared by fence keys and the current/next run regions of a priority queue.
//!
//! Every key column is an unsigned 64-bit *column code*: comparing two codes
//! as integers gives the desired sort order, including direction and null
//! placement. An [`Ovc`] describes a row relative to a base row that sorts no
//! later than it: the offset of the first differing column and a 48-bit,
//! order-preserving image of the column code found there. Packed into one
//! word, a larger offset gives a smaller code and a larger value gives a
//! larger code, so two rows coded against the same base are ordered by a
//! single integer comparison unless their codes are equal.

use std::cmp::Ordering;
use std::ops::AddAssign;

use crate::error::{OvcError, Result};

/// Largest supported key arity.
pub const MAX_ARITY: usize = 64;

const SEGMENT_BITS: u32 = 48;
const SEGMENT_MASK: u64 = (1 << SEGMENT_BITS) - 1;

/// Sort direction and null placement of one key column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColumnOrder {
    pub descending: bool,
    pub nulls_last: bool,
}

impl ColumnOrder {
    pub const ASCENDING: ColumnOrder = ColumnOrder {
        descending: false,
        nulls_last: false,
    };
    pub const DESCENDING: ColumnOrder = ColumnOrder {
        descending: true,
        nulls_last: false,
    };
}

/// Key columns of a sort: their count (the arity) and per-column ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchema {
    columns: Vec<ColumnOrder>,
}

impl KeySchema {
    /// All-ascending, nulls-first schema.
    pub fn new(arity: usize) -> Result<Self> {
        Self::with_columns(vec![ColumnOrder::ASCENDING; arity])
    }

    pub fn with_columns(columns: Vec<ColumnOrder>) -> Result<Self> {
        if columns.is_empty() || columns.len() > MAX_ARITY {
            return Err(OvcError::InvalidArity(columns.len()));
        }
        Ok(Self { columns })
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, index: usize) -> ColumnOrder {
        self.columns[index]
    }

    /// Normalizes one row of raw values into column codes.
    pub fn normalize(&self, raw: &[Option<i64>]) -> Result<Vec<u64>> {
        if raw.len() != self.arity() {
            return Err(OvcError::ArityMismatch {
                expected: self.arity(),
                got: raw.len(),
            });
        }
        raw.iter()
            .zip(&self.columns)
            .map(|(value, order)| normalize_column(*value, *order))
            .collect()
    }

    pub fn check_row(&self, row: &Row) -> Result<()> {
        if row.key.len() != self.arity() {
            return Err(OvcError::ArityMismatch {
                expected: self.arity(),
                got: row.key.len(),
            });
        }
        Ok(())
    }
}

/// Maps a signed value (or null) to an order-preserving unsigned code.
///
/// Non-null values flip the sign bit, are complemented for descending
/// columns, and are then shifted up by one under nulls-first so that null can
/// take code 0. Under nulls-last null takes `u64::MAX`. The one value that
/// would collide with the null code is rejected.
pub fn normalize_column(raw: Option<i64>, order: ColumnOrder) -> Result<u64> {
    let Some(value) = raw else {
        return Ok(if order.nulls_last { u64::MAX } else { 0 });
    };
    let mut code = (value as u64) ^ (1 << 63);
    if order.descending {
        code = !code;
    }
    if order.nulls_last {
        if code == u64::MAX {
            return Err(OvcError::ValueOverflow(value));
        }
        Ok(code)
    } else {
        code.checked_add(1).ok_or(OvcError::ValueOverflow(value))
    }
}

/// Convenience for the common case: ascending, nulls-first, never null.
///
/// Panics on `i64::MAX`, the single value without a code under nulls-first.
pub fn code_of(value: i64) -> u64 {
    normalize_column(Some(value), ColumnOrder::ASCENDING).expect("i64::MAX has no nulls-first code")
}

const EXACT_WINDOW: u64 = 1 << 45;
const MID: u64 = 1 << 63;
const LOW_EXACT_END: u64 = 1 << 46;
const MID_EXACT_START: u64 = MID - EXACT_WINDOW;
const MID_EXACT_END: u64 = MID + EXACT_WINDOW;
const TOP_EXACT_START: u64 = 0u64.wrapping_sub(EXACT_WINDOW);
const LOSSY_SHIFT: u32 = 18;

const SEG_LOW_LOSSY: u64 = 1 << 46;
const SEG_MID_EXACT: u64 = SEG_LOW_LOSSY + (1 << 45);
const SEG_HIGH_LOSSY: u64 = SEG_MID_EXACT + (1 << 46);
const SEG_TOP_EXACT: u64 = SEG_HIGH_LOSSY + (1 << 45);

/// Order-preserving 48-bit image of a column code.
///
/// The map is the identity (up to a shift) on three windows that hold the
/// codes real data produces: small raw codes, normalized integers of moderate
/// magnitude (which cluster around 2^63) and codes near the top of the range.
/// Everything in between is compressed by 2^18 and may collide.
pub fn value_segment(code: u64) -> u64 {
    if code < LOW_EXACT_END {
        code
    } else if code < MID_EXACT_START {
        SEG_LOW_LOSSY + ((code - LOW_EXACT_END) >> LOSSY_SHIFT)
    } else if code < MID_EXACT_END {
        SEG_MID_EXACT + (code - MID_EXACT_START)
    } else if code < TOP_EXACT_START {
        SEG_HIGH_LOSSY + ((code - MID_EXACT_END) >> LOSSY_SHIFT)
    } else {
        SEG_TOP_EXACT + (code - TOP_EXACT_START)
    }
}

/// True when `segment` has exactly one preimage under [`value_segment`].
pub fn segment_is_exact(segment: u64) -> bool {
    segment < SEG_LOW_LOSSY || (SEG_MID_EXACT..SEG_HIGH_LOSSY).contains(&segment) || segment >= SEG_TOP_EXACT
}

/// A row: key column codes plus an opaque payload.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row {
    pub key: Vec<u64>,
    pub payload: Vec<u8>,
}

impl Row {
    pub fn new(key: Vec<u64>) -> Self {
        Self {
            key,
            payload: Vec::new(),
        }
    }

    pub fn with_payload(key: Vec<u64>, payload: Vec<u8>) -> Self {
        Self { key, payload }
    }
}

/// Anything that exposes a key as column codes.
pub trait Keyed {
    fn key(&self) -> &[u64];
}

impl Keyed for Row {
    fn key(&self) -> &[u64] {
        &self.key
    }
}

impl Keyed for Vec<u64> {
    fn key(&self) -> &[u64] {
        self
    }
}

/// Packed offset-value code: `(arity - offset) << 48 | segment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ovc(u64);

impl Ovc {
    /// Codes a row whose first difference from its base is at `offset`,
    /// where it holds `code`. `code` is ignored when `offset == arity`.
    pub fn encode(offset: usize, code: u64, arity: usize) -> Result<Ovc> {
        if arity == 0 || arity > MAX_ARITY {
            return Err(OvcError::InvalidArity(arity));
        }
        if offset > arity {
            return Err(OvcError::OffsetOutOfRange { offset, arity });
        }
        Ok(Self::from_offset_code(offset, code, arity))
    }

    #[inline]
    pub(crate) fn from_offset_code(offset: usize, code: u64, arity: usize) -> Ovc {
        debug_assert!(offset <= arity && arity <= MAX_ARITY);
        if offset == arity {
            return Ovc::DUPLICATE;
        }
        Ovc((((arity - offset) as u64) << SEGMENT_BITS) | value_segment(code))
    }

    /// The code of a row equal to its base: offset = arity, segment 0.
    /// It is the smallest possible code.
    pub const DUPLICATE: Ovc = Ovc(0);

    pub fn duplicate() -> Ovc {
        Ovc::DUPLICATE
    }

    /// Code of `key` relative to an artificial row below every real row.
    pub fn initial(key: &[u64]) -> Ovc {
        Self::from_offset_code(0, key[0], key.len())
    }

    /// Offset-only code: the offset is known, the value is not. Its segment
    /// lies in a lossy window, so ties with it always re-inspect the column at
    /// `offset`.
    pub fn unresolved(offset: usize, arity: usize) -> Ovc {
        debug_assert!(offset < arity);
        Ovc((((arity - offset) as u64) << SEGMENT_BITS) | SEG_LOW_LOSSY)
    }

    #[inline]
    pub fn offset(self, arity: usize) -> usize {
        arity - (self.0 >> SEGMENT_BITS) as usize
    }

    #[inline]
    pub fn segment(self) -> u64 {
        self.0 & SEGMENT_MASK
    }

    /// `(offset, segment)`.
    pub fn decode(self, arity: usize) -> (usize, u64) {
        (self.offset(arity), self.segment())
    }

    #[inline]
    pub fn is_duplicate(self) -> bool {
        self.0 == 0
    }

    /// True when equal segments prove equal column values at the offset.
    #[inline]
    pub fn is_exact(self) -> bool {
        segment_is_exact(self.segment())
    }

    #[inline]
    pub fn packed(self) -> u64 {
        self.0
    }

    pub fn from_packed(word: u64) -> Ovc {
        Ovc(word)
    }
}

/// Oracle-friendly helper: the code of `key` relative to `base` (which must
/// sort no later), found by scanning from column 0. Counts its column
/// comparisons.
pub fn ovc_relative_to(base: &[u64], key: &[u64], counters: &mut Counters) -> (Ordering, Ovc) {
    let (ord, diff) = full_compare(base, key, 0, counters);
    let ovc = Ovc::from_offset_code(diff, key.get(diff).copied().unwrap_or(0), key.len());
    (ord, ovc)
}

/// Instrumentation shared by every comparison-performing routine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Comparisons between two real rows.
    pub row_comparisons: u64,
    /// Single-column value comparisons.
    pub column_comparisons: u64,
    /// Row comparisons decided by codes alone.
    pub ovc_only_decisions: u64,
    /// Rows routed around a priority queue as duplicates.
    pub bypassed: u64,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, other: Counters) {
        self.row_comparisons += other.row_comparisons;
        self.column_comparisons += other.column_comparisons;
        self.ovc_only_decisions += other.ovc_only_decisions;
        self.bypassed += other.bypassed;
    }
}

/// Column-by-column comparison starting at `start`.
///
/// The caller asserts that the first `start` columns are equal. Returns the
/// ordering and the first differing column, or `(Equal, len)`.
#[inline]
pub fn full_compare(a: &[u64], b: &[u64], start: usize, counters: &mut Counters) -> (Ordering, usize) {
    debug_assert_eq!(a.len(), b.len());
    for i in start..a.len() {
        counters.column_comparisons += 1;
        match a[i].cmp(&b[i]) {
            Ordering::Equal => {}
            ord => return (ord, i),
        }
    }
    (Ordering::Equal, a.len())
}

/// One side of a coded comparison.
#[derive(Debug, Clone, Copy)]
pub struct Coded<'a> {
    pub key: &'a [u64],
    pub ovc: Ovc,
    /// Tie breaker for equal keys: the lower rank wins.
    pub rank: u64,
}

/// Result of [`compare_coded`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contest {
    pub first_wins: bool,
    /// The loser's code relative to the winner.
    pub loser_ovc: Ovc,
    pub column_comparisons: u64,
}

/// Compares two rows coded against the same base.
///
/// Unequal codes decide immediately and the loser's code stays valid
/// relative to the winner. Equal duplicate codes mean equal keys. Otherwise
/// the columns are compared from the shared offset (or the one after it, when
/// the shared segment proves that column equal) and the loser is recoded at
/// the first difference.
#[inline]
pub fn compare_coded(a: Coded<'_>, b: Coded<'_>, counters: &mut Counters) -> Contest {
    counters.row_comparisons += 1;
    if a.ovc != b.ovc {
        counters.ovc_only_decisions += 1;
        let first_wins = a.ovc < b.ovc;
        let loser_ovc = if first_wins { b.ovc } else { a.ovc };
        return Contest {
            first_wins,
            loser_ovc,
            column_comparisons: 0,
        };
    }
    if a.ovc.is_duplicate() {
        counters.ovc_only_decisions += 1;
        return Contest {
            first_wins: a.rank <= b.rank,
            loser_ovc: Ovc::DUPLICATE,
            column_comparisons: 0,
        };
    }
    let arity = a.key.len();
    let offset = a.ovc.offset(arity);
    let start = if a.ovc.is_exact() { offset + 1 } else { offset };
    let before = counters.column_comparisons;
    let (ord, diff) = full_compare(a.key, b.key, start, counters);
    let column_comparisons = counters.column_comparisons - before;
    let first_wins = match ord {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.rank <= b.rank,
    };
    let loser_ovc = if ord == Ordering::Equal {
        Ovc::DUPLICATE
    } else {
        let loser = if first_wins { b.key } else { a.key };
        Ovc::from_offset_code(diff, loser[diff], arity)
    };
    Contest {
        first_wins,
        loser_ovc,
        column_comparisons,
    }
}

/// Region of a [`CodeWord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    LowFence(usize),
    CurrentRun(Ovc),
    NextRun(Ovc),
    HighFence(usize),
}

/// One unsigned word ordering low fences, current-run codes, next-run codes
/// and high fences, in that order:
///
/// | region      | range                            | formula                 |
/// |-------------|----------------------------------|-------------------------|
/// | low fence   | `0 ..= cap-1`                    | `run`                   |
/// | current run | `cap ..= MAX/2`                  | `ovc + cap`             |
/// | next run    | `MAX/2+1 ..= MAX-cap`            | `ovc + MAX/2 + 1`       |
/// | high fence  | `MAX-cap+1 ..= MAX`              | `MAX - run`             |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeWord(pub u64);

const HALF: u64 = u64::MAX / 2;

impl CodeWord {
    pub fn encode(region: Region, capacity: usize) -> Result<CodeWord> {
        let cap = capacity as u64;
        if cap == 0 || cap > HALF {
            return Err(OvcError::Config(format!("code-word capacity {capacity}")));
        }
        let word = match region {
            Region::LowFence(run) if (run as u64) < cap => run as u64,
            Region::LowFence(_) => return Err(OvcError::CodeWordRange("low fence")),
            Region::CurrentRun(ovc) if ovc.packed() <= HALF - cap => ovc.packed() + cap,
            Region::CurrentRun(_) => return Err(OvcError::CodeWordRange("current run")),
            Region::NextRun(ovc) if ovc.packed() <= HALF - cap => ovc.packed() + HALF + 1,
            Region::NextRun(_) => return Err(OvcError::CodeWordRange("next run")),
            Region::HighFence(run) if (run as u64) < cap => u64::MAX - run as u64,
            Region::HighFence(_) => return Err(OvcError::CodeWordRange("high fence")),
        };
        Ok(CodeWord(word))
    }

    pub fn decode(self, capacity: usize) -> Region {
        let cap = capacity as u64;
        let w = self.0;
        if w < cap {
            Region::LowFence(w as usize)
        } else if w <= HALF {
            Region::CurrentRun(Ovc(w - cap))
        } else if w <= u64::MAX - cap {
            Region::NextRun(Ovc(w - HALF - 1))
        } else {
            Region::HighFence((u64::MAX - w) as usize)
        }
    }

    #[inline]
    pub(crate) fn current(ovc: Ovc, cap: u64) -> CodeWord {
        CodeWord(ovc.packed() + cap)
    }

    #[inline]
    pub(crate) fn next(ovc: Ovc) -> CodeWord {
        CodeWord(ovc.packed() + HALF + 1)
    }

    #[inline]
    pub(crate) fn low_fence(run: usize) -> CodeWord {
        CodeWord(run as u64)
    }

    #[inline]
    pub(crate) fn high_fence(run: usize) -> CodeWord {
        CodeWord(u64::MAX - run as u64)
    }

    #[inline]
    pub(crate) fn is_current(self, cap: u64) -> bool {
        self.0 >= cap && self.0 <= HALF
    }

    #[inline]
    pub(crate) fn is_next(self, cap: u64) -> bool {
        self.0 > HALF && self.0 <= u64::MAX - cap
    }

    #[inline]
    pub(crate) fn is_row(self, cap: u64) -> bool {
        self.0 >= cap && self.0 <= u64::MAX - cap
    }

    /// Codes of a row word, whichever run region it sits in.
    #[inline]
    pub(crate) fn row_ovc(self, cap: u64) -> Ovc {
        if self.0 <= HALF {
            Ovc(self.0 - cap)
        } else {
            Ovc(self.0 - HALF - 1)
        }
    }

    /// Same region as `self`, new code.
    #[inline]
    pub(crate) fn with_ovc(self, ovc: Ovc, cap: u64) -> CodeWord {
        if self.0 <= HALF {
            CodeWord::current(ovc, cap)
        } else {
            CodeWord::next(ovc)
        }
    }

    /// Moves a next-run word into the current-run region.
    #[inline]
    pub(crate) fn rebased(self, cap: u64) -> CodeWord {
        if self.is_next(cap) {
            CodeWord::current(self.row_ovc(cap), cap)
        } else {
            self
        }
    }
}
