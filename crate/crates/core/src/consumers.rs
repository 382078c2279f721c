//! Operators that consume sorted, coded streams: in-stream aggregation,
//! duplicate removal, segmentation, segmented sorting and merge join.
//!
//! All boundary detection is a single test of a row's offset against a
//! column count. Only merge join compares column values, and only once per
//! pair of group boundaries.

use std::cmp::Ordering;

use crate::error::{OvcError, Result};
use crate::keycodec::{full_compare, Counters, Ovc, Row};
use crate::rungen::sort_tree_of_losers;
use crate::stream::{Aggregate, CodedRow};

/// One output group of [`stream_aggregate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    /// The first `group_arity` columns.
    pub key: Vec<u64>,
    pub rows: u64,
    /// One 8-byte little-endian value per combiner.
    pub values: Vec<[u8; 8]>,
}

impl Group {
    pub fn value_u64(&self, i: usize) -> u64 {
        u64::from_le_bytes(self.values[i])
    }

    pub fn value_i64(&self, i: usize) -> i64 {
        i64::from_le_bytes(self.values[i])
    }
}

/// Incremental grouping on the first `group_arity` columns.
///
/// The payload is one value column read by every combiner, except
/// [`Aggregate::Count`], which counts rows.
#[derive(Debug)]
pub struct StreamAggregator {
    arity: usize,
    group_arity: usize,
    combiners: Vec<Aggregate>,
    current: Option<Group>,
}

impl StreamAggregator {
    pub fn new(arity: usize, group_arity: usize, combiners: Vec<Aggregate>) -> Result<Self> {
        if group_arity > arity {
            return Err(OvcError::Config(format!(
                "group arity {group_arity} exceeds key arity {arity}"
            )));
        }
        Ok(Self {
            arity,
            group_arity,
            combiners,
            current: None,
        })
    }

    /// Adds a row; returns the previous group when this row starts a new one.
    pub fn push(&mut self, row: &Row, ovc: Ovc) -> Result<Option<Group>> {
        let starts = self.current.is_none() || ovc.offset(self.arity) < self.group_arity;
        if starts {
            let mut values = Vec::with_capacity(self.combiners.len());
            for &agg in &self.combiners {
                values.push(to8(&contribution(agg, row)?));
            }
            let fresh = Group {
                key: row.key[..self.group_arity].to_vec(),
                rows: 1,
                values,
            };
            return Ok(self.current.replace(fresh));
        }
        let group = self.current.as_mut().expect("open group");
        group.rows += 1;
        for (&agg, value) in self.combiners.iter().zip(&mut group.values) {
            agg.fold(value, &contribution(agg, row)?)?;
        }
        Ok(None)
    }

    pub fn finish(&mut self) -> Option<Group> {
        self.current.take()
    }
}

fn contribution(agg: Aggregate, row: &Row) -> Result<Vec<u8>> {
    match agg {
        Aggregate::Count => agg.init(&[]),
        _ => agg.init(&row.payload),
    }
}

fn to8(bytes: &[u8]) -> [u8; 8] {
    bytes.try_into().expect("initialized payloads are 8 bytes")
}

/// Groups a sorted stream on its first `group_arity` columns. A row starts a
/// group exactly when its offset is below `group_arity`.
pub fn stream_aggregate<I, F>(
    stream: I,
    arity: usize,
    group_arity: usize,
    combiners: &[Aggregate],
    counters: &mut Counters,
    mut emit: F,
) -> Result<()>
where
    I: IntoIterator<Item = Result<CodedRow>>,
    F: FnMut(Group) -> Result<()>,
{
    let _ = counters;
    let mut agg = StreamAggregator::new(arity, group_arity, combiners.to_vec())?;
    for item in stream {
        let CodedRow { row, ovc } = item?;
        if let Some(group) = agg.push(&row, ovc)? {
            emit(group)?;
        }
    }
    if let Some(group) = agg.finish() {
        emit(group)?;
    }
    Ok(())
}

/// Keeps the first row of every distinct key.
pub fn stream_dedup<I>(stream: I, counters: &mut Counters) -> impl Iterator<Item = Result<CodedRow>>
where
    I: IntoIterator<Item = Result<CodedRow>>,
{
    let _ = counters;
    let mut first = true;
    stream.into_iter().filter(move |item| match item {
        Ok(r) => {
            let keep = first || !r.ovc.is_duplicate();
            first = false;
            keep
        }
        Err(_) => true,
    })
}

/// Flags rows that start a segment on the first `segment_arity` columns.
/// Rows are passed through by reference.
pub fn segment_flags<'a>(
    rows: &'a [CodedRow],
    arity: usize,
    segment_arity: usize,
    counters: &mut Counters,
) -> impl Iterator<Item = (&'a CodedRow, bool)> + 'a {
    let _ = counters;
    rows.iter()
        .enumerate()
        .map(move |(i, r)| (r, i == 0 || r.ovc.offset(arity) < segment_arity))
}

/// Completes the sort of a stream already sorted on its first
/// `segment_arity` columns, one in-memory segment at a time.
///
/// Each segment is sorted with every row's initial offset set to
/// `segment_arity`. A segment longer than `buffer_limit` rows is an error.
pub fn segmented_sort<I, F>(
    stream: I,
    arity: usize,
    segment_arity: usize,
    buffer_limit: usize,
    counters: &mut Counters,
    mut emit: F,
) -> Result<()>
where
    I: IntoIterator<Item = Result<CodedRow>>,
    F: FnMut(CodedRow) -> Result<()>,
{
    if segment_arity > arity {
        return Err(OvcError::Config(format!(
            "segment arity {segment_arity} exceeds key arity {arity}"
        )));
    }
    let mut segment: Vec<Row> = Vec::new();
    let mut boundary_offset = 0;
    let mut flush = |segment: &mut Vec<Row>, boundary_offset: usize, counters: &mut Counters| -> Result<()> {
        if segment.is_empty() {
            return Ok(());
        }
        let mut sorted = sort_tree_of_losers(std::mem::take(segment), segment_arity, counters);
        let first = &mut sorted[0];
        first.ovc = match first.row.key.get(boundary_offset) {
            Some(&code) => Ovc::encode(boundary_offset, code, arity)?,
            None => Ovc::DUPLICATE,
        };
        sorted.into_iter().try_for_each(&mut emit)
    };
    let mut first = true;
    for item in stream {
        let CodedRow { row, ovc } = item?;
        let offset = ovc.offset(arity);
        if first || offset < segment_arity {
            flush(&mut segment, boundary_offset, counters)?;
            boundary_offset = if first { 0 } else { offset };
            first = false;
        }
        if segment.len() == buffer_limit {
            return Err(OvcError::SegmentTooLarge {
                rows: segment.len() + 1,
                limit: buffer_limit,
            });
        }
        segment.push(row);
    }
    flush(&mut segment, boundary_offset, counters)
}

/// Reads a coded stream one join-key group at a time.
struct GroupReader<I> {
    input: I,
    arity: usize,
    join_arity: usize,
    pending: Option<CodedRow>,
    started: bool,
}

impl<I: Iterator<Item = Result<CodedRow>>> GroupReader<I> {
    fn new(input: I, arity: usize, join_arity: usize) -> Self {
        Self {
            input,
            arity,
            join_arity,
            pending: None,
            started: false,
        }
    }

    fn next_group(&mut self) -> Result<Option<Vec<CodedRow>>> {
        if !self.started {
            self.started = true;
            self.pending = self.input.next().transpose()?;
        }
        let Some(first) = self.pending.take() else {
            return Ok(None);
        };
        let mut group = vec![first];
        loop {
            match self.input.next().transpose()? {
                Some(next) if next.ovc.offset(self.arity) >= self.join_arity => group.push(next),
                other => {
                    self.pending = other;
                    return Ok(Some(group));
                }
            }
        }
    }
}

/// Tracks the output code of the left key across skipped rows: the offset of
/// a row relative to the last emitted one is the minimum offset seen since.
struct LeftCoder {
    arity: usize,
    emitted: bool,
    min_offset: usize,
}

impl LeftCoder {
    fn skip(&mut self, ovc: Ovc) {
        self.min_offset = self.min_offset.min(ovc.offset(self.arity));
    }

    fn emit(&mut self, key: &[u64]) -> Ovc {
        let ovc = if !self.emitted {
            Ovc::initial(key)
        } else if self.min_offset >= self.arity {
            Ovc::DUPLICATE
        } else {
            Ovc::encode(self.min_offset, key[self.min_offset], self.arity).expect("valid offset")
        };
        self.emitted = true;
        self.min_offset = self.arity;
        ovc
    }
}

/// Inner merge join on the first `join_arity` columns.
///
/// Each side is split into groups by offsets alone; group keys are compared
/// across sides once per step. Matching groups produce their full cross
/// product, left row major. Every output pair carries a code for its left
/// row relative to the previous pair's left row.
pub fn merge_join<L, R, F>(
    left: L,
    right: R,
    arity: usize,
    join_arity: usize,
    counters: &mut Counters,
    mut emit: F,
) -> Result<()>
where
    L: IntoIterator<Item = Result<CodedRow>>,
    R: IntoIterator<Item = Result<CodedRow>>,
    F: FnMut(&Row, &Row, Ovc) -> Result<()>,
{
    if join_arity == 0 || join_arity > arity {
        return Err(OvcError::Config(format!(
            "join arity must be in 1..={arity}, got {join_arity}"
        )));
    }
    let mut left = GroupReader::new(left.into_iter(), arity, join_arity);
    let mut right = GroupReader::new(right.into_iter(), arity, join_arity);
    let mut coder = LeftCoder {
        arity,
        emitted: false,
        min_offset: arity,
    };
    let mut lg = left.next_group()?;
    let mut rg = right.next_group()?;
    while let (Some(l), Some(r)) = (&lg, &rg) {
        counters.row_comparisons += 1;
        let (ord, _) = full_compare(&l[0].row.key[..join_arity], &r[0].row.key[..join_arity], 0, counters);
        match ord {
            Ordering::Less => {
                l.iter().for_each(|row| coder.skip(row.ovc));
                lg = left.next_group()?;
            }
            Ordering::Greater => rg = right.next_group()?,
            Ordering::Equal => {
                for lrow in l {
                    coder.skip(lrow.ovc);
                    for rrow in r {
                        let ovc = coder.emit(&lrow.row.key);
                        emit(&lrow.row, &rrow.row, ovc)?;
                    }
                }
                lg = left.next_group()?;
                rg = right.next_group()?;
            }
        }
    }
    Ok(())
}
