//! Initial runs: an instrumented quicksort baseline, the tree-of-losers sort
//! that codes its output as a by-product, load-sort-store run generation and
//! replacement selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{OvcError, Result};
use crate::keycodec::{full_compare, Counters, Ovc, Row};
use crate::losertree::{Head, LoserTree, Push};
use crate::runformat::{OpenRun, RunManifest, RunSink};
use crate::stream::{CodedRow, Dedup, DedupMode};

const INSERTION_THRESHOLD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunGenMode {
    #[default]
    LoadSort,
    Replacement,
}

impl fmt::Display for RunGenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunGenMode::LoadSort => "load",
            RunGenMode::Replacement => "replace",
        })
    }
}

impl FromStr for RunGenMode {
    type Err = OvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "load" => Ok(RunGenMode::LoadSort),
            "replace" => Ok(RunGenMode::Replacement),
            other => Err(OvcError::Config(format!("unknown run generation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunGenConfig {
    /// Rows resident in memory.
    pub memory_capacity: usize,
    pub mode: RunGenMode,
    pub dedup: DedupMode,
}

impl RunGenConfig {
    pub fn new(memory_capacity: usize, mode: RunGenMode) -> Self {
        Self {
            memory_capacity,
            mode,
            dedup: DedupMode::Off,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory_capacity < 2 {
            return Err(OvcError::Config(format!(
                "memory capacity must be at least 2 rows, got {}",
                self.memory_capacity
            )));
        }
        Ok(())
    }
}

/// Sorts `v` with the quicksort scheme of common standard libraries: the
/// median of three candidates is moved to the front as pivot, partitions
/// shorter than 16 elements are left alone, and one insertion-sort pass
/// finishes the nearly sorted array.
pub fn quicksort_by<T, F: FnMut(&T, &T) -> Ordering>(v: &mut [T], cmp: &mut F) {
    let mut less = |a: &T, b: &T| cmp(a, b) == Ordering::Less;
    partition_loop(v, &mut less);
    final_insertion_sort(v, &mut less);
}

fn partition_loop<T, F: FnMut(&T, &T) -> bool>(v: &mut [T], less: &mut F) {
    let mut v = v;
    while v.len() > INSERTION_THRESHOLD {
        let cut = partition_around_median(v, less);
        let (left, right) = v.split_at_mut(cut);
        partition_loop(right, less);
        v = left;
    }
}

fn partition_around_median<T, F: FnMut(&T, &T) -> bool>(v: &mut [T], less: &mut F) -> usize {
    let n = v.len();
    move_median_to_first(v, 1, n / 2, n - 1, less);
    // Unguarded scans: the pivot at 0 and the median candidates bound them.
    let (mut lo, mut hi) = (1, n);
    loop {
        while less(&v[lo], &v[0]) {
            lo += 1;
        }
        hi -= 1;
        while less(&v[0], &v[hi]) {
            hi -= 1;
        }
        if lo >= hi {
            return lo;
        }
        v.swap(lo, hi);
        lo += 1;
    }
}

fn move_median_to_first<T, F: FnMut(&T, &T) -> bool>(v: &mut [T], a: usize, b: usize, c: usize, less: &mut F) {
    let median = if less(&v[a], &v[b]) {
        if less(&v[b], &v[c]) {
            b
        } else if less(&v[a], &v[c]) {
            c
        } else {
            a
        }
    } else if less(&v[a], &v[c]) {
        a
    } else if less(&v[b], &v[c]) {
        c
    } else {
        b
    };
    v.swap(0, median);
}

fn final_insertion_sort<T, F: FnMut(&T, &T) -> bool>(v: &mut [T], less: &mut F) {
    if v.len() > INSERTION_THRESHOLD {
        insertion_sort(&mut v[..INSERTION_THRESHOLD], less);
        // Every later element has a smaller-or-equal element in the sorted
        // head, so the inner scan needs no bounds check.
        for i in INSERTION_THRESHOLD..v.len() {
            let mut j = i;
            while less(&v[j], &v[j - 1]) {
                v.swap(j, j - 1);
                j -= 1;
            }
        }
    } else {
        insertion_sort(v, less);
    }
}

fn insertion_sort<T, F: FnMut(&T, &T) -> bool>(v: &mut [T], less: &mut F) {
    for i in 1..v.len() {
        if less(&v[i], &v[0]) {
            v[..=i].rotate_right(1);
        } else {
            let mut j = i;
            while less(&v[j], &v[j - 1]) {
                v.swap(j, j - 1);
                j -= 1;
            }
        }
    }
}

/// Quicksort on full keys. Every comparator call is one row comparison.
pub fn sort_quicksort(rows: &mut [Row], counters: &mut Counters) {
    quicksort_by(rows, &mut |a: &Row, b: &Row| {
        counters.row_comparisons += 1;
        full_compare(&a.key, &b.key, 0, counters).0
    });
}

/// Quicksort with a poor man's normalized key: column 0 is kept inline and
/// compared as one integer; only ties fall back to the remaining columns.
pub fn sort_pmnk(rows: Vec<Row>, counters: &mut Counters) -> Vec<Row> {
    let mut keyed: Vec<(u64, Row)> = rows.into_iter().map(|r| (r.key[0], r)).collect();
    quicksort_by(&mut keyed, &mut |a: &(u64, Row), b: &(u64, Row)| {
        counters.row_comparisons += 1;
        match a.0.cmp(&b.0) {
            Ordering::Equal => {}
            ord => {
                counters.ovc_only_decisions += 1;
                return ord;
            }
        }
        full_compare(&a.1.key, &b.1.key, 1, counters).0
    });
    keyed.into_iter().map(|(_, r)| r).collect()
}

/// Sorts by merging one-row runs in a tree of losers and returns every row
/// with its code relative to its output predecessor.
///
/// Rows enter with an offset-only code at `initial_offset`, which callers
/// set to the length of a prefix all rows are known to share. The first
/// output row gets the code of its column at `initial_offset`.
pub fn sort_tree_of_losers(rows: Vec<Row>, initial_offset: usize, counters: &mut Counters) -> Vec<CodedRow> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let arity = rows[0].key.len();
    let entry = if initial_offset < arity {
        Ovc::unresolved(initial_offset, arity)
    } else {
        Ovc::DUPLICATE
    };
    let mut tree = LoserTree::new(n).expect("n > 0");
    for (leaf, row) in rows.into_iter().enumerate() {
        tree.pop_push(
            leaf,
            Push::Current {
                item: row,
                ovc: entry,
                rank: leaf as u64,
            },
            counters,
        )
        .expect("priming in leaf order");
    }
    let mut out = Vec::with_capacity(n);
    while let Head::Row { leaf, .. } = tree.head() {
        let popped = tree
            .pop_push(leaf, Push::End, counters)
            .expect("winner leaf")
            .expect("row");
        out.push(CodedRow {
            row: popped.item,
            ovc: popped.ovc,
        });
    }
    let first = &mut out[0];
    first.ovc = if initial_offset < arity {
        Ovc::encode(initial_offset, first.row.key[initial_offset], arity).expect("valid offset")
    } else {
        Ovc::DUPLICATE
    };
    out
}

fn check_arity(row: &Row, arity: &mut Option<usize>) -> Result<()> {
    match *arity {
        None => {
            if row.key.is_empty() || row.key.len() > crate::keycodec::MAX_ARITY {
                return Err(OvcError::InvalidArity(row.key.len()));
            }
            *arity = Some(row.key.len());
            Ok(())
        }
        Some(a) if a == row.key.len() => Ok(()),
        Some(a) => Err(OvcError::ArityMismatch {
            expected: a,
            got: row.key.len(),
        }),
    }
}

/// Reads `memory_capacity` rows at a time, sorts them with
/// [`sort_tree_of_losers`] and writes each batch as one run.
pub fn generate_runs_load_sort<I, S>(
    input: I,
    config: &RunGenConfig,
    sink: &mut S,
    manifest: &mut RunManifest,
    counters: &mut Counters,
) -> Result<()>
where
    I: IntoIterator<Item = Result<Row>>,
    S: RunSink + ?Sized,
{
    config.validate()?;
    let mut input = input.into_iter();
    let mut arity = None;
    loop {
        let mut batch = Vec::with_capacity(config.memory_capacity.min(1 << 20));
        for row in input.by_ref() {
            let row = row?;
            check_arity(&row, &mut arity)?;
            batch.push(row);
            if batch.len() == config.memory_capacity {
                break;
            }
        }
        if batch.is_empty() {
            return Ok(());
        }
        let full = batch.len() == config.memory_capacity;
        let sorted = sort_tree_of_losers(batch, 0, counters);
        sink.begin_run()?;
        let mut dedup = Dedup::new(config.dedup);
        for CodedRow { row, ovc } in sorted {
            dedup.push(row, ovc, &mut OpenRun(&mut *sink))?;
        }
        dedup.finish(&mut OpenRun(&mut *sink))?;
        manifest.runs.push(sink.end_run()?);
        if !full {
            return Ok(());
        }
    }
}

/// Replacement selection over a tree of `memory_capacity` leaves.
///
/// Each incoming row is compared once with the row just evicted. If it sorts
/// no earlier it joins the current run, coded relative to the evicted row;
/// otherwise it waits in the next-run region with an offset-zero code. A run
/// ends when the winner comes from the next-run region.
pub fn generate_runs_replacement<I, S>(
    input: I,
    config: &RunGenConfig,
    sink: &mut S,
    manifest: &mut RunManifest,
    counters: &mut Counters,
) -> Result<()>
where
    I: IntoIterator<Item = Result<Row>>,
    S: RunSink + ?Sized,
{
    config.validate()?;
    let capacity = config.memory_capacity;
    let mut input = input.into_iter();
    let mut arity = None;
    let mut tree = LoserTree::new(capacity)?;
    let mut rank = 0u64;
    for leaf in 0..capacity {
        let push = match input.next().transpose()? {
            Some(row) => {
                check_arity(&row, &mut arity)?;
                rank += 1;
                Push::Current {
                    ovc: Ovc::initial(&row.key),
                    item: row,
                    rank,
                }
            }
            None => Push::End,
        };
        tree.pop_push(leaf, push, counters)?;
    }

    let mut open = false;
    let mut dedup = Dedup::new(config.dedup);
    loop {
        let (leaf, next_run) = match tree.head() {
            Head::Row { leaf, next_run, .. } => (leaf, next_run),
            Head::End => break,
            Head::LowFence(_) => unreachable!("tree is primed"),
        };
        if next_run {
            dedup.finish(&mut OpenRun(&mut *sink))?;
            manifest.runs.push(sink.end_run()?);
            open = false;
            tree.start_next_run();
        }
        if !open {
            sink.begin_run()?;
            dedup = Dedup::new(config.dedup);
            open = true;
        }
        let evicted = tree.pop().expect("winner is a row");
        let push = match input.next().transpose()? {
            Some(row) => {
                check_arity(&row, &mut arity)?;
                rank += 1;
                counters.row_comparisons += 1;
                let (ord, diff) = full_compare(&evicted.item.key, &row.key, 0, counters);
                if ord == Ordering::Greater {
                    Push::Next {
                        ovc: Ovc::initial(&row.key),
                        item: row,
                        rank,
                    }
                } else {
                    let ovc = match row.key.get(diff) {
                        Some(&code) => Ovc::encode(diff, code, row.key.len())?,
                        None => Ovc::DUPLICATE,
                    };
                    Push::Current { item: row, ovc, rank }
                }
            }
            None => Push::End,
        };
        tree.push(leaf, push, counters)?;
        dedup.push(evicted.item, evicted.ovc, &mut OpenRun(&mut *sink))?;
    }
    if open {
        dedup.finish(&mut OpenRun(&mut *sink))?;
        manifest.runs.push(sink.end_run()?);
    }
    Ok(())
}

/// Dispatches on `config.mode`.
pub fn generate_runs<I, S>(
    input: I,
    config: &RunGenConfig,
    sink: &mut S,
    manifest: &mut RunManifest,
    counters: &mut Counters,
) -> Result<()>
where
    I: IntoIterator<Item = Result<Row>>,
    S: RunSink + ?Sized,
{
    match config.mode {
        RunGenMode::LoadSort => generate_runs_load_sort(input, config, sink, manifest, counters),
        RunGenMode::Replacement => generate_runs_replacement(input, config, sink, manifest, counters),
    }
}
