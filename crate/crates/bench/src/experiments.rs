//! Experiment drivers. Each returns a [`Table`] whose count columns are read
//! straight from the core [`Counters`]; time columns are wall-clock
//! milliseconds, the minimum over `repeat` runs, and vary by machine.

use std::collections::{BTreeSet, HashMap};
use std::io::Cursor;
use std::time::Instant;

use anyhow::{bail, Result};
use ovcsort::consumers::{segment_flags, stream_aggregate};
use ovcsort::keycodec::ovc_relative_to;
use ovcsort::merge::merge_runs_heap_baseline;
use ovcsort::runformat::{ColumnRunBuilder, RowRunRecord, RowRunWriter, RunStats};
use ovcsort::rungen::{sort_pmnk, sort_quicksort, sort_tree_of_losers};
use ovcsort::{external_sort, merge_runs, Aggregate, CodedRow, Counters, DedupMode, Ovc, Row, RowSink, SortOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{col, generate, DatasetSpec, Layout};
use crate::report::{fixed, Table};

pub const EXPERIMENTS: &[&str] = &[
    "rungen-counts",
    "merge-counts",
    "column-counts",
    "dup-merge",
    "compress-row",
    "compress-column",
    "segmentation",
    "aggregation",
    "hash-keys",
];

const TIME_NOTE: &str = "Times are wall-clock milliseconds (minimum over repeats) and depend on the machine.";

/// Experiment parameters. `None` selects the experiment's default.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub rows: Option<Vec<usize>>,
    pub arity: Option<usize>,
    pub values: Option<u64>,
    pub prefix: Option<Vec<usize>>,
    pub copies: Option<Vec<usize>>,
    pub fan_in: Option<usize>,
    pub rows_per_run: Option<Vec<usize>>,
    pub seed: u64,
    pub seeds: usize,
    pub repeat: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            rows: None,
            arity: None,
            values: None,
            prefix: None,
            copies: None,
            fan_in: None,
            rows_per_run: None,
            seed: 1,
            seeds: 5,
            repeat: 3,
        }
    }
}

fn or<T: Clone>(v: &Option<T>, default: T) -> T {
    v.clone().unwrap_or(default)
}

pub fn run_experiment(name: &str, p: &Params) -> Result<Table> {
    if p.seeds == 0 || p.repeat == 0 {
        bail!("seeds and repeat must be at least 1");
    }
    match name {
        "rungen-counts" => rungen_counts(p),
        "merge-counts" => merge_counts(p),
        "column-counts" => column_counts(p),
        "dup-merge" => dup_merge(p),
        "compress-row" => compress(p, false),
        "compress-column" => compress(p, true),
        "segmentation" => segmentation(p),
        "aggregation" => aggregation(p),
        "hash-keys" => hash_keys(p),
        other => bail!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ),
    }
}

/// Runs `f` `repeat` times; returns the last result and the fastest time.
pub fn timed<T>(repeat: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    timed_on(repeat, &(), |()| f())
}

/// Like [`timed`], but each run gets a fresh clone of `input`, made before
/// the clock starts.
pub fn timed_on<I: Clone, T>(repeat: usize, input: &I, mut f: impl FnMut(I) -> T) -> (T, f64) {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeat.max(1) {
        let copy = input.clone();
        let start = Instant::now();
        let v = f(copy);
        best = best.min(start.elapsed().as_secs_f64() * 1e3);
        out = Some(v);
    }
    (out.expect("at least one run"), best)
}

/// Codes a sorted row sequence relative to each row's predecessor.
pub fn code_sorted(rows: Vec<Row>) -> Vec<CodedRow> {
    let mut scratch = Counters::default();
    let mut out: Vec<CodedRow> = Vec::with_capacity(rows.len());
    for row in rows {
        let ovc = match out.last() {
            None => Ovc::initial(&row.key),
            Some(prev) => ovc_relative_to(&prev.row.key, &row.key, &mut scratch).1,
        };
        out.push(CodedRow::new(row, ovc));
    }
    out
}

/// `n·log2(n/e)`, the comparison count of an optimal sort.
pub fn sort_lower_bound(n: usize) -> f64 {
    let n = n as f64;
    n * (n / std::f64::consts::E).log2()
}

fn rungen_counts(p: &Params) -> Result<Table> {
    let mut t = Table::new(
        "rungen-counts",
        &[
            "rows",
            "seed",
            "lower_bound",
            "tree_row_comparisons",
            "tree_factor",
            "tree_column_comparisons",
            "quicksort_row_comparisons",
            "quicksort_factor",
            "tree_ms",
            "quicksort_ms",
        ],
    );
    for n in or(&p.rows, vec![1_000, 10_000, 100_000]) {
        for s in 0..p.seeds as u64 {
            let seed = p.seed + s;
            let rows = generate(&DatasetSpec {
                rows: n,
                arity: or(&p.arity, 4),
                values: or(&p.values, 1 << 30),
                seed,
                ..Default::default()
            })?;
            let (tree, tree_ms) = timed_on(p.repeat, &rows, |rows| {
                let mut c = Counters::default();
                sort_tree_of_losers(rows, 0, &mut c);
                c
            });
            let (quick, quick_ms) = timed_on(p.repeat, &rows, |mut v| {
                let mut c = Counters::default();
                sort_quicksort(&mut v, &mut c);
                c
            });
            let bound = sort_lower_bound(n);
            t.push(vec![
                n.to_string(),
                seed.to_string(),
                fixed(bound, 1),
                tree.row_comparisons.to_string(),
                fixed(tree.row_comparisons as f64 / bound, 4),
                tree.column_comparisons.to_string(),
                quick.row_comparisons.to_string(),
                fixed(quick.row_comparisons as f64 / bound, 4),
                fixed(tree_ms, 3),
                fixed(quick_ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

/// `fan_in` sorted, coded runs of `rows_per_run` rows; all keys distinct.
pub fn distinct_runs(fan_in: usize, rows_per_run: usize, arity: usize, seed: u64) -> Vec<Vec<CodedRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = fan_in * rows_per_run;
    let mut keys = BTreeSet::new();
    while keys.len() < total {
        keys.insert(
            (0..arity)
                .map(|_| col(rng.gen_range(1..1i64 << 30)))
                .collect::<Vec<u64>>(),
        );
    }
    let mut keys: Vec<Vec<u64>> = keys.into_iter().collect();
    keys.shuffle(&mut rng);
    keys.chunks(rows_per_run.max(1))
        .take(fan_in)
        .map(|chunk| {
            let mut run: Vec<Row> = chunk.iter().cloned().map(Row::new).collect();
            run.sort();
            code_sorted(run)
        })
        .chain(std::iter::repeat_with(Vec::new))
        .take(fan_in)
        .collect()
}

fn iters(runs: &[Vec<CodedRow>]) -> Vec<impl Iterator<Item = ovcsort::Result<CodedRow>> + '_> {
    runs.iter().map(|r| r.iter().cloned().map(Ok)).collect()
}

fn merge_counts(p: &Params) -> Result<Table> {
    let fan_in = or(&p.fan_in, 8);
    let mut t = Table::new(
        "merge-counts",
        &[
            "fan_in",
            "rows_per_run",
            "total_rows",
            "n_log2_f",
            "tree_row_comparisons",
            "tree_factor",
            "tree_column_comparisons",
            "heap_row_comparisons",
            "heap_over_tree",
            "tree_ms",
            "heap_ms",
        ],
    );
    for n in or(&p.rows_per_run, vec![1_000, 10_000]) {
        let runs = distinct_runs(fan_in, n, or(&p.arity, 2), p.seed);
        let total = fan_in * n;
        let (tree, tree_ms) = timed(p.repeat, || -> Result<Counters> {
            let mut c = Counters::default();
            let mut out: Vec<CodedRow> = Vec::with_capacity(total);
            merge_runs(iters(&runs), DedupMode::Off, &mut c, &mut out)?;
            Ok(c)
        });
        let (heap, heap_ms) = timed(p.repeat, || -> Result<Counters> {
            let mut c = Counters::default();
            let mut out: Vec<CodedRow> = Vec::with_capacity(total);
            merge_runs_heap_baseline(iters(&runs), DedupMode::Off, false, &mut c, &mut out)?;
            Ok(c)
        });
        let (tree, heap) = (tree?, heap?);
        let bound = total as f64 * (fan_in as f64).log2();
        t.push(vec![
            fan_in.to_string(),
            n.to_string(),
            total.to_string(),
            fixed(bound, 1),
            tree.row_comparisons.to_string(),
            fixed(tree.row_comparisons as f64 / bound, 4),
            tree.column_comparisons.to_string(),
            heap.row_comparisons.to_string(),
            fixed(heap.row_comparisons as f64 / tree.row_comparisons.max(1) as f64, 3),
            fixed(tree_ms, 3),
            fixed(heap_ms, 3),
        ]);
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

/// `n` rows of `prefix` constant columns followed by one distinct column.
pub fn prefix_rows(n: usize, prefix: usize, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deciding: Vec<i64> = (0..n as i64).map(|i| 3 * i + 1).collect();
    deciding.shuffle(&mut rng);
    deciding
        .into_iter()
        .map(|d| {
            let mut key = vec![col(7); prefix];
            key.push(col(d));
            Row::new(key)
        })
        .collect()
}

fn column_counts(p: &Params) -> Result<Table> {
    let mut t = Table::new(
        "column-counts",
        &[
            "prefix",
            "rows",
            "ovc_column_comparisons",
            "expected",
            "ovc_row_comparisons",
            "pmnk_row_comparisons",
            "pmnk_column_comparisons",
            "ovc_ms",
            "pmnk_ms",
        ],
    );
    for n in or(&p.rows, vec![1_000, 10_000]) {
        for prefix in or(&p.prefix, vec![0, 2, 4, 6, 8]) {
            let rows = prefix_rows(n, prefix, p.seed);
            let (ovc, ovc_ms) = timed_on(p.repeat, &rows, |rows| {
                let mut c = Counters::default();
                sort_tree_of_losers(rows, 0, &mut c);
                c
            });
            let (pmnk, pmnk_ms) = timed_on(p.repeat, &rows, |rows| {
                let mut c = Counters::default();
                sort_pmnk(rows, &mut c);
                c
            });
            t.push(vec![
                prefix.to_string(),
                n.to_string(),
                ovc.column_comparisons.to_string(),
                ((prefix + 1) * n.saturating_sub(1)).to_string(),
                ovc.row_comparisons.to_string(),
                pmnk.row_comparisons.to_string(),
                pmnk.column_comparisons.to_string(),
                fixed(ovc_ms, 3),
                fixed(pmnk_ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

/// `fan_in` sorted, coded runs; each holds `rows_per_run / copies` random
/// keys, every one repeated `copies` times.
pub fn duplicate_runs(
    fan_in: usize,
    rows_per_run: usize,
    copies: usize,
    arity: usize,
    seed: u64,
) -> Vec<Vec<CodedRow>> {
    (0..fan_in as u64)
        .map(|i| {
            let spec = DatasetSpec {
                rows: rows_per_run,
                arity,
                values: 1 << 30,
                copies,
                layout: Layout::Sorted,
                seed: seed.wrapping_mul(1000).wrapping_add(i),
                ..Default::default()
            };
            code_sorted(generate(&spec).expect("valid spec"))
        })
        .collect()
}

fn dup_merge(p: &Params) -> Result<Table> {
    let fan_in = or(&p.fan_in, 8);
    let mut t = Table::new(
        "dup-merge",
        &[
            "copies",
            "fan_in",
            "rows_per_run",
            "interior_rows",
            "bypassed",
            "bypass_fraction",
            "tree_row_comparisons",
            "tree_column_comparisons",
            "heap_row_comparisons",
            "heap_column_comparisons",
            "heap_bypass_row_comparisons",
            "heap_bypass_column_comparisons",
            "output_rows",
            "tree_ms",
            "heap_ms",
            "heap_bypass_ms",
        ],
    );
    for n in or(&p.rows_per_run, vec![10_000]) {
        for d in or(&p.copies, vec![10, 100, 1_000]) {
            let runs = duplicate_runs(fan_in, n, d, or(&p.arity, 4), p.seed);
            let merge = |kind: u8| -> Result<(Counters, usize)> {
                let mut c = Counters::default();
                let mut out: Vec<CodedRow> = Vec::new();
                match kind {
                    0 => merge_runs(iters(&runs), DedupMode::Drop, &mut c, &mut out)?,
                    1 => merge_runs_heap_baseline(iters(&runs), DedupMode::Drop, false, &mut c, &mut out)?,
                    _ => merge_runs_heap_baseline(iters(&runs), DedupMode::Drop, true, &mut c, &mut out)?,
                }
                Ok((c, out.len()))
            };
            let (tree, tree_ms) = timed(p.repeat, || merge(0));
            let (heap, heap_ms) = timed(p.repeat, || merge(1));
            let (heap_b, heap_b_ms) = timed(p.repeat, || merge(2));
            let ((tree, out_rows), (heap, _), (heap_b, _)) = (tree?, heap?, heap_b?);
            let interior: usize = runs.iter().map(|r| r.len().saturating_sub(1)).sum();
            t.push(vec![
                d.to_string(),
                fan_in.to_string(),
                n.to_string(),
                interior.to_string(),
                tree.bypassed.to_string(),
                fixed(tree.bypassed as f64 / interior.max(1) as f64, 4),
                tree.row_comparisons.to_string(),
                tree.column_comparisons.to_string(),
                heap.row_comparisons.to_string(),
                heap.column_comparisons.to_string(),
                heap_b.row_comparisons.to_string(),
                heap_b.column_comparisons.to_string(),
                out_rows.to_string(),
                fixed(tree_ms, 3),
                fixed(heap_ms, 3),
                fixed(heap_b_ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

/// Collects a sorted stream as column-format runs.
struct ColumnSink {
    arity: usize,
    builder: Option<ColumnRunBuilder>,
    first: bool,
}

impl RowSink for ColumnSink {
    fn push(&mut self, row: Row, ovc: Ovc) -> ovcsort::Result<()> {
        let prefix = if self.first { 0 } else { ovc.offset(self.arity) };
        self.first = false;
        let builder = self.builder.as_mut().expect("open builder");
        builder.push(RowRunRecord::truncate(&row, prefix))
    }
}

/// Sorts `rows` and stores them as one run in the row or column format.
/// Returns the run statistics and the encoded size in bytes.
pub fn sorted_run_stats(rows: Vec<Row>, arity: usize, column: bool) -> Result<(RunStats, usize)> {
    let options = SortOptions::new(rows.len().max(2), 8);
    let mut c = Counters::default();
    let input = rows.into_iter().map(Ok);
    if column {
        let mut sink = ColumnSink {
            arity,
            builder: Some(ColumnRunBuilder::new(arity)?),
            first: true,
        };
        external_sort(input, &options, &mut sink, &mut c)?;
        let run = sink.builder.take().expect("builder").finish();
        let mut bytes = Vec::new();
        run.write_to(&mut bytes)?;
        Ok((run.stats(), bytes.len()))
    } else {
        let mut w = RowRunWriter::new(Cursor::new(Vec::new()), arity, true)?;
        external_sort(input, &options, &mut w, &mut c)?;
        let (cursor, stats) = w.finish()?;
        Ok((stats, cursor.into_inner().len()))
    }
}

fn compress(p: &Params, column: bool) -> Result<Table> {
    let name = if column { "compress-column" } else { "compress-row" };
    let mut t = Table::new(
        name,
        &[
            "prefix",
            "rows",
            "arity",
            "total_values",
            "stored_values",
            "compression_ratio",
            "bytes",
            "ms",
        ],
    );
    let arity = or(&p.arity, 10);
    for n in or(&p.rows, vec![1_000_000]) {
        for prefix in or(&p.prefix, vec![2, 4, 6, 8]) {
            let rows = generate(&DatasetSpec {
                rows: n,
                arity,
                values: or(&p.values, 9),
                prefix,
                seed: p.seed,
                ..Default::default()
            })?;
            let (res, ms) = timed_on(p.repeat, &rows, |rows| sorted_run_stats(rows, arity, column));
            let (stats, bytes) = res?;
            t.push(vec![
                prefix.to_string(),
                n.to_string(),
                arity.to_string(),
                stats.total_values().to_string(),
                stats.stored_values.to_string(),
                fixed(stats.compression_ratio(), 1),
                bytes.to_string(),
                fixed(ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

/// A sorted, coded stream of `n` rows whose first column changes every
/// `group` rows; the other columns are random.
pub fn grouped_stream(n: usize, group: usize, arity: usize, seed: u64) -> Vec<CodedRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Row> = (0..n)
        .map(|i| {
            let mut key = vec![col((i / group.max(1)) as i64)];
            key.extend((1..arity).map(|_| col(rng.gen_range(1..1i64 << 20))));
            Row::with_payload(key, rng.gen_range(-1000i64..1000).to_le_bytes().to_vec())
        })
        .collect();
    rows.sort();
    code_sorted(rows)
}

fn segmentation(p: &Params) -> Result<Table> {
    let mut t = Table::new(
        "segmentation",
        &[
            "flagged_fraction",
            "rows",
            "flagged",
            "oracle_flagged",
            "consumer_column_comparisons",
            "ovc_ms",
            "compare_ms",
        ],
    );
    let arity = or(&p.arity, 4);
    for n in or(&p.rows, vec![1_000_000]) {
        for group in or(&p.copies, vec![1, 100, 10_000]) {
            let stream = grouped_stream(n, group, arity, p.seed);
            let ((flagged, c), ovc_ms) = timed(p.repeat, || {
                let mut c = Counters::default();
                let f = segment_flags(&stream, arity, 1, &mut c).filter(|(_, f)| *f).count();
                (f, c)
            });
            let (oracle, compare_ms) = timed(p.repeat, || {
                (0..stream.len())
                    .filter(|&i| i == 0 || stream[i - 1].row.key[..1] != stream[i].row.key[..1])
                    .count()
            });
            t.push(vec![
                fixed(1.0 / group as f64, 4),
                n.to_string(),
                flagged.to_string(),
                oracle.to_string(),
                c.column_comparisons.to_string(),
                fixed(ovc_ms, 3),
                fixed(compare_ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

fn aggregation(p: &Params) -> Result<Table> {
    let mut t = Table::new(
        "aggregation",
        &[
            "io_ratio",
            "rows",
            "groups",
            "oracle_groups",
            "sums_match",
            "consumer_column_comparisons",
            "ovc_ms",
            "hash_ms",
        ],
    );
    let arity = or(&p.arity, 4);
    for n in or(&p.rows, vec![1_000_000]) {
        for ratio in or(&p.copies, vec![1, 100, 10_000]) {
            let stream = grouped_stream(n, ratio, arity, p.seed);
            let (res, ovc_ms) = timed(p.repeat, || -> Result<(Vec<(u64, i64)>, Counters)> {
                let mut c = Counters::default();
                let mut groups = Vec::new();
                stream_aggregate(
                    stream.iter().cloned().map(Ok),
                    arity,
                    1,
                    &[Aggregate::Sum],
                    &mut c,
                    |g| {
                        groups.push((g.key[0], g.value_i64(0)));
                        Ok(())
                    },
                )?;
                Ok((groups, c))
            });
            let (groups, c) = res?;
            let (oracle, hash_ms) = timed(p.repeat, || {
                let mut m: HashMap<u64, i64> = HashMap::new();
                for r in &stream {
                    *m.entry(r.row.key[0]).or_default() += i64::from_le_bytes(r.row.payload[..8].try_into().unwrap());
                }
                m
            });
            let sums_match = groups.len() == oracle.len() && groups.iter().all(|(k, s)| oracle.get(k) == Some(s));
            t.push(vec![
                ratio.to_string(),
                n.to_string(),
                groups.len().to_string(),
                oracle.len().to_string(),
                sums_match.to_string(),
                c.column_comparisons.to_string(),
                fixed(ovc_ms, 3),
                fixed(hash_ms, 3),
            ]);
        }
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

fn hash_keys(p: &Params) -> Result<Table> {
    let mut t = Table::new(
        "hash-keys",
        &[
            "rows",
            "tree_row_comparisons",
            "tree_column_comparisons",
            "tree_ovc_only_decisions",
            "pmnk_row_comparisons",
            "pmnk_column_comparisons",
            "quicksort_row_comparisons",
            "quicksort_column_comparisons",
            "tree_ms",
            "pmnk_ms",
            "quicksort_ms",
        ],
    );
    for n in or(&p.rows, vec![100_000]) {
        let rows = generate(&DatasetSpec {
            rows: n,
            arity: or(&p.arity, 4),
            values: or(&p.values, 1 << 30),
            layout: Layout::Hash,
            seed: p.seed,
            ..Default::default()
        })?;
        let (tree, tree_ms) = timed_on(p.repeat, &rows, |rows| {
            let mut c = Counters::default();
            sort_tree_of_losers(rows, 0, &mut c);
            c
        });
        let (pmnk, pmnk_ms) = timed_on(p.repeat, &rows, |rows| {
            let mut c = Counters::default();
            sort_pmnk(rows, &mut c);
            c
        });
        let (quick, quick_ms) = timed_on(p.repeat, &rows, |mut v| {
            let mut c = Counters::default();
            sort_quicksort(&mut v, &mut c);
            c
        });
        t.push(vec![
            n.to_string(),
            tree.row_comparisons.to_string(),
            tree.column_comparisons.to_string(),
            tree.ovc_only_decisions.to_string(),
            pmnk.row_comparisons.to_string(),
            pmnk.column_comparisons.to_string(),
            quick.row_comparisons.to_string(),
            quick.column_comparisons.to_string(),
            fixed(tree_ms, 3),
            fixed(pmnk_ms, 3),
            fixed(quick_ms, 3),
        ]);
    }
    t.notes.push(TIME_NOTE.into());
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Params {
        Params {
            rows: Some(vec![500]),
            rows_per_run: Some(vec![200]),
            copies: Some(vec![1, 10]),
            seeds: 2,
            repeat: 1,
            ..Default::default()
        }
    }

    #[test]
    fn every_experiment_runs() {
        for name in EXPERIMENTS {
            let t = run_experiment(name, &small()).unwrap();
            assert!(!t.rows.is_empty(), "{name}");
            assert!(t.to_csv().unwrap().lines().count() > 1);
        }
        assert!(run_experiment("sort-everything", &small()).is_err());
    }

    #[test]
    fn counts_are_deterministic() {
        let a = run_experiment("merge-counts", &small()).unwrap();
        let b = run_experiment("merge-counts", &small()).unwrap();
        assert_eq!(a.get(0, "tree_row_comparisons"), b.get(0, "tree_row_comparisons"));
        assert_eq!(a.get(0, "heap_row_comparisons"), b.get(0, "heap_row_comparisons"));
    }

    #[test]
    fn column_counts_follow_prefix() {
        let t = run_experiment("column-counts", &small()).unwrap();
        for r in 0..t.rows.len() {
            assert_eq!(t.num(r, "ovc_column_comparisons"), t.num(r, "expected"));
        }
    }

    #[test]
    fn distinct_runs_are_sorted_and_distinct() {
        let runs = distinct_runs(4, 50, 2, 3);
        let all: BTreeSet<Vec<u64>> = runs.iter().flatten().map(|r| r.row.key.clone()).collect();
        assert_eq!(all.len(), 200);
        assert!(runs.iter().all(|r| r.windows(2).all(|w| w[0].row.key < w[1].row.key)));
    }

    #[test]
    fn row_and_column_stats_agree() {
        let rows = generate(&DatasetSpec {
            rows: 2000,
            arity: 5,
            values: 3,
            prefix: 1,
            ..Default::default()
        })
        .unwrap();
        let (row, _) = sorted_run_stats(rows.clone(), 5, false).unwrap();
        let (colm, _) = sorted_run_stats(rows, 5, true).unwrap();
        assert_eq!(row, colm);
    }
}
