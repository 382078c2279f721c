//! Multiway merging with offset-value codes, the binary-heap baseline, merge
//! planning and the complete external sort.

use std::path::{Path, PathBuf};

use crate::error::{OvcError, Result};
use crate::keycodec::{full_compare, Counters, Ovc, Row};
use crate::losertree::{Head, LoserTree, Push};
use crate::runformat::{DirRunSink, RunEntry, RunFormat, RunManifest, RunReader, RunWriter};
use crate::rungen::{generate_runs, sort_tree_of_losers, RunGenConfig, RunGenMode};
use crate::stream::{CodedRow, Dedup, DedupMode, RowSink};

/// One merge step: input run ids and the id of its output run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeStep {
    pub inputs: Vec<usize>,
    pub output: usize,
}

/// Merge levels over runs `0..run_count`. Step outputs get ids from
/// `run_count` upward in step order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergePlan {
    pub run_count: usize,
    pub fan_in: usize,
    pub levels: Vec<Vec<MergeStep>>,
}

impl MergePlan {
    /// Id of the fully merged run.
    pub fn final_run(&self) -> usize {
        self.levels
            .last()
            .map_or(0, |level| level.last().expect("non-empty level").output)
    }

    pub fn steps(&self) -> impl Iterator<Item = &MergeStep> {
        self.levels.iter().flatten()
    }

    /// Checks the structural invariants of a plan.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OvcError::Config(msg));
        if self.run_count <= 1 {
            return if self.levels.is_empty() {
                Ok(())
            } else {
                bad("a single run needs no merging".into())
            };
        }
        let total = self.run_count + self.steps().count();
        let mut consumed = vec![false; total];
        let mut produced = vec![false; total];
        produced[..self.run_count].iter_mut().for_each(|p| *p = true);
        let mut next_id = self.run_count;
        for level in &self.levels {
            if level.is_empty() {
                return bad("empty level".into());
            }
            let mut outputs = Vec::new();
            for step in level {
                if step.inputs.len() < 2 || step.inputs.len() > self.fan_in {
                    return bad(format!("step with {} inputs", step.inputs.len()));
                }
                if step.output != next_id {
                    return bad("output ids out of sequence".into());
                }
                next_id += 1;
                for &input in &step.inputs {
                    if input >= total || !produced[input] || consumed[input] {
                        return bad(format!("run {input} unavailable"));
                    }
                    consumed[input] = true;
                }
                outputs.push(step.output);
            }
            for output in outputs {
                produced[output] = true;
            }
        }
        let last = self.levels.last().expect("non-empty");
        if last.len() != 1 {
            return bad("final level must have one step".into());
        }
        let unconsumed = (0..total).filter(|&id| !consumed[id]).count();
        if unconsumed != 1 || consumed[self.final_run()] {
            return bad("every run except the result must be consumed exactly once".into());
        }
        if self.levels.len() != min_levels(self.run_count, self.fan_in) {
            return bad("plan does not use the minimal number of levels".into());
        }
        Ok(())
    }
}

fn min_levels(run_count: usize, fan_in: usize) -> usize {
    let mut levels = 0;
    let mut capacity = 1usize;
    while capacity < run_count {
        capacity = capacity.saturating_mul(fan_in);
        levels += 1;
    }
    levels
}

/// Plans a merge with the minimal number of levels. The first level merges
/// just enough runs to leave a power of the fan-in, so every later level,
/// and in particular the final merge, runs at full fan-in.
pub fn plan_merge(run_count: usize, fan_in: usize) -> Result<MergePlan> {
    if fan_in < 2 {
        return Err(OvcError::Config(format!("fan-in must be at least 2, got {fan_in}")));
    }
    let mut plan = MergePlan {
        run_count,
        fan_in,
        levels: Vec::new(),
    };
    if run_count <= 1 {
        return Ok(plan);
    }
    let levels = min_levels(run_count, fan_in);
    let target = fan_in.pow(levels as u32 - 1);
    let mut next_id = run_count;
    let mut available: Vec<usize> = (0..run_count).collect();

    // First level: reduce to `target` runs.
    let excess = run_count - target;
    let full = excess / (fan_in - 1);
    let partial = excess % (fan_in - 1);
    let mut widths = vec![fan_in; full];
    if partial > 0 {
        widths.push(partial + 1);
    }
    let mut cursor = 0;
    let mut level = Vec::new();
    let mut outputs = Vec::new();
    for width in widths {
        level.push(MergeStep {
            inputs: available[cursor..cursor + width].to_vec(),
            output: next_id,
        });
        outputs.push(next_id);
        next_id += 1;
        cursor += width;
    }
    outputs.extend_from_slice(&available[cursor..]);
    plan.levels.push(level);
    available = outputs;

    while available.len() > 1 {
        let mut level = Vec::new();
        let mut outputs = Vec::new();
        for chunk in available.chunks(fan_in) {
            level.push(MergeStep {
                inputs: chunk.to_vec(),
                output: next_id,
            });
            outputs.push(next_id);
            next_id += 1;
        }
        plan.levels.push(level);
        available = outputs;
    }
    Ok(plan)
}

fn fetch<I>(input: &mut I, index: usize, last: &mut Option<Vec<u64>>, read: &mut u64) -> Result<Option<CodedRow>>
where
    I: Iterator<Item = Result<CodedRow>>,
{
    let Some(next) = input.next().transpose()? else {
        return Ok(None);
    };
    if cfg!(debug_assertions) {
        if let Some(prev) = last {
            if prev.as_slice() > next.row.key.as_slice() {
                return Err(OvcError::OutOfOrder {
                    input: index,
                    row: *read,
                });
            }
        }
        *last = Some(next.row.key.clone());
    }
    *read += 1;
    Ok(Some(next))
}

/// Merges sorted, coded inputs.
///
/// Every output row carries the code it held on arrival at the root, which is
/// its code relative to the previous output row. After a winner from input
/// `r` leaves, `r`'s following rows that are coded as duplicates skip the
/// tree entirely; they are counted in `bypassed` and handed to `dedup` as
/// duplicates.
pub fn merge_runs<I, S>(inputs: Vec<I>, dedup: DedupMode, counters: &mut Counters, sink: &mut S) -> Result<()>
where
    I: Iterator<Item = Result<CodedRow>>,
    S: RowSink + ?Sized,
{
    let mut inputs = inputs;
    let fan_in = inputs.len();
    if fan_in == 0 {
        return Ok(());
    }
    let mut last: Vec<Option<Vec<u64>>> = vec![None; fan_in];
    let mut read = vec![0u64; fan_in];
    let mut tree: LoserTree<Row> = LoserTree::new(fan_in)?;
    for leaf in 0..fan_in {
        let push = match fetch(&mut inputs[leaf], leaf, &mut last[leaf], &mut read[leaf])? {
            Some(CodedRow { row, ovc }) => Push::Current {
                item: row,
                ovc,
                rank: leaf as u64,
            },
            None => Push::End,
        };
        tree.pop_push(leaf, push, counters)?;
    }

    let mut out = Dedup::new(dedup);
    while let Head::Row { leaf, .. } = tree.head() {
        let winner = tree.pop().expect("row at head");
        out.push(winner.item, winner.ovc, sink)?;
        let push = loop {
            match fetch(&mut inputs[leaf], leaf, &mut last[leaf], &mut read[leaf])? {
                Some(next) if next.ovc.is_duplicate() => {
                    counters.bypassed += 1;
                    out.push(next.row, Ovc::DUPLICATE, sink)?;
                }
                Some(CodedRow { row, ovc }) => {
                    break Push::Current {
                        item: row,
                        ovc,
                        rank: leaf as u64,
                    }
                }
                None => break Push::End,
            }
        };
        tree.push(leaf, push, counters)?;
    }
    out.finish(sink)
}

/// Binary heap ordered by full key comparisons, using the pop and push
/// procedures of common standard-library priority queues.
struct Heap {
    items: Vec<(Row, usize)>,
}

impl Heap {
    /// True when `a` sorts after `b` (so `b` is closer to the top).
    fn after(a: &(Row, usize), b: &(Row, usize), counters: &mut Counters) -> bool {
        counters.row_comparisons += 1;
        match full_compare(&a.0.key, &b.0.key, 0, counters).0 {
            std::cmp::Ordering::Equal => a.1 > b.1,
            ord => ord == std::cmp::Ordering::Greater,
        }
    }

    fn push(&mut self, item: (Row, usize), counters: &mut Counters) {
        self.items.push(item);
        let hole = self.items.len() - 1;
        self.sift_up(hole, 0, counters);
    }

    fn sift_up(&mut self, mut hole: usize, top: usize, counters: &mut Counters) {
        while hole > top {
            let parent = (hole - 1) / 2;
            if !Self::after(&self.items[parent], &self.items[hole], counters) {
                break;
            }
            self.items.swap(parent, hole);
            hole = parent;
        }
    }

    fn pop(&mut self, counters: &mut Counters) -> Option<(Row, usize)> {
        let last = self.items.len().checked_sub(1)?;
        self.items.swap(0, last);
        let top = self.items.pop();
        let len = self.items.len();
        if len > 1 {
            // Move the hole to a leaf along the smaller children, then sift
            // the displaced element back up.
            let mut hole = 0;
            let mut child = 0;
            while child < (len - 1) / 2 {
                child = 2 * (child + 1);
                if Self::after(&self.items[child], &self.items[child - 1], counters) {
                    child -= 1;
                }
                self.items.swap(hole, child);
                hole = child;
            }
            if len.is_multiple_of(2) && child == (len - 2) / 2 {
                child = 2 * (child + 1);
                self.items.swap(hole, child - 1);
                hole = child - 1;
            }
            self.sift_up(hole, 0, counters);
        }
        top
    }
}

/// Merges with a conventional binary heap and full key comparisons.
///
/// Output codes are derived by comparing each output row with its
/// predecessor; those comparisons add column comparisons only. With
/// `bypass`, each input row is first compared in full with the previous row
/// of its input and duplicates skip the heap.
pub fn merge_runs_heap_baseline<I, S>(
    inputs: Vec<I>,
    dedup: DedupMode,
    bypass: bool,
    counters: &mut Counters,
    sink: &mut S,
) -> Result<()>
where
    I: Iterator<Item = Result<CodedRow>>,
    S: RowSink + ?Sized,
{
    let mut inputs = inputs;
    let fan_in = inputs.len();
    let mut last: Vec<Option<Vec<u64>>> = vec![None; fan_in];
    let mut read = vec![0u64; fan_in];
    let mut heap = Heap {
        items: Vec::with_capacity(fan_in),
    };
    for i in 0..fan_in {
        if let Some(first) = fetch(&mut inputs[i], i, &mut last[i], &mut read[i])? {
            heap.push((first.row, i), counters);
        }
    }
    let mut out = Dedup::new(dedup);
    let mut previous: Option<Vec<u64>> = None;
    let mut emit =
        |row: Row, known_duplicate: bool, previous: &mut Option<Vec<u64>>, counters: &mut Counters, out: &mut Dedup| {
            let ovc = match previous {
                _ if known_duplicate => Ovc::DUPLICATE,
                None => Ovc::initial(&row.key),
                Some(prev) => {
                    let (_, diff) = full_compare(prev, &row.key, 0, counters);
                    match row.key.get(diff) {
                        Some(&code) => Ovc::encode(diff, code, row.key.len()).expect("valid offset"),
                        None => Ovc::DUPLICATE,
                    }
                }
            };
            if !known_duplicate {
                *previous = Some(row.key.clone());
            }
            out.push(row, ovc, sink)
        };
    while let Some((row, i)) = heap.pop(counters) {
        let key = row.key.clone();
        emit(row, false, &mut previous, counters, &mut out)?;
        while let Some(next) = fetch(&mut inputs[i], i, &mut last[i], &mut read[i])? {
            if bypass {
                counters.row_comparisons += 1;
                if full_compare(&key, &next.row.key, 0, counters).0 == std::cmp::Ordering::Equal {
                    counters.bypassed += 1;
                    emit(next.row, true, &mut previous, counters, &mut out)?;
                    continue;
                }
            }
            heap.push((next.row, i), counters);
            break;
        }
    }
    out.finish(sink)
}

/// Options for [`external_sort`].
#[derive(Debug, Clone)]
pub struct SortOptions {
    pub memory_capacity: usize,
    pub fan_in: usize,
    pub run_gen: RunGenMode,
    pub dedup: DedupMode,
    pub format: RunFormat,
    /// Parent of the job directory; the system default when `None`.
    pub temp_dir: Option<PathBuf>,
    /// Worker threads for independent merge steps of one level.
    pub threads: usize,
}

impl SortOptions {
    pub fn new(memory_capacity: usize, fan_in: usize) -> Self {
        Self {
            memory_capacity,
            fan_in,
            run_gen: RunGenMode::LoadSort,
            dedup: DedupMode::Off,
            format: RunFormat::Row,
            temp_dir: None,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        RunGenConfig::new(self.memory_capacity, self.run_gen).validate()?;
        if self.fan_in < 2 {
            return Err(OvcError::Config(format!(
                "fan-in must be at least 2, got {}",
                self.fan_in
            )));
        }
        if self.threads == 0 {
            return Err(OvcError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// What an external sort did.
#[derive(Debug, Clone, Default)]
pub struct SortReport {
    /// True when the input fit in memory and no run was written.
    pub in_memory: bool,
    pub initial_runs: usize,
    pub plan: Option<MergePlan>,
    /// Every run written, initial runs at level 0.
    pub manifest: RunManifest,
    pub rows_in: u64,
    pub rows_out: u64,
}

struct CountingSink<'a, S: ?Sized> {
    inner: &'a mut S,
    rows: u64,
}

impl<S: RowSink + ?Sized> RowSink for CountingSink<'_, S> {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        self.rows += 1;
        self.inner.push(row, ovc)
    }
}

/// Sorts `input` into `sink`: run generation, intermediate merge levels and
/// a final merge, with runs in a temporary job directory that is removed on
/// return, including on error.
pub fn external_sort<I, S>(input: I, options: &SortOptions, sink: &mut S, counters: &mut Counters) -> Result<SortReport>
where
    I: IntoIterator<Item = Result<Row>>,
    S: RowSink + ?Sized,
{
    options.validate()?;
    let mut input = input.into_iter();
    let mut report = SortReport::default();
    let mut sink = CountingSink { inner: sink, rows: 0 };

    let mut head = Vec::new();
    let mut arity = None;
    for row in input.by_ref() {
        let row = row?;
        match arity {
            None => arity = Some(row.key.len()),
            Some(a) if a != row.key.len() => {
                return Err(OvcError::ArityMismatch {
                    expected: a,
                    got: row.key.len(),
                })
            }
            Some(_) => {}
        }
        head.push(row);
        if head.len() > options.memory_capacity {
            break;
        }
    }
    let Some(arity) = arity else {
        report.in_memory = true;
        return Ok(report);
    };

    if head.len() <= options.memory_capacity {
        report.in_memory = true;
        report.rows_in = head.len() as u64;
        let mut dedup = Dedup::new(options.dedup);
        for CodedRow { row, ovc } in sort_tree_of_losers(head, 0, counters) {
            dedup.push(row, ovc, &mut sink)?;
        }
        dedup.finish(&mut sink)?;
        report.rows_out = sink.rows;
        return Ok(report);
    }

    let job = match &options.temp_dir {
        Some(dir) => tempfile::Builder::new().prefix("ovcsort-").tempdir_in(dir)?,
        None => tempfile::Builder::new().prefix("ovcsort-").tempdir()?,
    };
    let mut rows_in = 0u64;
    let counted = head.into_iter().map(Ok).chain(input).inspect(|r| {
        if r.is_ok() {
            rows_in += 1;
        }
    });
    let config = RunGenConfig {
        memory_capacity: options.memory_capacity,
        mode: options.run_gen,
        dedup: options.dedup,
    };
    let mut run_sink = DirRunSink::new(job.path(), 0, options.format, arity);
    generate_runs(counted, &config, &mut run_sink, &mut report.manifest, counters)?;
    report.rows_in = rows_in;
    report.initial_runs = report.manifest.runs.len();

    let plan = plan_merge(report.initial_runs, options.fan_in)?;
    let mut runs: Vec<RunEntry> = report.manifest.runs.clone();
    if plan.levels.is_empty() {
        let reader = open_run(&runs[0])?;
        for row in reader {
            let CodedRow { row, ovc } = row?;
            sink.push(row, ovc)?;
        }
    }
    let level_count = plan.levels.len();
    for (l, level) in plan.levels.iter().enumerate() {
        let level_no = l as u32 + 1;
        if l + 1 == level_count {
            let step = &level[0];
            let inputs = step
                .inputs
                .iter()
                .map(|&id| open_run(&runs[id]))
                .collect::<Result<Vec<_>>>()?;
            merge_runs(inputs, options.dedup, counters, &mut sink)?;
            break;
        }
        let paths: Vec<PathBuf> = (0..level.len())
            .map(|i| {
                job.path()
                    .join(format!("{}-{}.{}", level_no, i, options.format.extension()))
            })
            .collect();
        let results = run_level(level, &runs, &paths, options, arity, level_no)?;
        for (entry, step_counters) in results {
            *counters += step_counters;
            report.manifest.runs.push(entry.clone());
            runs.push(entry);
        }
    }
    std::fs::write(job.path().join("manifest.tsv"), report.manifest.to_lines())?;
    report.rows_out = sink.rows;
    report.plan = Some(plan);
    job.close()?;
    Ok(report)
}

fn open_run(entry: &RunEntry) -> Result<RunReader> {
    let path = entry
        .path
        .as_ref()
        .ok_or_else(|| OvcError::Config("run has no file".into()))?;
    RunReader::open(path, entry.format)
}

fn merge_step(
    step: &MergeStep,
    runs: &[RunEntry],
    path: &Path,
    options: &SortOptions,
    arity: usize,
    level: u32,
) -> Result<(RunEntry, Counters)> {
    let mut counters = Counters::default();
    let inputs = step
        .inputs
        .iter()
        .map(|&id| open_run(&runs[id]))
        .collect::<Result<Vec<_>>>()?;
    let mut writer = RunWriter::create(path, options.format, arity)?;
    merge_runs(inputs, options.dedup, &mut counters, &mut writer)?;
    let stats = writer.finish()?;
    Ok((
        RunEntry {
            path: Some(path.to_path_buf()),
            rows: stats.rows,
            format: options.format,
            level,
        },
        counters,
    ))
}

fn run_level(
    level: &[MergeStep],
    runs: &[RunEntry],
    paths: &[PathBuf],
    options: &SortOptions,
    arity: usize,
    level_no: u32,
) -> Result<Vec<(RunEntry, Counters)>> {
    if options.threads <= 1 || level.len() == 1 {
        return level
            .iter()
            .zip(paths)
            .map(|(step, path)| merge_step(step, runs, path, options, arity, level_no))
            .collect();
    }
    let chunk = level.len().div_ceil(options.threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = level
            .chunks(chunk)
            .zip(paths.chunks(chunk))
            .map(|(steps, paths)| {
                scope.spawn(move || {
                    steps
                        .iter()
                        .zip(paths)
                        .map(|(step, path)| merge_step(step, runs, path, options, arity, level_no))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(level.len());
        for handle in handles {
            out.extend(handle.join().expect("merge worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keycodec::ovc_relative_to;
    use crate::stream::Aggregate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn coded_run(keys: Vec<Vec<u64>>) -> Vec<CodedRow> {
        let mut c = Counters::default();
        let mut out: Vec<CodedRow> = Vec::new();
        for key in keys {
            let ovc = match out.last() {
                None => Ovc::initial(&key),
                Some(prev) => ovc_relative_to(&prev.row.key, &key, &mut c).1,
            };
            out.push(CodedRow::new(Row::new(key), ovc));
        }
        out
    }

    fn as_inputs(runs: &[Vec<CodedRow>]) -> Vec<std::vec::IntoIter<Result<CodedRow>>> {
        runs.iter()
            .map(|r| r.iter().cloned().map(Ok).collect::<Vec<_>>().into_iter())
            .collect()
    }

    fn random_runs(seed: u64, fan_in: usize, rows: usize, arity: usize, values: u64) -> Vec<Vec<CodedRow>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..fan_in)
            .map(|_| {
                let mut keys: Vec<Vec<u64>> = (0..rows)
                    .map(|_| (0..arity).map(|_| rng.gen_range(0..values)).collect())
                    .collect();
                keys.sort();
                coded_run(keys)
            })
            .collect()
    }

    fn assert_output_coded(out: &[CodedRow]) {
        if let Some(first) = out.first() {
            assert_eq!(first.ovc, Ovc::initial(&first.row.key));
        }
        for w in out.windows(2) {
            let mut c = Counters::default();
            let (ord, ovc) = ovc_relative_to(&w[0].row.key, &w[1].row.key, &mut c);
            assert_ne!(ord, std::cmp::Ordering::Greater);
            assert_eq!(w[1].ovc, ovc);
        }
    }

    #[test]
    fn plan_for_eighteen_runs() {
        let plan = plan_merge(18, 6).unwrap();
        plan.validate().unwrap();
        assert_eq!(plan.levels.len(), 2);
        let widths: Vec<usize> = plan.levels[0].iter().map(|s| s.inputs.len()).collect();
        assert_eq!(widths, vec![6, 6, 3]);
        assert_eq!(plan.levels[1].len(), 1);
        assert_eq!(plan.levels[1][0].inputs.len(), 6);
        assert!(plan_merge(1, 6).unwrap().levels.is_empty());
        assert!(plan_merge(5, 1).is_err());
    }

    #[test]
    fn plans_validate_exhaustively() {
        for fan_in in 2..=8 {
            for runs in 1..=64 {
                let plan = plan_merge(runs, fan_in).unwrap();
                plan.validate().unwrap_or_else(|e| panic!("({runs}, {fan_in}): {e}"));
                if let Some(last) = plan.levels.last() {
                    let full = runs >= fan_in;
                    assert!(!full || last[0].inputs.len() == fan_in, "({runs}, {fan_in})");
                }
            }
        }
    }

    #[test]
    fn validator_rejects_broken_plans() {
        let mut plan = plan_merge(10, 3).unwrap();
        plan.levels[0][0].inputs.push(0);
        assert!(plan.validate().is_err());
        let mut plan = plan_merge(10, 3).unwrap();
        plan.levels[0][0].inputs.pop();
        assert!(plan.validate().is_err());
    }

    #[test]
    fn single_input_is_copied_without_comparisons() {
        let runs = random_runs(1, 1, 50, 3, 4);
        let mut out = Vec::new();
        let mut c = Counters::default();
        merge_runs(as_inputs(&runs), DedupMode::Off, &mut c, &mut out).unwrap();
        assert_eq!(out, runs[0]);
        assert_eq!(c.row_comparisons, 0);
        assert_eq!(c.column_comparisons, 0);
    }

    #[test]
    fn merge_matches_oracle_and_heap() {
        for (seed, values) in [(2, 1 << 40), (3, 3), (4, 1)] {
            let runs = random_runs(seed, 7, 120, 4, values);
            let mut expect: Vec<Vec<u64>> = runs.iter().flatten().map(|r| r.row.key.clone()).collect();
            expect.sort();
            let mut out = Vec::new();
            let mut c = Counters::default();
            merge_runs(as_inputs(&runs), DedupMode::Off, &mut c, &mut out).unwrap();
            assert_eq!(out.iter().map(|r| r.row.key.clone()).collect::<Vec<_>>(), expect);
            assert_output_coded(&out);
            assert!(c.column_comparisons <= 4 * expect.len() as u64);

            let mut heap_out = Vec::new();
            let mut hc = Counters::default();
            merge_runs_heap_baseline(as_inputs(&runs), DedupMode::Off, false, &mut hc, &mut heap_out).unwrap();
            assert_eq!(heap_out, out);
        }
    }

    #[test]
    fn bypass_routes_duplicates_around_the_tree() {
        let mut runs = Vec::new();
        for r in 0..4u64 {
            let keys: Vec<Vec<u64>> = (0..50u64)
                .flat_map(|k| std::iter::repeat_n(vec![k * 4 + r % 2, 1], 5))
                .collect();
            runs.push(coded_run(keys));
        }
        let total: usize = runs.iter().map(Vec::len).sum();
        let mut out = Vec::new();
        let mut c = Counters::default();
        merge_runs(as_inputs(&runs), DedupMode::Off, &mut c, &mut out).unwrap();
        assert_eq!(out.len(), total);
        assert_eq!(c.bypassed, 4 * 50 * 4);
        assert_output_coded(&out);

        let mut out = Vec::new();
        let mut c = Counters::default();
        merge_runs(as_inputs(&runs), DedupMode::Drop, &mut c, &mut out).unwrap();
        let mut distinct: Vec<Vec<u64>> = runs.iter().flatten().map(|r| r.row.key.clone()).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(out.iter().map(|r| r.row.key.clone()).collect::<Vec<_>>(), distinct);

        let mut out = Vec::new();
        let mut c = Counters::default();
        merge_runs(
            as_inputs(&runs),
            DedupMode::Aggregate(Aggregate::Count),
            &mut c,
            &mut out,
        )
        .unwrap();
        let mut oracle: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
        for r in runs.iter().flatten() {
            *oracle.entry(r.row.key.clone()).or_default() += 1;
        }
        let got: BTreeMap<Vec<u64>, u64> = out
            .iter()
            .map(|r| {
                (
                    r.row.key.clone(),
                    u64::from_le_bytes(r.row.payload[..].try_into().unwrap()),
                )
            })
            .collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn out_of_order_input_is_detected() {
        let bad = vec![
            CodedRow::new(Row::new(vec![5]), Ovc::initial(&[5])),
            CodedRow::new(Row::new(vec![3]), Ovc::initial(&[3])),
        ];
        let good = coded_run(vec![vec![1], vec![4]]);
        let mut out = Vec::new();
        let mut c = Counters::default();
        let err = merge_runs(as_inputs(&[good, bad]), DedupMode::Off, &mut c, &mut out).unwrap_err();
        assert!(matches!(err, OvcError::OutOfOrder { input: 1, .. }));
    }

    fn random_rows(seed: u64, n: usize, arity: usize, values: u64) -> Vec<Row> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Row::new((0..arity).map(|_| rng.gen_range(0..values)).collect()))
            .collect()
    }

    #[test]
    fn external_sort_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let mut options = SortOptions::new(100, 4);
        options.temp_dir = Some(dir.path().to_path_buf());
        let rows = random_rows(5, 100, 3, 10);
        let mut expect: Vec<Vec<u64>> = rows.iter().map(|r| r.key.clone()).collect();
        expect.sort();
        let mut out = Vec::new();
        let mut c = Counters::default();
        let report = external_sort(rows.into_iter().map(Ok), &options, &mut out, &mut c).unwrap();
        assert!(report.in_memory);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        assert_eq!(out.iter().map(|r| r.row.key.clone()).collect::<Vec<_>>(), expect);
        assert_output_coded(&out);
    }

    #[test]
    fn external_sort_eighteen_runs_two_levels() {
        let dir = tempfile::tempdir().unwrap();
        for format in [RunFormat::Row, RunFormat::Column] {
            let mut options = SortOptions::new(40, 6);
            options.temp_dir = Some(dir.path().to_path_buf());
            options.format = format;
            let rows = random_rows(6, 18 * 40, 3, 50);
            let mut expect: Vec<Vec<u64>> = rows.iter().map(|r| r.key.clone()).collect();
            expect.sort();
            let mut out = Vec::new();
            let mut c = Counters::default();
            let report = external_sort(rows.into_iter().map(Ok), &options, &mut out, &mut c).unwrap();
            assert_eq!(report.initial_runs, 18);
            assert_eq!(report.manifest.level(0).count(), 18);
            assert_eq!(report.manifest.level(1).count(), 3);
            assert_eq!(report.plan.as_ref().unwrap().levels.len(), 2);
            assert!(report
                .manifest
                .runs
                .iter()
                .all(|r| r.path.as_ref().unwrap().extension().unwrap() == format.extension()));
            assert_eq!(out.iter().map(|r| r.row.key.clone()).collect::<Vec<_>>(), expect);
            assert_output_coded(&out);
            assert!(c.column_comparisons <= 3 * expect.len() as u64);
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn external_sort_dedup_and_threads() {
        let dir = tempfile::tempdir().unwrap();
        let mut options = SortOptions::new(30, 3);
        options.temp_dir = Some(dir.path().to_path_buf());
        options.dedup = DedupMode::Drop;
        options.threads = 3;
        options.run_gen = RunGenMode::Replacement;
        let rows = random_rows(7, 3000, 2, 20);
        let mut expect: Vec<Vec<u64>> = rows.iter().map(|r| r.key.clone()).collect();
        expect.sort();
        expect.dedup();
        let mut out = Vec::new();
        let mut c = Counters::default();
        let report = external_sort(rows.into_iter().map(Ok), &options, &mut out, &mut c).unwrap();
        assert_eq!(out.iter().map(|r| r.row.key.clone()).collect::<Vec<_>>(), expect);
        assert!(report.manifest.runs.iter().all(|r| r.rows <= expect.len() as u64));
        assert_eq!(report.rows_in, 3000);
        assert_eq!(report.rows_out, expect.len() as u64);
    }

    #[test]
    fn external_sort_cleans_up_on_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut options = SortOptions::new(10, 3);
        options.temp_dir = Some(dir.path().to_path_buf());
        let mut rows: Vec<Result<Row>> = random_rows(8, 100, 2, 5).into_iter().map(Ok).collect();
        rows.push(Err(OvcError::Format("broken input".into())));
        let mut out = Vec::new();
        let mut c = Counters::default();
        assert!(external_sort(rows, &options, &mut out, &mut c).is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
