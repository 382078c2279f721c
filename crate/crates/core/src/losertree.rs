//! Tree-of-losers priority queue over [`CodeWord`]s.
//!
//! Slot 0 of `nodes` names the overall winner; slots `1..capacity` name the
//! loser of the comparison at each internal node. Leaves are implicit: leaf
//! `l` sits at position `capacity + l`, and the parent of position `p` is
//! `p / 2`. Every replacement is a single leaf-to-root pass with exactly
//! `log2(capacity)` node comparisons.
//!
//! The tree starts with every real leaf holding a low fence and every phantom
//! leaf (beyond the requested fan-in) holding a high fence. Low fences are
//! popped in leaf order, so priming is just one `pop_push` per leaf.

use crate::error::{OvcError, Result};
use crate::keycodec::{compare_coded, CodeWord, Coded, Counters, Keyed, Ovc};

/// What enters a leaf after its winner leaves.
#[derive(Debug)]
pub enum Push<R> {
    /// A row of the run currently being produced, coded relative to the
    /// departing winner (or to the low fence while priming).
    Current { item: R, ovc: Ovc, rank: u64 },
    /// A row deferred to the next run; coded relative to nothing earlier than
    /// itself, so its offset is normally zero.
    Next { item: R, ovc: Ovc, rank: u64 },
    /// The leaf's input is exhausted.
    End,
}

/// A departing winner and the code it held at the root.
#[derive(Debug)]
pub struct Popped<R> {
    pub item: R,
    /// Code relative to the previous winner. Its offset is the prefix
    /// truncation this row gets in the output.
    pub ovc: Ovc,
    pub rank: u64,
    pub leaf: usize,
    pub next_run: bool,
}

/// Current state of the root.
#[derive(Debug)]
pub enum Head<'a, R> {
    LowFence(usize),
    Row {
        leaf: usize,
        item: &'a R,
        ovc: Ovc,
        rank: u64,
        next_run: bool,
    },
    End,
}

pub struct LoserTree<R> {
    fan_in: usize,
    capacity: usize,
    nodes: Vec<usize>,
    words: Vec<CodeWord>,
    ranks: Vec<u64>,
    items: Vec<Option<R>>,
    awaiting: Option<usize>,
    node_comparisons: u64,
}

impl<R: Keyed> LoserTree<R> {
    pub fn new(fan_in: usize) -> Result<Self> {
        if fan_in == 0 {
            return Err(OvcError::ZeroFanIn);
        }
        let capacity = fan_in.next_power_of_two();
        let words: Vec<CodeWord> = (0..capacity)
            .map(|leaf| {
                if leaf < fan_in {
                    CodeWord::low_fence(leaf)
                } else {
                    CodeWord::high_fence(leaf)
                }
            })
            .collect();

        // Initial tournament over fence words only.
        let mut nodes = vec![0; capacity];
        let mut winners = vec![0usize; 2 * capacity];
        for leaf in 0..capacity {
            winners[capacity + leaf] = leaf;
        }
        for pos in (1..capacity).rev() {
            let (a, b) = (winners[2 * pos], winners[2 * pos + 1]);
            let (win, lose) = if words[a] < words[b] { (a, b) } else { (b, a) };
            nodes[pos] = lose;
            winners[pos] = win;
        }
        nodes[0] = if capacity == 1 { 0 } else { winners[1] };

        Ok(Self {
            fan_in,
            capacity,
            nodes,
            words,
            ranks: vec![0; capacity],
            items: (0..capacity).map(|_| None).collect(),
            awaiting: None,
            node_comparisons: 0,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Node comparisons so far, fence comparisons included.
    pub fn node_comparisons(&self) -> u64 {
        self.node_comparisons
    }

    pub fn levels(&self) -> u32 {
        self.capacity.trailing_zeros()
    }

    pub fn head(&self) -> Head<'_, R> {
        let leaf = self.nodes[0];
        let cap = self.capacity as u64;
        let word = self.words[leaf];
        if word.0 < cap {
            Head::LowFence(leaf)
        } else if word.is_row(cap) {
            Head::Row {
                leaf,
                item: self.items[leaf].as_ref().expect("row word without item"),
                ovc: word.row_ovc(cap),
                rank: self.ranks[leaf],
                next_run: word.is_next(cap),
            }
        } else {
            Head::End
        }
    }

    /// The current winner, if it is a row. No comparisons, no mutation.
    pub fn peek(&self) -> Option<(&R, Ovc)> {
        match self.head() {
            Head::Row { item, ovc, .. } => Some((item, ovc)),
            _ => None,
        }
    }

    /// Removes the winning row without refilling its leaf. The leaf then
    /// awaits a [`push`](Self::push). Returns `None` at a fence.
    pub fn pop(&mut self) -> Option<Popped<R>> {
        if self.awaiting.is_some() {
            return None;
        }
        let leaf = self.nodes[0];
        let cap = self.capacity as u64;
        let word = self.words[leaf];
        if word.0 < cap {
            self.awaiting = Some(leaf);
            return None;
        }
        if !word.is_row(cap) {
            return None;
        }
        self.awaiting = Some(leaf);
        Some(Popped {
            item: self.items[leaf].take().expect("row word without item"),
            ovc: word.row_ovc(cap),
            rank: self.ranks[leaf],
            leaf,
            next_run: word.is_next(cap),
        })
    }

    /// Refills the leaf vacated by [`pop`](Self::pop) and runs one
    /// leaf-to-root pass.
    pub fn push(&mut self, leaf: usize, push: Push<R>, counters: &mut Counters) -> Result<()> {
        if self.awaiting != Some(leaf) {
            return Err(OvcError::NotAwaiting { leaf });
        }
        self.awaiting = None;
        let cap = self.capacity as u64;
        match push {
            Push::Current { item, ovc, rank } => {
                self.words[leaf] = CodeWord::current(ovc, cap);
                self.items[leaf] = Some(item);
                self.ranks[leaf] = rank;
            }
            Push::Next { item, ovc, rank } => {
                self.words[leaf] = CodeWord::next(ovc);
                self.items[leaf] = Some(item);
                self.ranks[leaf] = rank;
            }
            Push::End => {
                self.words[leaf] = CodeWord::high_fence(leaf);
                self.items[leaf] = None;
            }
        }
        self.pass(leaf, counters);
        Ok(())
    }

    /// Pops the winner at `leaf` (a row or a low fence) and pushes the
    /// replacement. Returns the departing row, if any.
    pub fn pop_push(&mut self, leaf: usize, push: Push<R>, counters: &mut Counters) -> Result<Option<Popped<R>>> {
        let popped = if self.awaiting.is_none() {
            if self.nodes[0] != leaf || matches!(self.head(), Head::End) {
                return Err(OvcError::NotAwaiting { leaf });
            }
            self.pop()
        } else {
            None
        };
        self.push(leaf, push, counters)?;
        Ok(popped)
    }

    /// Moves every next-run word into the current-run region. Call when the
    /// winner is the first row of the next run.
    pub fn start_next_run(&mut self) {
        let cap = self.capacity as u64;
        for word in &mut self.words {
            *word = word.rebased(cap);
        }
    }

    fn pass(&mut self, leaf: usize, counters: &mut Counters) {
        let mut winner = leaf;
        let mut pos = (self.capacity + leaf) >> 1;
        while pos > 0 {
            let stored = self.nodes[pos];
            if !self.contest(winner, stored, counters) {
                self.nodes[pos] = winner;
                winner = stored;
            }
            pos >>= 1;
        }
        self.nodes[0] = winner;
    }

    /// True when `challenger` beats `stored`; recodes the loser.
    #[inline]
    fn contest(&mut self, challenger: usize, stored: usize, counters: &mut Counters) -> bool {
        self.node_comparisons += 1;
        let cap = self.capacity as u64;
        let (wc, ws) = (self.words[challenger], self.words[stored]);
        if !(wc.is_row(cap) && ws.is_row(cap)) {
            return wc < ws;
        }
        if wc.is_current(cap) != ws.is_current(cap) {
            counters.row_comparisons += 1;
            counters.ovc_only_decisions += 1;
            return wc < ws;
        }
        let (Some(c_item), Some(s_item)) = (&self.items[challenger], &self.items[stored]) else {
            unreachable!("row word without item");
        };
        let outcome = compare_coded(
            Coded {
                key: c_item.key(),
                ovc: wc.row_ovc(cap),
                rank: self.ranks[challenger],
            },
            Coded {
                key: s_item.key(),
                ovc: ws.row_ovc(cap),
                rank: self.ranks[stored],
            },
            counters,
        );
        let loser = if outcome.first_wins { stored } else { challenger };
        self.words[loser] = self.words[loser].with_ovc(outcome.loser_ovc, cap);
        outcome.first_wins
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keycodec::{ovc_relative_to, Row};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Merges coded runs through a tree, returning rows with root codes.
    fn drain(runs: Vec<Vec<Vec<u64>>>, counters: &mut Counters) -> (Vec<(Vec<u64>, Ovc)>, LoserTree<Row>) {
        let arity = runs.iter().flatten().next().map_or(1, |r| r.len());
        let mut iters: Vec<_> = runs
            .into_iter()
            .map(|run| {
                let mut prev: Option<Vec<u64>> = None;
                let mut scratch = Counters::default();
                run.into_iter()
                    .map(|key| {
                        let ovc = match &prev {
                            None => Ovc::initial(&key),
                            Some(p) => ovc_relative_to(p, &key, &mut scratch).1,
                        };
                        prev = Some(key.clone());
                        (key, ovc)
                    })
                    .collect::<Vec<_>>()
                    .into_iter()
            })
            .collect();
        let mut tree = LoserTree::new(iters.len()).unwrap();
        let next = |iters: &mut Vec<std::vec::IntoIter<(Vec<u64>, Ovc)>>, leaf: usize| match iters[leaf].next() {
            Some((key, ovc)) => Push::Current {
                item: Row::new(key),
                ovc,
                rank: leaf as u64,
            },
            None => Push::End,
        };
        for leaf in 0..iters.len() {
            let push = next(&mut iters, leaf);
            assert!(tree.pop_push(leaf, push, counters).unwrap().is_none());
        }
        let mut out = Vec::new();
        while let Head::Row { leaf, .. } = tree.head() {
            let push = next(&mut iters, leaf);
            let popped = tree.pop_push(leaf, push, counters).unwrap().unwrap();
            out.push((popped.item.key, popped.ovc));
        }
        let _ = arity;
        (out, tree)
    }

    #[test]
    fn capacity_rounds_up() {
        let t = LoserTree::<Row>::new(8).unwrap();
        assert_eq!(t.capacity(), 8);
        assert_eq!(t.levels(), 3);
        let t = LoserTree::<Row>::new(6).unwrap();
        assert_eq!(t.capacity(), 8);
        assert!(LoserTree::<Row>::new(0).is_err());
    }

    #[test]
    fn degenerate_single_leaf() {
        let mut c = Counters::default();
        let (out, tree) = drain(vec![vec![vec![3], vec![5], vec![9]]], &mut c);
        assert_eq!(out.iter().map(|(k, _)| k[0]).collect::<Vec<_>>(), vec![3, 5, 9]);
        assert_eq!(tree.node_comparisons(), 0);
        assert_eq!(c.row_comparisons, 0);
        assert!(matches!(tree.head(), Head::End));
    }

    #[test]
    fn eight_single_rows_in_reverse() {
        let mut tree = LoserTree::new(8).unwrap();
        let mut c = Counters::default();
        for leaf in 0..8 {
            let key = vec![8 - leaf as u64];
            let ovc = Ovc::initial(&key);
            tree.pop_push(
                leaf,
                Push::Current {
                    item: key,
                    ovc,
                    rank: leaf as u64,
                },
                &mut c,
            )
            .unwrap();
        }
        let mut winners = Vec::new();
        while let Head::Row { leaf, .. } = tree.head() {
            let before = tree.node_comparisons();
            let popped = tree.pop_push(leaf, Push::End, &mut c).unwrap().unwrap();
            assert_eq!(tree.node_comparisons() - before, 3);
            winners.push(popped.item[0]);
        }
        assert_eq!(winners, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn all_fences_yield_end() {
        let mut tree = LoserTree::<Row>::new(4).unwrap();
        let mut c = Counters::default();
        for leaf in 0..4 {
            tree.pop_push(leaf, Push::End, &mut c).unwrap();
        }
        assert!(matches!(tree.head(), Head::End));
        assert!(tree.peek().is_none());
        assert!(tree.pop().is_none());
        assert!(tree.pop_push(0, Push::End, &mut c).is_err());
        assert_eq!(c.row_comparisons, 0);
    }

    #[test]
    fn push_to_wrong_leaf_is_rejected() {
        let mut tree = LoserTree::<Row>::new(4).unwrap();
        let mut c = Counters::default();
        assert!(matches!(
            tree.pop_push(2, Push::End, &mut c),
            Err(OvcError::NotAwaiting { leaf: 2 })
        ));
        assert!(tree.pop().is_none());
        assert!(tree.push(1, Push::End, &mut c).is_err());
        tree.push(0, Push::End, &mut c).unwrap();
    }

    #[test]
    fn peek_is_stable() {
        let mut tree = LoserTree::new(3).unwrap();
        let mut c = Counters::default();
        for (leaf, v) in [3u64, 1, 2].into_iter().enumerate() {
            tree.pop_push(
                leaf,
                Push::Current {
                    item: vec![v],
                    ovc: Ovc::initial(&[v]),
                    rank: leaf as u64,
                },
                &mut c,
            )
            .unwrap();
        }
        let before = c;
        let nodes = tree.node_comparisons();
        assert_eq!(tree.peek().unwrap().0, &vec![1]);
        assert_eq!(tree.peek().unwrap().0, &vec![1]);
        assert_eq!(c, before);
        assert_eq!(tree.node_comparisons(), nodes);
    }

    #[test]
    fn phantom_leaves_never_win() {
        let runs = vec![
            vec![vec![1], vec![7]],
            vec![vec![2]],
            vec![],
            vec![vec![0], vec![9]],
            vec![vec![5]],
            vec![vec![3], vec![4]],
        ];
        let mut expect: Vec<u64> = runs.iter().flatten().map(|k| k[0]).collect();
        expect.sort();
        let mut c = Counters::default();
        let (out, _) = drain(runs, &mut c);
        assert_eq!(out.iter().map(|(k, _)| k[0]).collect::<Vec<_>>(), expect);
    }

    fn random_runs(rng: &mut ChaCha8Rng, fan_in: usize, rows: usize, arity: usize, values: u64) -> Vec<Vec<Vec<u64>>> {
        (0..fan_in)
            .map(|_| {
                let mut run: Vec<Vec<u64>> = (0..rows)
                    .map(|_| (0..arity).map(|_| rng.gen_range(0..values)).collect())
                    .collect();
                run.sort();
                run
            })
            .collect()
    }

    #[test]
    fn drains_sorted_with_prefix_offsets_and_peek_matches_pop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for fan_in in [1, 2, 3, 5, 8, 13] {
            for values in [2, 5, 1000] {
                let rows = rng.gen_range(0..40);
                let runs = random_runs(&mut rng, fan_in, rows, 4, values);
                let mut all: Vec<Vec<u64>> = runs.iter().flatten().cloned().collect();
                all.sort();
                let mut c = Counters::default();
                let (out, tree) = drain(runs, &mut c);
                let keys: Vec<Vec<u64>> = out.iter().map(|(k, _)| k.clone()).collect();
                assert_eq!(keys, all);
                for w in out.windows(2) {
                    let mut scratch = Counters::default();
                    let (_, expect) = ovc_relative_to(&w[0].0, &w[1].0, &mut scratch);
                    assert_eq!(w[1].1.offset(4), expect.offset(4));
                }
                let passes = (all.len() + fan_in) as u64;
                assert_eq!(tree.node_comparisons(), passes * tree.levels() as u64);
            }
        }
    }

    #[test]
    fn merge_comparisons_near_n_log_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for fan_in in [2usize, 4, 8, 16] {
            for values in [3u64, 1 << 40] {
                let n = 200;
                let runs = random_runs(&mut rng, fan_in, n, 3, values);
                let mut c = Counters::default();
                drain(runs, &mut c);
                let log_f = fan_in.trailing_zeros() as u64;
                let upper = fan_in as u64 * n as u64 * log_f;
                // Rows that outlive an exhausted run meet its high fence, which
                // costs no row comparison. With heavy duplication one run can
                // end long before the others.
                let lower = if values > 1000 {
                    upper - 2 * fan_in as u64 * log_f
                } else {
                    0
                };
                assert!(
                    (lower..=upper).contains(&c.row_comparisons),
                    "F={fan_in} count {} not in [{lower}, {upper}]",
                    c.row_comparisons
                );
            }
        }
    }

    #[test]
    fn next_run_region_is_deferred_until_rebased() {
        let mut tree = LoserTree::new(2).unwrap();
        let mut c = Counters::default();
        tree.pop_push(
            0,
            Push::Current {
                item: vec![5],
                ovc: Ovc::initial(&[5]),
                rank: 0,
            },
            &mut c,
        )
        .unwrap();
        tree.pop_push(
            1,
            Push::Next {
                item: vec![1],
                ovc: Ovc::initial(&[1]),
                rank: 1,
            },
            &mut c,
        )
        .unwrap();
        let Head::Row { item, next_run, .. } = tree.head() else {
            panic!()
        };
        assert_eq!(item, &vec![5]);
        assert!(!next_run);
        tree.pop_push(0, Push::End, &mut c).unwrap();
        let Head::Row { item, next_run, .. } = tree.head() else {
            panic!()
        };
        assert_eq!(item, &vec![1]);
        assert!(next_run);
        tree.start_next_run();
        let Head::Row { next_run, ovc, .. } = tree.head() else {
            panic!()
        };
        assert!(!next_run);
        assert_eq!(ovc, Ovc::initial(&[1]));
    }
}
