//! Deterministic synthetic datasets.
//!
//! Every generator is driven by a seeded `ChaCha8Rng`, so the same spec and
//! seed give the same rows on every platform. Key columns are small signed
//! integers passed through the order-preserving column encoding.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use ovcsort::keycodec::code_of;
use ovcsort::runformat::{RowRunReader, RowRunWriter};
use ovcsort::{Ovc, Row};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Order in which generated rows are emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Random,
    Sorted,
    Reverse,
    /// Column 0 holds pseudorandom 48-bit values.
    Hash,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Random => "random",
            Layout::Sorted => "sorted",
            Layout::Reverse => "reverse",
            Layout::Hash => "hash",
        })
    }
}

impl FromStr for Layout {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => Layout::Random,
            "sorted" => Layout::Sorted,
            "reverse" => Layout::Reverse,
            "hash" => Layout::Hash,
            other => bail!("unknown layout {other:?} (expected random, sorted, reverse or hash)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub rows: usize,
    pub arity: usize,
    /// Distinct values per non-constant column, drawn from `1..=values`.
    pub values: u64,
    /// Leading columns held constant.
    pub prefix: usize,
    /// Copies of each distinct key.
    pub copies: usize,
    pub layout: Layout,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            rows: 1000,
            arity: 4,
            values: 1 << 30,
            prefix: 0,
            copies: 1,
            layout: Layout::Random,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.arity >= 1 && self.arity <= ovcsort::keycodec::MAX_ARITY,
            "arity must be in 1..=64"
        );
        ensure!(
            self.prefix <= self.arity,
            "prefix {} exceeds arity {}",
            self.prefix,
            self.arity
        );
        ensure!(self.values >= 1, "values must be at least 1");
        ensure!(self.values <= i64::MAX as u64, "values must fit a signed 64-bit column");
        ensure!(self.copies >= 1, "copies must be at least 1");
        Ok(())
    }
}

/// Encodes a small signed column value as a key code.
pub fn col(v: i64) -> u64 {
    code_of(v)
}

/// Generates the rows described by `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let distinct = spec.rows.div_ceil(spec.copies);
    let mut rows = Vec::with_capacity(spec.rows);
    for _ in 0..distinct {
        let mut key = Vec::with_capacity(spec.arity);
        for c in 0..spec.arity {
            let v = if c < spec.prefix {
                1
            } else if c == 0 && spec.layout == Layout::Hash {
                rng.gen_range(0..1i64 << 48)
            } else {
                rng.gen_range(1..=spec.values as i64)
            };
            key.push(col(v));
        }
        for _ in 0..spec.copies {
            if rows.len() < spec.rows {
                rows.push(Row::new(key.clone()));
            }
        }
    }
    match spec.layout {
        Layout::Random | Layout::Hash => rows.shuffle(&mut rng),
        Layout::Sorted => rows.sort(),
        Layout::Reverse => rows.sort_by(|a, b| b.cmp(a)),
    }
    Ok(rows)
}

/// Writes an unsorted dataset file in the row run format.
pub fn write_dataset(path: &Path, arity: usize, rows: &[Row]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = RowRunWriter::new(BufWriter::new(file), arity, false)?;
    for row in rows {
        w.write(row, Ovc::initial(&row.key))?;
    }
    w.finish()?;
    Ok(())
}

/// Reads every row of a row-format file, sorted or not.
pub fn read_dataset(path: &Path) -> Result<(usize, Vec<Row>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = RowRunReader::new(BufReader::new(file))?;
    let arity = reader.arity();
    let mut rows = Vec::new();
    while let Some(r) = reader.next_row()? {
        rows.push(r.row);
    }
    Ok((arity, rows))
}
