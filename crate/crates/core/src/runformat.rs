//! On-disk runs: row format with prefix truncation and column format with
//! run-length encoding, plus comparison-free translation between the two.
//!
//! Both files start with the same 16-byte header:
//!
//! | bytes | field                         |
//! |-------|-------------------------------|
//! | 0..4  | magic `OVCR` or `OVCC`        |
//! | 4     | version (1)                   |
//! | 5     | flags (bit 0: rows are sorted)|
//! | 6..8  | arity, u16 LE                 |
//! | 8..16 | row count, u64 LE             |
//!
//! A row file then holds one record per row: prefix length (u8), the
//! remaining key codes (u64 LE each), payload length (u32 LE) and payload.
//! A column file holds, per key column, an entry count (u64 LE) and that many
//! `(code, extra_repeats)` pairs (u64 LE each), followed by every payload in
//! row order, each as length (u32 LE) and bytes.
//!
//! Only a sorted row file carries meaningful prefix lengths. Unsorted files
//! (such as generated datasets) store every record with prefix 0.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{OvcError, Result};
use crate::keycodec::{Ovc, Row, MAX_ARITY};
use crate::stream::{CodedRow, RowSink};

pub const ROW_MAGIC: [u8; 4] = *b"OVCR";
pub const COLUMN_MAGIC: [u8; 4] = *b"OVCC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
const FLAG_SORTED: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunFormat {
    #[default]
    Row,
    Column,
}

impl RunFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RunFormat::Row => "ovcr",
            RunFormat::Column => "ovcc",
        }
    }
}

impl fmt::Display for RunFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunFormat::Row => "row",
            RunFormat::Column => "column",
        })
    }
}

impl FromStr for RunFormat {
    type Err = OvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(RunFormat::Row),
            "column" => Ok(RunFormat::Column),
            other => Err(OvcError::Config(format!("unknown run format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub magic: [u8; 4],
    pub sorted: bool,
    pub arity: usize,
    pub rows: u64,
}

impl Header {
    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4] = VERSION;
        b[5] = if self.sorted { FLAG_SORTED } else { 0 };
        b[6..8].copy_from_slice(&(self.arity as u16).to_le_bytes());
        b[8..16].copy_from_slice(&self.rows.to_le_bytes());
        b
    }

    fn read(reader: &mut impl Read, magic: [u8; 4]) -> Result<Header> {
        let mut b = [0u8; HEADER_LEN];
        read_exact(reader, &mut b, "header")?;
        if b[0..4] != magic {
            return Err(OvcError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&b[0..4]),
                String::from_utf8_lossy(&magic)
            )));
        }
        if b[4] != VERSION {
            return Err(OvcError::Format(format!("unsupported version {}", b[4])));
        }
        let arity = u16::from_le_bytes([b[6], b[7]]) as usize;
        if arity == 0 || arity > MAX_ARITY {
            return Err(OvcError::Format(format!("arity {arity} out of range")));
        }
        Ok(Header {
            magic,
            sorted: b[5] & FLAG_SORTED != 0,
            arity,
            rows: u64::from_le_bytes(b[8..16].try_into().unwrap()),
        })
    }
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => OvcError::Format(format!("truncated {what}")),
        _ => OvcError::Io(e),
    })
}

fn read_u64(reader: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(reader, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32(reader: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(reader, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_payload(reader: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u32(reader, "payload length")? as usize;
    let mut payload = vec![0u8; len];
    read_exact(reader, &mut payload, "payload")?;
    Ok(payload)
}

fn expect_eof(reader: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match reader.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(OvcError::Format("trailing bytes after last record".into())),
    }
}

/// One prefix-truncated row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRunRecord {
    pub prefix_len: usize,
    pub suffix: Vec<u64>,
    pub payload: Vec<u8>,
}

impl RowRunRecord {
    /// Truncates `row` given the offset of its first difference from the
    /// predecessor.
    pub fn truncate(row: &Row, prefix_len: usize) -> Self {
        Self {
            prefix_len,
            suffix: row.key[prefix_len..].to_vec(),
            payload: row.payload.clone(),
        }
    }

    /// Rebuilds the row from its predecessor's key.
    pub fn restore(&self, previous: &[u64]) -> Row {
        let mut key = Vec::with_capacity(self.prefix_len + self.suffix.len());
        key.extend_from_slice(&previous[..self.prefix_len]);
        key.extend_from_slice(&self.suffix);
        Row::with_payload(key, self.payload.clone())
    }

    /// The code a merge reads off this record: offset = prefix length.
    pub fn ovc(&self, arity: usize) -> Ovc {
        match self.suffix.first() {
            Some(&code) => Ovc::encode(self.prefix_len, code, arity).expect("validated prefix"),
            None => Ovc::DUPLICATE,
        }
    }
}

/// Storage accounting for a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub rows: u64,
    pub stored_values: u64,
    pub truncated_values: u64,
}

impl RunStats {
    pub fn total_values(&self) -> u64 {
        self.stored_values + self.truncated_values
    }

    /// Total key values over stored key values.
    pub fn compression_ratio(&self) -> f64 {
        if self.stored_values == 0 {
            return 1.0;
        }
        self.total_values() as f64 / self.stored_values as f64
    }
}

/// Streaming writer for the row format.
///
/// The row count is patched into the header by [`finish`](Self::finish).
pub struct RowRunWriter<W: Write + Seek> {
    out: W,
    arity: usize,
    sorted: bool,
    stats: RunStats,
    #[cfg(debug_assertions)]
    previous: Option<Vec<u64>>,
}

impl<W: Write + Seek> RowRunWriter<W> {
    pub fn new(mut out: W, arity: usize, sorted: bool) -> Result<Self> {
        if arity == 0 || arity > MAX_ARITY {
            return Err(OvcError::InvalidArity(arity));
        }
        let header = Header {
            magic: ROW_MAGIC,
            sorted,
            arity,
            rows: 0,
        };
        out.write_all(&header.to_bytes())?;
        Ok(Self {
            out,
            arity,
            sorted,
            stats: RunStats::default(),
            #[cfg(debug_assertions)]
            previous: None,
        })
    }

    /// Writes `row`, truncating the prefix the code says it shares with the
    /// previous row. The first row and every row of an unsorted file are
    /// stored in full.
    pub fn write(&mut self, row: &Row, ovc: Ovc) -> Result<()> {
        if row.key.len() != self.arity {
            return Err(OvcError::ArityMismatch {
                expected: self.arity,
                got: row.key.len(),
            });
        }
        let prefix = if self.sorted && self.stats.rows > 0 {
            ovc.offset(self.arity)
        } else {
            0
        };
        #[cfg(debug_assertions)]
        if self.sorted {
            if let Some(prev) = &self.previous {
                if prev[..prefix] != row.key[..prefix] || prev.as_slice() > row.key.as_slice() {
                    return Err(OvcError::OutOfOrder {
                        input: 0,
                        row: self.stats.rows,
                    });
                }
            }
            self.previous = Some(row.key.clone());
        }
        self.write_record(prefix, &row.key[prefix..], &row.payload)
    }

    pub fn write_record_raw(&mut self, record: &RowRunRecord) -> Result<()> {
        if record.prefix_len + record.suffix.len() != self.arity {
            return Err(OvcError::Format("record width does not match arity".into()));
        }
        self.write_record(record.prefix_len, &record.suffix, &record.payload)
    }

    fn write_record(&mut self, prefix: usize, suffix: &[u64], payload: &[u8]) -> Result<()> {
        self.out.write_all(&[prefix as u8])?;
        for code in suffix {
            self.out.write_all(&code.to_le_bytes())?;
        }
        let len = u32::try_from(payload.len()).map_err(|_| OvcError::Format("payload over 4 GiB".into()))?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(payload)?;
        self.stats.rows += 1;
        self.stats.stored_values += suffix.len() as u64;
        self.stats.truncated_values += prefix as u64;
        Ok(())
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn finish(mut self) -> Result<(W, RunStats)> {
        let end = self.out.stream_position()?;
        self.out.seek(SeekFrom::Start(8))?;
        self.out.write_all(&self.stats.rows.to_le_bytes())?;
        self.out.seek(SeekFrom::Start(end))?;
        self.out.flush()?;
        Ok((self.out, self.stats))
    }
}

impl<W: Write + Seek> RowSink for RowRunWriter<W> {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        self.write(&row, ovc)
    }
}

/// Streaming reader for the row format. Iterates rows with the codes their
/// prefix lengths imply.
pub struct RowRunReader<R: Read> {
    input: R,
    header: Header,
    read: u64,
    previous: Vec<u64>,
    done: bool,
}

impl<R: Read> RowRunReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let header = Header::read(&mut input, ROW_MAGIC)?;
        Ok(Self {
            input,
            header,
            read: 0,
            previous: Vec::new(),
            done: false,
        })
    }

    pub fn header(&self) -> Header {
        self.header
    }

    pub fn arity(&self) -> usize {
        self.header.arity
    }

    pub fn next_record(&mut self) -> Result<Option<RowRunRecord>> {
        if self.read == self.header.rows {
            if !self.done {
                self.done = true;
                expect_eof(&mut self.input)?;
            }
            return Ok(None);
        }
        let mut p = [0u8; 1];
        read_exact(&mut self.input, &mut p, "record")?;
        let prefix_len = p[0] as usize;
        let arity = self.header.arity;
        if prefix_len > arity {
            return Err(OvcError::Format(format!(
                "prefix length {prefix_len} exceeds arity {arity}"
            )));
        }
        if prefix_len > 0 && self.read == 0 {
            return Err(OvcError::Format("first record has a truncated prefix".into()));
        }
        let mut suffix = Vec::with_capacity(arity - prefix_len);
        for _ in prefix_len..arity {
            suffix.push(read_u64(&mut self.input, "record")?);
        }
        let payload = read_payload(&mut self.input)?;
        self.read += 1;
        Ok(Some(RowRunRecord {
            prefix_len,
            suffix,
            payload,
        }))
    }

    pub fn next_row(&mut self) -> Result<Option<CodedRow>> {
        let Some(record) = self.next_record()? else {
            return Ok(None);
        };
        let row = record.restore(&self.previous);
        let ovc = if self.read == 1 {
            Ovc::initial(&row.key)
        } else {
            record.ovc(self.header.arity)
        };
        self.previous.clone_from(&row.key);
        Ok(Some(CodedRow { row, ovc }))
    }
}

impl<R: Read> Iterator for RowRunReader<R> {
    type Item = Result<CodedRow>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_row().transpose()
    }
}

/// Column-format run: per column, `(code, extra_repeats)` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnRun {
    pub arity: usize,
    pub rows: u64,
    pub columns: Vec<Vec<(u64, u64)>>,
    pub payloads: Vec<Vec<u8>>,
}

impl ColumnRun {
    pub fn stored_values(&self) -> u64 {
        self.columns.iter().map(|c| c.len() as u64).sum()
    }

    pub fn extra_repeats(&self) -> u64 {
        self.columns.iter().flatten().map(|&(_, extra)| extra).sum()
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            rows: self.rows,
            stored_values: self.stored_values(),
            truncated_values: self.extra_repeats(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.columns.len() != self.arity {
            return Err(OvcError::Format("column count does not match arity".into()));
        }
        for (j, column) in self.columns.iter().enumerate() {
            let len: u64 = column.iter().map(|&(_, extra)| extra + 1).sum();
            if len != self.rows {
                return Err(OvcError::Format(format!(
                    "column {j} covers {len} rows, expected {}",
                    self.rows
                )));
            }
        }
        if self.payloads.len() as u64 != self.rows {
            return Err(OvcError::Format("payload count does not match row count".into()));
        }
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        self.validate()?;
        let header = Header {
            magic: COLUMN_MAGIC,
            sorted: true,
            arity: self.arity,
            rows: self.rows,
        };
        out.write_all(&header.to_bytes())?;
        for column in &self.columns {
            out.write_all(&(column.len() as u64).to_le_bytes())?;
            for &(code, extra) in column {
                out.write_all(&code.to_le_bytes())?;
                out.write_all(&extra.to_le_bytes())?;
            }
        }
        for payload in &self.payloads {
            let len = u32::try_from(payload.len()).map_err(|_| OvcError::Format("payload over 4 GiB".into()))?;
            out.write_all(&len.to_le_bytes())?;
            out.write_all(payload)?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let header = Header::read(input, COLUMN_MAGIC)?;
        let mut columns = Vec::with_capacity(header.arity);
        for _ in 0..header.arity {
            let count = read_u64(input, "column")?;
            if count > header.rows {
                return Err(OvcError::Format("column has more entries than rows".into()));
            }
            let mut column = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let code = read_u64(input, "column entry")?;
                let extra = read_u64(input, "column entry")?;
                column.push((code, extra));
            }
            columns.push(column);
        }
        let mut payloads = Vec::with_capacity(header.rows.min(1 << 20) as usize);
        for _ in 0..header.rows {
            payloads.push(read_payload(input)?);
        }
        expect_eof(input)?;
        let run = ColumnRun {
            arity: header.arity,
            rows: header.rows,
            columns,
            payloads,
        };
        run.validate()?;
        Ok(run)
    }
}

/// Incremental row-to-column translation "with carry".
///
/// `pending[j]` counts rows whose deepest repeated column is `j`. The true
/// repeat count of column `j`'s open run is the sum of `pending[j..]`, which
/// is only materialized when that run closes; the closed total is then
/// carried into the column before it.
#[derive(Debug, Clone)]
pub struct ColumnRunBuilder {
    run: ColumnRun,
    open: Vec<u64>,
    pending: Vec<u64>,
}

impl ColumnRunBuilder {
    pub fn new(arity: usize) -> Result<Self> {
        if arity == 0 || arity > MAX_ARITY {
            return Err(OvcError::InvalidArity(arity));
        }
        Ok(Self {
            run: ColumnRun {
                arity,
                rows: 0,
                columns: vec![Vec::new(); arity],
                payloads: Vec::new(),
            },
            open: vec![0; arity],
            pending: vec![0; arity],
        })
    }

    pub fn push(&mut self, record: RowRunRecord) -> Result<()> {
        let arity = self.run.arity;
        let p = record.prefix_len;
        if p > arity || p + record.suffix.len() != arity {
            return Err(OvcError::Format("record width does not match arity".into()));
        }
        if self.run.rows == 0 && p != 0 {
            return Err(OvcError::Format("first record has a truncated prefix".into()));
        }
        if self.run.rows > 0 {
            let carry = self.close(p);
            if p > 0 {
                self.pending[p - 1] += carry + 1;
            }
        }
        self.open[p..].copy_from_slice(&record.suffix);
        self.run.payloads.push(record.payload);
        self.run.rows += 1;
        Ok(())
    }

    /// Closes the open runs of columns `from..arity`, deepest first, and
    /// returns the repeat count carried out of column `from`.
    fn close(&mut self, from: usize) -> u64 {
        let mut carry = 0;
        for j in (from..self.run.arity).rev() {
            carry += std::mem::take(&mut self.pending[j]);
            self.run.columns[j].push((self.open[j], carry));
        }
        carry
    }

    pub fn finish(mut self) -> ColumnRun {
        if self.run.rows > 0 {
            self.close(0);
        }
        self.run
    }
}

/// Translates prefix-truncated records into run-length-encoded columns
/// without comparing any column values.
pub fn row_to_column_with_carry(records: impl IntoIterator<Item = RowRunRecord>, arity: usize) -> Result<ColumnRun> {
    let mut builder = ColumnRunBuilder::new(arity)?;
    for record in records {
        builder.push(record)?;
    }
    Ok(builder.finish())
}

/// Translates run-length-encoded columns back into prefix-truncated records.
/// A record's prefix is the number of leading columns whose current entry
/// continues at that row.
pub fn column_to_row(run: &ColumnRun) -> Result<Vec<RowRunRecord>> {
    run.validate()?;
    let arity = run.arity;
    let mut entry = vec![0usize; arity];
    let mut left = vec![0u64; arity];
    let mut records = Vec::with_capacity(run.rows as usize);
    for (i, payload) in run.payloads.iter().enumerate() {
        let mut prefix = 0;
        while prefix < arity && left[prefix] > 0 {
            prefix += 1;
        }
        let mut suffix = Vec::with_capacity(arity - prefix);
        for j in 0..arity {
            if left[j] > 0 {
                if j >= prefix {
                    return Err(OvcError::Format(format!(
                        "row {i}: column {j} continues a run after column {prefix} starts one"
                    )));
                }
                left[j] -= 1;
            } else {
                let (code, extra) = run.columns[j][entry[j]];
                entry[j] += 1;
                left[j] = extra;
                suffix.push(code);
            }
        }
        records.push(RowRunRecord {
            prefix_len: prefix,
            suffix,
            payload: payload.clone(),
        });
    }
    Ok(records)
}

/// Reads a whole row-format file into records.
pub fn read_row_records(path: &Path) -> Result<(Header, Vec<RowRunRecord>)> {
    let mut reader = RowRunReader::new(BufReader::new(File::open(path)?))?;
    let mut records = Vec::new();
    while let Some(record) = reader.next_record()? {
        records.push(record);
    }
    Ok((reader.header(), records))
}

/// Converts a sorted row-format file into a column-format file.
pub fn convert_row_file_to_column(input: &Path, output: &Path) -> Result<RunStats> {
    let (header, records) = read_row_records(input)?;
    if !header.sorted {
        return Err(OvcError::Format("column format requires a sorted row file".into()));
    }
    let run = row_to_column_with_carry(records, header.arity)?;
    let mut out = BufWriter::new(File::create(output)?);
    run.write_to(&mut out)?;
    out.flush()?;
    Ok(run.stats())
}

/// Converts a column-format file into a sorted row-format file.
pub fn convert_column_file_to_row(input: &Path, output: &Path) -> Result<RunStats> {
    let run = ColumnRun::read_from(&mut BufReader::new(File::open(input)?))?;
    let mut writer = RowRunWriter::new(BufWriter::new(File::create(output)?), run.arity, true)?;
    for record in column_to_row(&run)? {
        writer.write_record_raw(&record)?;
    }
    Ok(writer.finish()?.1)
}

/// Writer for either format. Column runs are buffered and written on finish.
pub enum RunWriter {
    Row(RowRunWriter<BufWriter<File>>),
    Column {
        builder: ColumnRunBuilder,
        out: BufWriter<File>,
        started: bool,
    },
}

impl RunWriter {
    pub fn create(path: &Path, format: RunFormat, arity: usize) -> Result<Self> {
        let out = BufWriter::new(File::create(path)?);
        Ok(match format {
            RunFormat::Row => RunWriter::Row(RowRunWriter::new(out, arity, true)?),
            RunFormat::Column => RunWriter::Column {
                builder: ColumnRunBuilder::new(arity)?,
                out,
                started: false,
            },
        })
    }

    pub fn finish(self) -> Result<RunStats> {
        match self {
            RunWriter::Row(w) => Ok(w.finish()?.1),
            RunWriter::Column { builder, mut out, .. } => {
                let run = builder.finish();
                run.write_to(&mut out)?;
                out.flush()?;
                Ok(run.stats())
            }
        }
    }
}

impl RowSink for RunWriter {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        match self {
            RunWriter::Row(w) => w.write(&row, ovc),
            RunWriter::Column { builder, started, .. } => {
                let prefix = if *started { ovc.offset(row.key.len()) } else { 0 };
                *started = true;
                builder.push(RowRunRecord::truncate(&row, prefix))
            }
        }
    }
}

/// Reader for either format, yielding rows with codes.
pub enum RunReader {
    Row(RowRunReader<BufReader<File>>),
    Column {
        records: std::vec::IntoIter<RowRunRecord>,
        arity: usize,
        previous: Option<Vec<u64>>,
    },
}

impl RunReader {
    pub fn open(path: &Path, format: RunFormat) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        Ok(match format {
            RunFormat::Row => {
                let reader = RowRunReader::new(input)?;
                if !reader.header().sorted {
                    return Err(OvcError::Format(format!("{} is not a sorted run", path.display())));
                }
                RunReader::Row(reader)
            }
            RunFormat::Column => {
                let run = ColumnRun::read_from(&mut input)?;
                RunReader::Column {
                    records: column_to_row(&run)?.into_iter(),
                    arity: run.arity,
                    previous: None,
                }
            }
        })
    }

    pub fn arity(&self) -> usize {
        match self {
            RunReader::Row(r) => r.arity(),
            RunReader::Column { arity, .. } => *arity,
        }
    }
}

impl Iterator for RunReader {
    type Item = Result<CodedRow>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            RunReader::Row(r) => r.next(),
            RunReader::Column {
                records,
                arity,
                previous,
            } => {
                let record = records.next()?;
                let (row, ovc) = match previous {
                    None => {
                        let row = record.restore(&[]);
                        let ovc = Ovc::initial(&row.key);
                        (row, ovc)
                    }
                    Some(prev) => (record.restore(prev), record.ovc(*arity)),
                };
                *previous = Some(row.key.clone());
                Some(Ok(CodedRow { row, ovc }))
            }
        }
    }
}

/// One run listed in a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunEntry {
    /// `None` for runs held in memory.
    pub path: Option<PathBuf>,
    pub rows: u64,
    pub format: RunFormat,
    pub level: u32,
}

/// Runs produced so far, in creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub runs: Vec<RunEntry>,
}

impl RunManifest {
    /// One line per run: path, rows, format, level, tab-separated.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for run in &self.runs {
            let path = run
                .path
                .as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string());
            s.push_str(&format!("{path}\t{}\t{}\t{}\n", run.rows, run.format, run.level));
        }
        s
    }

    pub fn level(&self, level: u32) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter(move |r| r.level == level)
    }
}

/// Destination for a sequence of runs.
pub trait RunSink {
    fn begin_run(&mut self) -> Result<()>;
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()>;
    fn end_run(&mut self) -> Result<RunEntry>;
}

/// Keeps runs in memory.
#[derive(Debug, Default)]
pub struct MemoryRunSink {
    pub runs: Vec<Vec<CodedRow>>,
    open: bool,
}

impl MemoryRunSink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RunSink for MemoryRunSink {
    fn begin_run(&mut self) -> Result<()> {
        self.runs.push(Vec::new());
        self.open = true;
        Ok(())
    }

    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        debug_assert!(self.open);
        self.runs
            .last_mut()
            .expect("begin_run not called")
            .push(CodedRow { row, ovc });
        Ok(())
    }

    fn end_run(&mut self) -> Result<RunEntry> {
        self.open = false;
        Ok(RunEntry {
            path: None,
            rows: self.runs.last().map_or(0, |r| r.len() as u64),
            format: RunFormat::Row,
            level: 0,
        })
    }
}

/// Writes runs as `<dir>/<level>-<index>.<ext>`.
pub struct DirRunSink {
    dir: PathBuf,
    level: u32,
    next_index: usize,
    format: RunFormat,
    arity: usize,
    current: Option<(PathBuf, RunWriter)>,
    stats: RunStats,
}

impl DirRunSink {
    pub fn new(dir: impl Into<PathBuf>, level: u32, format: RunFormat, arity: usize) -> Self {
        Self {
            dir: dir.into(),
            level,
            next_index: 0,
            format,
            arity,
            current: None,
            stats: RunStats::default(),
        }
    }

    pub fn run_path(&self, index: usize) -> PathBuf {
        self.dir
            .join(format!("{}-{}.{}", self.level, index, self.format.extension()))
    }

    /// Totals over every finished run.
    pub fn stats(&self) -> RunStats {
        self.stats
    }
}

impl RunSink for DirRunSink {
    fn begin_run(&mut self) -> Result<()> {
        let path = self.run_path(self.next_index);
        self.next_index += 1;
        let writer = RunWriter::create(&path, self.format, self.arity)?;
        self.current = Some((path, writer));
        Ok(())
    }

    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        let (_, writer) = self.current.as_mut().expect("begin_run not called");
        RowSink::push(writer, row, ovc)
    }

    fn end_run(&mut self) -> Result<RunEntry> {
        let (path, writer) = self.current.take().expect("begin_run not called");
        let stats = writer.finish()?;
        self.stats.rows += stats.rows;
        self.stats.stored_values += stats.stored_values;
        self.stats.truncated_values += stats.truncated_values;
        Ok(RunEntry {
            path: Some(path),
            rows: stats.rows,
            format: self.format,
            level: self.level,
        })
    }
}

/// Adapts a [`RunSink`]'s open run to [`RowSink`].
pub struct OpenRun<'a, S: RunSink + ?Sized>(pub &'a mut S);

impl<S: RunSink + ?Sized> RowSink for OpenRun<'_, S> {
    fn push(&mut self, row: Row, ovc: Ovc) -> Result<()> {
        self.0.push(row, ovc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keycodec::{ovc_relative_to, Counters};
    use std::io::Cursor;

    /// The three merge inputs of the worked example, in listed order.
    pub(crate) fn worked_example_runs() -> Vec<Vec<Vec<u64>>> {
        vec![
            vec![
                vec![1, 1, 2, 5, 1, 1, 1, 1, 1],
                vec![1, 1, 2, 5, 1, 2, 1, 1, 1],
                vec![1, 1, 2, 5, 1, 3, 0, 0, 0],
            ],
            vec![
                vec![1, 1, 1, 1, 1, 1, 1, 1, 1],
                vec![1, 1, 1, 2, 10, 1, 1, 1, 1],
                vec![1, 1, 2, 5, 1, 3, 0, 1, 0],
            ],
            vec![
                vec![1, 1, 2, 5, 1, 3, 0, 0, 1],
                vec![1, 1, 2, 5, 1, 3, 0, 0, 2],
                vec![1, 1, 2, 5, 1, 3, 0, 0, 3],
                vec![2, 0, 0, 0, 0, 0, 0, 0, 0],
                vec![2, 0, 0, 0, 0, 0, 0, 0, 1],
                vec![2, 0, 1, 0, 9, 9, 9, 9, 9],
                vec![2, 0, 2, 0, 0, 0, 0, 0, 0],
            ],
        ]
    }

    fn coded(keys: &[Vec<u64>]) -> Vec<CodedRow> {
        let mut c = Counters::default();
        keys.iter()
            .enumerate()
            .map(|(i, k)| {
                let ovc = if i == 0 {
                    Ovc::initial(k)
                } else {
                    ovc_relative_to(&keys[i - 1], k, &mut c).1
                };
                CodedRow::new(Row::new(k.clone()), ovc)
            })
            .collect()
    }

    fn write_rows(rows: &[CodedRow], arity: usize) -> (Vec<u8>, RunStats) {
        let mut w = RowRunWriter::new(Cursor::new(Vec::new()), arity, true).unwrap();
        for r in rows {
            w.write(&r.row, r.ovc).unwrap();
        }
        let (cursor, stats) = w.finish().unwrap();
        (cursor.into_inner(), stats)
    }

    fn records_of(bytes: &[u8]) -> Vec<RowRunRecord> {
        let mut r = RowRunReader::new(Cursor::new(bytes)).unwrap();
        let mut out = Vec::new();
        while let Some(rec) = r.next_record().unwrap() {
            out.push(rec);
        }
        out
    }

    #[test]
    fn worked_example_prefix_lengths() {
        let expected = [vec![0, 5, 5], vec![0, 3, 2], vec![0, 8, 8, 0, 8, 2, 2]];
        for (run, expect) in worked_example_runs().iter().zip(expected) {
            let (bytes, _) = write_rows(&coded(run), 9);
            let prefixes: Vec<usize> = records_of(&bytes).iter().map(|r| r.prefix_len).collect();
            assert_eq!(prefixes, expect);
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let rows = coded(&[vec![7, 8], vec![7, 9]]);
        let (bytes, stats) = write_rows(&rows, 2);
        assert_eq!(&bytes[0..4], b"OVCR");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..8], &[2, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        // Row 0: prefix 0, two codes, empty payload. Row 1: prefix 1, one code.
        assert_eq!(bytes.len(), 16 + (1 + 16 + 4) + (1 + 8 + 4));
        assert_eq!(
            stats,
            RunStats {
                rows: 2,
                stored_values: 3,
                truncated_values: 1
            }
        );
    }

    #[test]
    fn single_row_run() {
        let rows = coded(&[vec![4, 5, 6]]);
        let (bytes, _) = write_rows(&rows, 3);
        let recs = records_of(&bytes);
        assert_eq!(
            recs,
            vec![RowRunRecord {
                prefix_len: 0,
                suffix: vec![4, 5, 6],
                payload: vec![]
            }]
        );
    }

    #[test]
    fn round_trip_restores_rows_and_offsets() {
        let run = &worked_example_runs()[2];
        let rows = coded(run);
        let (bytes, _) = write_rows(&rows, 9);
        let back: Vec<CodedRow> = RowRunReader::new(Cursor::new(&bytes))
            .unwrap()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.row, b.row);
            assert_eq!(a.ovc.offset(9), b.ovc.offset(9));
            assert_eq!(a.ovc, b.ovc);
        }
    }

    #[test]
    fn reader_rejects_damage() {
        let rows = coded(&[vec![1, 2], vec![1, 3], vec![2, 0]]);
        let (bytes, _) = write_rows(&rows, 2);
        let collect = |b: &[u8]| -> Result<Vec<CodedRow>> { RowRunReader::new(Cursor::new(b))?.collect() };
        assert!(collect(&bytes).is_ok());
        assert!(matches!(collect(&bytes[..bytes.len() - 1]), Err(OvcError::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(collect(&extra), Err(OvcError::Format(_))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(collect(&magic), Err(OvcError::Format(_))));
        let mut prefix = bytes.clone();
        prefix[16 + 21] = 3;
        assert!(matches!(collect(&prefix), Err(OvcError::Format(_))));
    }

    fn records_from_prefixes(prefixes: &[usize], arity: usize) -> Vec<RowRunRecord> {
        prefixes
            .iter()
            .enumerate()
            .map(|(i, &p)| RowRunRecord {
                prefix_len: p,
                suffix: (p..arity).map(|j| (i * 10 + j) as u64).collect(),
                payload: vec![i as u8],
            })
            .collect()
    }

    #[test]
    fn carry_reproduces_column_run_lengths() {
        let prefixes = [0, 1, 2, 4, 4, 4, 3, 1, 0];
        let records = records_from_prefixes(&prefixes, 5);
        let run = row_to_column_with_carry(records.clone(), 5).unwrap();
        let extras: Vec<Vec<u64>> = run.columns.iter().map(|c| c.iter().map(|e| e.1).collect()).collect();
        assert_eq!(extras[0], vec![7, 0]);
        assert_eq!(extras[1], vec![0, 5, 0, 0]);
        assert_eq!(extras[2], vec![0, 0, 4, 0, 0]);
        assert_eq!(extras[3], vec![0, 0, 3, 0, 0, 0]);
        assert_eq!(extras[4], vec![0; 9]);
        assert_eq!(run.extra_repeats(), 19);
        assert_eq!(prefixes.iter().sum::<usize>(), 19);
        assert_eq!(run.stored_values(), 45 - 19);
        assert_eq!(column_to_row(&run).unwrap(), records);
    }

    #[test]
    fn single_record_and_all_duplicates() {
        let run = row_to_column_with_carry(records_from_prefixes(&[0], 3), 3).unwrap();
        assert!(run.columns.iter().all(|c| c.len() == 1 && c[0].1 == 0));
        let recs = records_from_prefixes(&[0, 3, 3, 3], 3);
        let run = row_to_column_with_carry(recs.clone(), 3).unwrap();
        assert!(run.columns.iter().all(|c| c.len() == 1 && c[0].1 == 3));
        let back = column_to_row(&run).unwrap();
        assert_eq!(back.iter().map(|r| r.prefix_len).collect::<Vec<_>>(), vec![0, 3, 3, 3]);
        assert_eq!(back, recs);
    }

    #[test]
    fn column_to_row_rejects_inconsistent_runs() {
        let mut run = row_to_column_with_carry(records_from_prefixes(&[0, 1, 0], 2), 2).unwrap();
        run.columns[1][0].1 += 1;
        assert!(column_to_row(&run).is_err());
        let mut run = row_to_column_with_carry(records_from_prefixes(&[0, 0, 1], 2), 2).unwrap();
        // Column 1 repeats while column 0 changes: not a prefix structure.
        run.columns[0] = vec![(1, 0), (2, 1)];
        run.columns[1] = vec![(5, 1), (6, 0)];
        assert!(column_to_row(&run).is_err());
    }

    #[test]
    fn column_file_round_trip_and_damage() {
        let run = row_to_column_with_carry(records_from_prefixes(&[0, 2, 1, 3], 3), 3).unwrap();
        let mut bytes = Vec::new();
        run.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"OVCC");
        assert_eq!(ColumnRun::read_from(&mut Cursor::new(&bytes)).unwrap(), run);
        assert!(ColumnRun::read_from(&mut Cursor::new(&bytes[..bytes.len() - 1])).is_err());
        let mut extra = bytes.clone();
        extra.push(1);
        assert!(ColumnRun::read_from(&mut Cursor::new(&extra)).is_err());
    }
}
