use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use ovcsort::runformat::{convert_column_file_to_row, convert_row_file_to_column, RunReader, RunStats, RunWriter};
use ovcsort::runformat::{COLUMN_MAGIC, ROW_MAGIC};
use ovcsort::{external_sort, merge_runs, Aggregate, Counters, DedupMode, RunFormat, RunGenMode, SortOptions};
use ovcsort_bench::datagen::{generate, read_dataset, write_dataset, DatasetSpec, Layout};
use ovcsort_bench::report::{fixed, ReportFormat, Table};
use ovcsort_bench::{run_experiment, Params, EXPERIMENTS};

/// Sort and merge with offset-value coding; generate datasets and run the
/// comparison-count experiments.
#[derive(Parser, Debug)]
#[command(name = "ovcsort", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic, unsorted dataset in the row format.
    Gen {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sort a dataset file, or a generated dataset, into one run file.
    Sort {
        /// Dataset file; without it a dataset is generated from the data flags.
        #[arg(long, conflicts_with_all = ["rows", "arity", "values", "prefix", "copies", "layout", "seed"])]
        input: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sort: SortArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        report: ReportFormat,
    },
    /// Merge sorted run files into one run file.
    Merge {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "row")]
        format: RunFormat,
        #[arg(long, default_value = "off", value_parser = parse_dedup)]
        dedup: DedupMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        report: ReportFormat,
    },
    /// Translate a sorted run file between the row and column formats.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target format; defaults to the other format.
        #[arg(long)]
        format: Option<RunFormat>,
    },
    /// Run a named experiment and print its table.
    Bench {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
        experiment: String,
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<usize>>,
        #[arg(long)]
        arity: Option<usize>,
        #[arg(long)]
        values: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        prefix: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        copies: Option<Vec<usize>>,
        #[arg(long)]
        fan_in: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        rows_per_run: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Timed repetitions; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[arg(long, default_value = "csv")]
        report: ReportFormat,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    arity: usize,
    /// Distinct values per column.
    #[arg(long, default_value_t = 1 << 30)]
    values: u64,
    /// Leading constant columns.
    #[arg(long, default_value_t = 0)]
    prefix: usize,
    /// Copies of each distinct key.
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long, default_value = "random")]
    layout: Layout,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            rows: self.rows,
            arity: self.arity,
            values: self.values,
            prefix: self.prefix,
            copies: self.copies,
            layout: self.layout,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct SortArgs {
    /// Rows held in memory during run generation.
    #[arg(long, default_value_t = 100_000)]
    memory: usize,
    #[arg(long, default_value_t = 16)]
    fan_in: usize,
    #[arg(long, default_value = "off", value_parser = parse_dedup)]
    dedup: DedupMode,
    #[arg(long, default_value = "row")]
    format: RunFormat,
    #[arg(long, default_value = "load")]
    run_gen: RunGenMode,
    /// Worker threads for independent merge steps.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Directory for temporary runs.
    #[arg(long)]
    temp_dir: Option<PathBuf>,
}

fn parse_dedup(s: &str) -> std::result::Result<DedupMode, String> {
    Ok(match s {
        "off" => DedupMode::Off,
        "drop" => DedupMode::Drop,
        "count" => DedupMode::Aggregate(Aggregate::Count),
        "sum" => DedupMode::Aggregate(Aggregate::Sum),
        "min" => DedupMode::Aggregate(Aggregate::Min),
        "max" => DedupMode::Aggregate(Aggregate::Max),
        other => {
            return Err(format!(
                "unknown dedup mode {other:?} (expected off, drop, count, sum, min or max)"
            ))
        }
    })
}

fn counts_table(name: &str, rows_in: u64, c: &Counters, stats: &RunStats, extra: &[(&str, String)]) -> Table {
    let mut headers = vec![
        "rows_in",
        "rows_out",
        "row_comparisons",
        "column_comparisons",
        "ovc_only_decisions",
        "bypassed",
        "stored_values",
        "truncated_values",
        "compression_ratio",
    ];
    headers.extend(extra.iter().map(|(h, _)| *h));
    let mut t = Table::new(name, &headers);
    let mut row = vec![
        rows_in.to_string(),
        stats.rows.to_string(),
        c.row_comparisons.to_string(),
        c.column_comparisons.to_string(),
        c.ovc_only_decisions.to_string(),
        c.bypassed.to_string(),
        stats.stored_values.to_string(),
        stats.truncated_values.to_string(),
        fixed(stats.compression_ratio(), 3),
    ];
    row.extend(extra.iter().map(|(_, v)| v.clone()));
    t.push(row);
    t
}

fn emit(table: &Table, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let text = table.render(format)?;
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn file_magic(path: &Path) -> Result<[u8; 4]> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading header of {}", path.display()))?;
    Ok(magic)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { data, out } => {
            let rows = generate(&data.spec())?;
            write_dataset(&out, data.arity, &rows)?;
        }
        Command::Sort {
            input,
            data,
            sort,
            out,
            report,
        } => {
            let (arity, rows) = match &input {
                Some(path) => read_dataset(path)?,
                None => (data.arity, generate(&data.spec())?),
            };
            let options = SortOptions {
                memory_capacity: sort.memory,
                fan_in: sort.fan_in,
                run_gen: sort.run_gen,
                dedup: sort.dedup,
                format: sort.format,
                temp_dir: sort.temp_dir,
                threads: sort.threads,
            };
            let rows_in = rows.len() as u64;
            let mut writer = RunWriter::create(&out, sort.format, arity)?;
            let mut c = Counters::default();
            let result = external_sort(rows.into_iter().map(Ok), &options, &mut writer, &mut c)?;
            let stats = writer.finish()?;
            let levels = result.plan.as_ref().map_or(0, |p| p.levels.len());
            let t = counts_table(
                "sort",
                rows_in,
                &c,
                &stats,
                &[
                    ("initial_runs", result.initial_runs.to_string()),
                    ("merge_levels", levels.to_string()),
                ],
            );
            emit(&t, report, None)?;
        }
        Command::Merge {
            input,
            format,
            dedup,
            out,
            report,
        } => {
            let readers = input
                .iter()
                .map(|p| RunReader::open(p, format).with_context(|| format!("opening {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let arity = readers[0].arity();
            ensure!(
                readers.iter().all(|r| r.arity() == arity),
                "input runs have different arities"
            );
            let mut writer = RunWriter::create(&out, format, arity)?;
            let mut c = Counters::default();
            merge_runs(readers, dedup, &mut c, &mut writer)?;
            let stats = writer.finish()?;
            let mut rows_in = 0;
            for p in &input {
                rows_in += RunReader::open(p, format)?.count() as u64;
            }
            emit(&counts_table("merge", rows_in, &c, &stats, &[]), report, None)?;
        }
        Command::Convert { input, out, format } => {
            let magic = file_magic(&input)?;
            let source = if magic == ROW_MAGIC {
                RunFormat::Row
            } else if magic == COLUMN_MAGIC {
                RunFormat::Column
            } else {
                bail!("{} is not a run file", input.display());
            };
            let target = format.unwrap_or(match source {
                RunFormat::Row => RunFormat::Column,
                RunFormat::Column => RunFormat::Row,
            });
            ensure!(
                target != source,
                "{} is already in the {target} format",
                input.display()
            );
            match target {
                RunFormat::Column => convert_row_file_to_column(&input, &out)?,
                RunFormat::Row => convert_column_file_to_row(&input, &out)?,
            };
        }
        Command::Bench {
            experiment,
            rows,
            arity,
            values,
            prefix,
            copies,
            fan_in,
            rows_per_run,
            seed,
            seeds,
            repeat,
            report,
            out,
        } => {
            let params = Params {
                rows,
                arity,
                values,
                prefix,
                copies,
                fan_in,
                rows_per_run,
                seed,
                seeds,
                repeat,
            };
            let t = run_experiment(&experiment, &params)?;
            emit(&t, report, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
