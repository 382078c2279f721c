use thiserror::Error;

#[derive(Debug, Error)]
pub enum OvcError {
    #[error("key arity {0} is outside 1..=64")]
    InvalidArity(usize),

    #[error("row has {got} key columns, schema expects {expected}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("column value {0} does not fit the code range under this null rule")]
    ValueOverflow(i64),

    #[error("offset {offset} exceeds arity {arity}")]
    OffsetOutOfRange { offset: usize, arity: usize },

    #[error("payload out of range for {0} code word")]
    CodeWordRange(&'static str),

    #[error("fan-in must be at least 1")]
    ZeroFanIn,

    #[error("leaf {leaf} is not awaiting replacement")]
    NotAwaiting { leaf: usize },

    #[error("malformed run file: {0}")]
    Format(String),

    #[error("input {input} is out of order at row {row}")]
    OutOfOrder { input: usize, row: u64 },

    #[error("segment of {rows} rows exceeds the buffer limit of {limit} rows")]
    SegmentTooLarge { rows: usize, limit: usize },

    #[error("aggregate overflow")]
    AggregateOverflow,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OvcError>;
