//! Reading ingestion, deduplication and 15-minute mean power derivation.

mod grid;
mod ingest;
mod io;
mod reading;

use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use thiserror::Error;

use crate::protocol::ObisCode;

pub use grid::{align_series, power_from_grid, MAX_INTERPOLATION_GAP_MINUTES, SNAP_TOLERANCE_SECS};
pub use ingest::{is_rollover, register_delta, register_modulus, Series, TelemetryStore};
pub use io::{parse_ndjson, read_readings_csv, to_ndjson, write_readings_csv, CSV_HEADER};
pub use reading::{GridReading, MeterReading, PowerSample, Quality, SeriesKey, StoreStats};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("conflicting values for {meter_id} {register} at {timestamp}: stored {stored}, incoming {incoming}")]
    ConflictingDuplicate {
        meter_id: String,
        register: ObisCode,
        timestamp: DateTime<Utc>,
        stored: Decimal,
        incoming: Decimal,
    },
    #[error(
        "register {register} of {meter_id} decreases from {previous} to {value} at {timestamp}"
    )]
    NonMonotonicRegister {
        meter_id: String,
        register: ObisCode,
        timestamp: DateTime<Utc>,
        previous: Decimal,
        value: Decimal,
    },
    #[error("negative register value for {meter_id} at {timestamp}")]
    NegativeValue {
        meter_id: String,
        timestamp: DateTime<Utc>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
