//! Readings CSV (`meter_id,timestamp,obis,value_kwh`) and NDJSON records.

use std::io::{Read, Write};

use super::{MeterReading, StoreError};

pub const CSV_HEADER: [&str; 4] = ["meter_id", "timestamp", "obis", "value_kwh"];

pub fn read_readings_csv<R: Read>(reader: R) -> Result<Vec<MeterReading>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(&e, 1))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(StoreError::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                headers
            ),
        });
    }
    let mut out = Vec::new();
    for (i, record) in rdr.deserialize().enumerate() {
        out.push(record.map_err(|e| csv_error(&e, i + 2))?);
    }
    Ok(out)
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> StoreError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    StoreError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn write_readings_csv<W: Write>(
    writer: W,
    readings: &[MeterReading],
) -> Result<(), StoreError> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    wtr.write_record(CSV_HEADER).map_err(std::io::Error::from)?;
    for r in readings {
        wtr.serialize(r).map_err(std::io::Error::from)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses newline-delimited JSON readings; blank lines are skipped.
pub fn parse_ndjson(text: &str) -> Result<Vec<MeterReading>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn to_ndjson(readings: &[MeterReading]) -> String {
    let mut out = String::new();
    for r in readings {
        out.push_str(&serde_json::to_string(r).expect("reading serializes"));
        out.push('\n');
    }
    out
}
