use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::protocol::ObisCode;

/// One timestamped cumulative register value from one meter.
///
/// Field names match the readings CSV header and the NDJSON ingestion records.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeterReading {
    pub meter_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "obis")]
    pub register: ObisCode,
    #[serde(with = "rust_decimal::serde::str")]
    pub value_kwh: Decimal,
}

impl MeterReading {
    pub fn new(
        meter_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        register: ObisCode,
        value_kwh: Decimal,
    ) -> Self {
        Self {
            meter_id: meter_id.into(),
            timestamp,
            register,
            value_kwh,
        }
    }

    /// Register value from a count of 0.001 kWh.
    pub fn from_milli(
        meter_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        milli_kwh: u64,
    ) -> Self {
        Self::new(
            meter_id,
            timestamp,
            ObisCode::POSITIVE_ACTIVE,
            Decimal::new(milli_kwh as i64, 3),
        )
    }

    pub fn series_key(&self) -> SeriesKey {
        SeriesKey {
            meter_id: self.meter_id.clone(),
            register: self.register,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesKey {
    pub meter_id: String,
    pub register: ObisCode,
}

/// Provenance of a grid value or power sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Measured,
    Interpolated,
    Missing,
}

impl Quality {
    /// Quality of a value derived from two endpoints.
    pub fn combine(self, other: Quality) -> Quality {
        use Quality::*;
        match (self, other) {
            (Missing, _) | (_, Missing) => Missing,
            (Interpolated, _) | (_, Interpolated) => Interpolated,
            _ => Measured,
        }
    }
}

/// A register value placed on a 15-minute boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridReading {
    pub timestamp: DateTime<Utc>,
    #[serde(with = "rust_decimal::serde::str_option")]
    pub value_kwh: Option<Decimal>,
    pub quality: Quality,
}

/// Mean power over the 15 minutes starting at `slot_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub meter_id: String,
    pub slot_start: DateTime<Utc>,
    pub mean_power_w: Option<f64>,
    pub quality: Quality,
}

/// Ingestion counters. Returned as a delta by each ingest call and
/// accumulated over the store lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub readings_accepted: u64,
    pub duplicates_dropped: u64,
    pub out_of_order: u64,
    pub rollovers_detected: u64,
}

impl std::ops::AddAssign for StoreStats {
    fn add_assign(&mut self, rhs: Self) {
        self.readings_accepted += rhs.readings_accepted;
        self.duplicates_dropped += rhs.duplicates_dropped;
        self.out_of_order += rhs.out_of_order;
        self.rollovers_detected += rhs.rollovers_detected;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let ts = DateTime::parse_from_rfc3339("2023-06-18T22:00:00Z")
            .unwrap()
            .to_utc();
        let r = MeterReading::from_milli("S1", ts, 123_456);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"meter_id":"S1","timestamp":"2023-06-18T22:00:00Z","obis":"1.8.0","value_kwh":"123.456"}"#
        );
        assert_eq!(serde_json::from_str::<MeterReading>(&json).unwrap(), r);
    }

    #[test]
    fn quality_combination() {
        use Quality::*;
        assert_eq!(Measured.combine(Measured), Measured);
        assert_eq!(Measured.combine(Interpolated), Interpolated);
        assert_eq!(Interpolated.combine(Missing), Missing);
    }
}
