use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rust_decimal::Decimal;

use super::{MeterReading, SeriesKey, StoreError, StoreStats};
use crate::protocol::ObisCode;

pub type Series = BTreeMap<DateTime<Utc>, Decimal>;

/// Register modulus in kWh (six integer digits on the wire).
pub fn register_modulus() -> Decimal {
    Decimal::from(1_000_000)
}

/// A decrease is a rollover iff the old value sits in the top tenth of the
/// register range and the new one in the bottom tenth.
pub fn is_rollover(old: Decimal, new: Decimal) -> bool {
    let m = register_modulus();
    old > m * Decimal::new(9, 1) && new < m * Decimal::new(1, 1)
}

/// Energy between two register values, unwrapping a rollover. `None` for an
/// implausible decrease.
pub fn register_delta(old: Decimal, new: Decimal) -> Option<Decimal> {
    if new >= old {
        Some(new - old)
    } else if is_rollover(old, new) {
        Some(new + register_modulus() - old)
    } else {
        None
    }
}

/// In-memory reading index with an optional append-only NDJSON log.
///
/// Readings are keyed by (meter, register, timestamp). Each ingest call is
/// atomic: it is validated against the merged state before anything is
/// applied, so a failing batch leaves the store untouched.
#[derive(Debug, Default)]
pub struct TelemetryStore {
    series: BTreeMap<SeriesKey, Series>,
    stats: StoreStats,
    log: Option<LogFile>,
}

#[derive(Debug)]
struct LogFile {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl TelemetryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store backed by the log at `path`, replaying it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut batch = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let reading = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                batch.push(reading);
            }
            store.ingest(batch)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        store.log = Some(LogFile {
            path,
            writer: BufWriter::new(file),
        });
        Ok(store)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|l| l.path.as_path())
    }

    pub fn stats(&self) -> StoreStats {
        self.stats
    }

    pub fn series(&self, meter_id: &str, register: ObisCode) -> Option<&Series> {
        self.series.get(&SeriesKey {
            meter_id: meter_id.to_string(),
            register,
        })
    }

    pub fn meters(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.series.keys().map(|k| k.meter_id.clone()).collect();
        ids.dedup();
        ids
    }

    pub fn contains_meter(&self, meter_id: &str) -> bool {
        self.series.keys().any(|k| k.meter_id == meter_id)
    }

    /// First and last timestamp stored for a series.
    pub fn extent(
        &self,
        meter_id: &str,
        register: ObisCode,
    ) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        let s = self.series(meter_id, register)?;
        Some((*s.keys().next()?, *s.keys().next_back()?))
    }

    /// All stored readings in key order. Two stores with equal `readings()`
    /// are in the same state.
    pub fn readings(&self) -> Vec<MeterReading> {
        self.series
            .iter()
            .flat_map(|(key, s)| {
                s.iter().map(move |(ts, v)| MeterReading {
                    meter_id: key.meter_id.clone(),
                    timestamp: *ts,
                    register: key.register,
                    value_kwh: *v,
                })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.series.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Validates and applies a batch, returning the counter delta.
    pub fn ingest(
        &mut self,
        batch: impl IntoIterator<Item = MeterReading>,
    ) -> Result<StoreStats, StoreError> {
        let mut delta = StoreStats::default();
        let mut fresh: BTreeMap<SeriesKey, Series> = BTreeMap::new();
        let mut latest: HashMap<SeriesKey, DateTime<Utc>> = HashMap::new();

        for r in batch {
            if r.value_kwh.is_sign_negative() && !r.value_kwh.is_zero() {
                return Err(StoreError::NegativeValue {
                    meter_id: r.meter_id,
                    timestamp: r.timestamp,
                });
            }
            let key = r.series_key();
            let existing = self.series.get(&key);
            let known = existing
                .and_then(|s| s.get(&r.timestamp))
                .or_else(|| fresh.get(&key).and_then(|s| s.get(&r.timestamp)));
            if let Some(&prior) = known {
                if prior != r.value_kwh {
                    return Err(StoreError::ConflictingDuplicate {
                        meter_id: r.meter_id,
                        register: r.register,
                        timestamp: r.timestamp,
                        stored: prior,
                        incoming: r.value_kwh,
                    });
                }
                delta.duplicates_dropped += 1;
                continue;
            }

            let newest = latest.entry(key.clone()).or_insert_with(|| {
                existing
                    .and_then(|s| s.keys().next_back().copied())
                    .unwrap_or(DateTime::<Utc>::MIN_UTC)
            });
            if r.timestamp < *newest {
                delta.out_of_order += 1;
            } else {
                *newest = r.timestamp;
            }
            fresh
                .entry(key)
                .or_default()
                .insert(r.timestamp, r.value_kwh);
        }

        for (key, new_points) in &fresh {
            let empty = Series::new();
            let existing = self.series.get(key).unwrap_or(&empty);
            let neighbour = |ts: &DateTime<Utc>, before: bool| {
                let pick = |s: &Series| {
                    if before {
                        s.range(..*ts).next_back().map(|(t, v)| (*t, *v))
                    } else {
                        s.range(*ts..).find(|(t, _)| *t > ts).map(|(t, v)| (*t, *v))
                    }
                };
                match (pick(existing), pick(new_points)) {
                    (Some(a), Some(b)) => Some(if (a.0 > b.0) == before { a } else { b }),
                    (a, b) => a.or(b),
                }
            };
            for (ts, value) in new_points {
                let mut check = |old: Decimal, new: Decimal, at: DateTime<Utc>| {
                    if new >= old {
                        Ok(())
                    } else if is_rollover(old, new) {
                        delta.rollovers_detected += 1;
                        Ok(())
                    } else {
                        Err(StoreError::NonMonotonicRegister {
                            meter_id: key.meter_id.clone(),
                            register: key.register,
                            timestamp: at,
                            previous: old,
                            value: new,
                        })
                    }
                };
                if let Some((_, prev)) = neighbour(ts, true) {
                    check(prev, *value, *ts)?;
                }
                // Pairs between two fresh points are checked from the later one.
                if let Some((next_ts, next)) = neighbour(ts, false) {
                    if !new_points.contains_key(&next_ts) {
                        check(*value, next, next_ts)?;
                    }
                }
            }
        }

        let accepted: Vec<MeterReading> = fresh
            .iter()
            .flat_map(|(key, s)| {
                s.iter().map(move |(ts, v)| MeterReading {
                    meter_id: key.meter_id.clone(),
                    timestamp: *ts,
                    register: key.register,
                    value_kwh: *v,
                })
            })
            .collect();
        if let Some(log) = self.log.as_mut() {
            for r in &accepted {
                serde_json::to_writer(&mut log.writer, r).map_err(std::io::Error::from)?;
                log.writer.write_all(b"\n")?;
            }
            log.writer.flush()?;
        }
        delta.readings_accepted = accepted.len() as u64;
        for (key, points) in fresh {
            self.series.entry(key).or_default().extend(points);
        }
        self.stats += delta;
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2023-06-19T00:00:00Z")
            .unwrap()
            .to_utc()
    }

    fn reading(minutes: i64, value: &str) -> MeterReading {
        MeterReading::new(
            "m1",
            t0() + Duration::minutes(minutes),
            ObisCode::POSITIVE_ACTIVE,
            value.parse().unwrap(),
        )
    }

    #[test]
    fn reingest_is_duplicate_only() {
        let batch: Vec<_> = (0..4)
            .map(|i| reading(15 * i, &format!("{}.000", i)))
            .collect();
        let mut store = TelemetryStore::in_memory();
        let first = store.ingest(batch.clone()).unwrap();
        assert_eq!(first.readings_accepted, 4);
        let before = store.readings();
        let second = store.ingest(batch).unwrap();
        assert_eq!(second.duplicates_dropped, 4);
        assert_eq!(second.readings_accepted, 0);
        assert_eq!(store.readings(), before);
    }

    #[test]
    fn rollover_is_accepted() {
        let mut store = TelemetryStore::in_memory();
        let delta = store
            .ingest([reading(0, "999999.900"), reading(15, "000000.100")])
            .unwrap();
        assert_eq!(delta.rollovers_detected, 1);
        assert_eq!(
            register_delta("999999.900".parse().unwrap(), "000000.100".parse().unwrap()),
            Some("0.200".parse().unwrap())
        );
    }

    #[test]
    fn conflicting_duplicate() {
        let mut store = TelemetryStore::in_memory();
        store.ingest([reading(0, "5.0")]).unwrap();
        let err = store.ingest([reading(0, "6.0")]).unwrap_err();
        assert!(matches!(err, StoreError::ConflictingDuplicate { .. }));
        let err = TelemetryStore::in_memory()
            .ingest([reading(0, "5.0"), reading(0, "6.0")])
            .unwrap_err();
        assert!(matches!(err, StoreError::ConflictingDuplicate { .. }));
    }

    #[test]
    fn equal_decimal_scales_are_duplicates() {
        let mut store = TelemetryStore::in_memory();
        store.ingest([reading(0, "5.0")]).unwrap();
        assert_eq!(
            store
                .ingest([reading(0, "5.000")])
                .unwrap()
                .duplicates_dropped,
            1
        );
    }

    #[test]
    fn decrease_rejected_atomically() {
        let mut store = TelemetryStore::in_memory();
        store
            .ingest([reading(0, "10.0"), reading(30, "12.0")])
            .unwrap();
        let err = store
            .ingest([reading(45, "13.0"), reading(15, "13.0")])
            .unwrap_err();
        assert!(matches!(err, StoreError::NonMonotonicRegister { .. }));
        assert_eq!(store.len(), 2);
        let err = store.ingest([reading(60, "11.0")]).unwrap_err();
        assert!(matches!(err, StoreError::NonMonotonicRegister { .. }));
    }

    #[test]
    fn out_of_order_counted() {
        let mut store = TelemetryStore::in_memory();
        store.ingest([reading(30, "2.0")]).unwrap();
        let delta = store
            .ingest([reading(0, "1.0"), reading(15, "1.5")])
            .unwrap();
        assert_eq!(delta.out_of_order, 2);
        assert_eq!(store.stats().readings_accepted, 3);
    }

    #[test]
    fn negative_value_rejected() {
        let err = TelemetryStore::in_memory()
            .ingest([reading(0, "-1.0")])
            .unwrap_err();
        assert!(matches!(err, StoreError::NegativeValue { .. }));
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("readings.ndjson");
        let batch: Vec<_> = (0..5)
            .map(|i| reading(15 * i, &format!("{}.250", i)))
            .collect();
        {
            let mut store = TelemetryStore::open(&path).unwrap();
            store.ingest(batch.clone()).unwrap();
            store.ingest(batch.clone()).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        let reopened = TelemetryStore::open(&path).unwrap();
        let mut expected = TelemetryStore::in_memory();
        expected.ingest(batch).unwrap();
        assert_eq!(reopened.readings(), expected.readings());
    }
}
