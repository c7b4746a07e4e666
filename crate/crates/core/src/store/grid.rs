use chrono::{DateTime, Duration, Utc};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;

use super::ingest::{register_delta, register_modulus, Series};
use super::{GridReading, PowerSample, Quality, TelemetryStore};
use crate::protocol::ObisCode;
use crate::time::{ceil_to_slot, slot_duration};

/// Readings this close to a boundary are taken as the boundary value.
pub const SNAP_TOLERANCE_SECS: i64 = 90;
/// Widest gap between two readings that may be interpolated across.
pub const MAX_INTERPOLATION_GAP_MINUTES: i64 = 60;

/// Register values on every 15-minute boundary in `[from, to]`.
pub fn align_series(series: &Series, from: DateTime<Utc>, to: DateTime<Utc>) -> Vec<GridReading> {
    let tolerance = Duration::seconds(SNAP_TOLERANCE_SECS);
    let max_gap = Duration::minutes(MAX_INTERPOLATION_GAP_MINUTES);
    let mut out = Vec::new();
    let mut boundary = ceil_to_slot(from);
    while boundary <= to {
        let snapped = series
            .range(boundary - tolerance..=boundary + tolerance)
            .min_by_key(|(ts, _)| (**ts - boundary).abs());
        let point = if let Some((_, v)) = snapped {
            GridReading {
                timestamp: boundary,
                value_kwh: Some(*v),
                quality: Quality::Measured,
            }
        } else {
            let prev = series.range(..boundary).next_back();
            let next = series.range(boundary..).next();
            match (prev, next) {
                (Some((t0, v0)), Some((t1, v1))) if *t1 - *t0 <= max_gap => {
                    match interpolate(*t0, *v0, *t1, *v1, boundary) {
                        Some(v) => GridReading {
                            timestamp: boundary,
                            value_kwh: Some(v),
                            quality: Quality::Interpolated,
                        },
                        None => missing(boundary),
                    }
                }
                _ => missing(boundary),
            }
        };
        out.push(point);
        boundary += slot_duration();
    }
    out
}

fn missing(timestamp: DateTime<Utc>) -> GridReading {
    GridReading {
        timestamp,
        value_kwh: None,
        quality: Quality::Missing,
    }
}

fn interpolate(
    t0: DateTime<Utc>,
    v0: Decimal,
    t1: DateTime<Utc>,
    v1: Decimal,
    at: DateTime<Utc>,
) -> Option<Decimal> {
    let delta = register_delta(v0, v1)?;
    let span = Decimal::from((t1 - t0).num_milliseconds());
    let offset = Decimal::from((at - t0).num_milliseconds());
    let value = (v0 + delta * offset / span).round_dp(6);
    Some(if value >= register_modulus() {
        value - register_modulus()
    } else {
        value
    })
}

/// Mean power for each slot between consecutive grid values.
pub fn power_from_grid(meter_id: &str, grid: &[GridReading]) -> Vec<PowerSample> {
    grid.windows(2)
        .map(|w| {
            let quality = w[0].quality.combine(w[1].quality);
            let power = match (w[0].value_kwh, w[1].value_kwh) {
                (Some(e1), Some(e2)) => {
                    register_delta(e1, e2).and_then(|d| (d * Decimal::from(4000)).to_f64())
                }
                _ => None,
            };
            PowerSample {
                meter_id: meter_id.to_string(),
                slot_start: w[0].timestamp,
                mean_power_w: power,
                quality: if power.is_some() {
                    quality
                } else {
                    Quality::Missing
                },
            }
        })
        .collect()
}

impl TelemetryStore {
    /// Grid values for boundaries in `[from, to]`; empty if the series is unknown.
    pub fn align_to_grid(
        &self,
        meter_id: &str,
        register: ObisCode,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Vec<GridReading> {
        match self.series(meter_id, register) {
            Some(s) => align_series(s, from, to),
            None => Vec::new(),
        }
    }

    /// Power samples for slots starting in `[from, to)`.
    pub fn mean_power_series(
        &self,
        meter_id: &str,
        register: ObisCode,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Vec<PowerSample> {
        power_from_grid(meter_id, &self.align_to_grid(meter_id, register, from, to))
    }

    /// Power samples over the whole stored extent of a series.
    pub fn full_power_series(&self, meter_id: &str, register: ObisCode) -> Vec<PowerSample> {
        match self.extent(meter_id, register) {
            Some((first, last)) => {
                let from = crate::time::floor_to_slot(first);
                self.mean_power_series(meter_id, register, from, ceil_to_slot(last))
            }
            None => Vec::new(),
        }
    }
}
