use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::store::PowerSample;
use crate::time::{local_slot, slots_in_day, SLOTS_PER_DAY};

/// 96 slots of 15-minute mean power (W) for one local civil day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub meter_id: String,
    pub day: NaiveDate,
    pub values: Vec<f64>,
    /// Fraction of slots that carried a measured or interpolated sample.
    pub completeness: f64,
}

impl DailyProfile {
    pub fn new(meter_id: impl Into<String>, day: NaiveDate, values: Vec<f64>) -> Self {
        Self {
            meter_id: meter_id.into(),
            day,
            values,
            completeness: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum ExclusionReason {
    Incomplete {
        completeness: f64,
    },
    /// Clock change day with 92 or 100 slots.
    DstTransition {
        slots: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedDay {
    pub meter_id: String,
    pub day: NaiveDate,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

/// Groups samples into local civil days. Days at or above `min_completeness`
/// become profiles with gaps filled linearly (edges held at the nearest
/// known value); the rest are reported as excluded.
pub fn build_daily_profiles(
    samples: &[PowerSample],
    min_completeness: f64,
) -> (Vec<DailyProfile>, Vec<ExcludedDay>) {
    let mut days: BTreeMap<(String, NaiveDate), Vec<Option<f64>>> = BTreeMap::new();
    for s in samples {
        let (day, slot) = local_slot(s.slot_start);
        let slots = days
            .entry((s.meter_id.clone(), day))
            .or_insert_with(|| vec![None; SLOTS_PER_DAY]);
        if let Some(p) = s.mean_power_w {
            slots[slot] = Some(p);
        }
    }

    let mut profiles = Vec::new();
    let mut excluded = Vec::new();
    for ((meter_id, day), slots) in days {
        let n_slots = slots_in_day(day);
        if n_slots != SLOTS_PER_DAY {
            excluded.push(ExcludedDay {
                meter_id,
                day,
                reason: ExclusionReason::DstTransition { slots: n_slots },
            });
            continue;
        }
        let present = slots.iter().filter(|v| v.is_some()).count();
        let completeness = present as f64 / SLOTS_PER_DAY as f64;
        if present == 0 || completeness < min_completeness {
            excluded.push(ExcludedDay {
                meter_id,
                day,
                reason: ExclusionReason::Incomplete { completeness },
            });
            continue;
        }
        profiles.push(DailyProfile {
            meter_id,
            day,
            values: fill_gaps(&slots),
            completeness,
        });
    }
    (profiles, excluded)
}

fn fill_gaps(slots: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = slots
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    (0..slots.len())
        .map(|i| {
            if let Some(v) = slots[i] {
                return v;
            }
            let after = known.partition_point(|(j, _)| *j < i);
            match (after.checked_sub(1).map(|b| known[b]), known.get(after)) {
                (Some((i0, v0)), Some(&(i1, v1))) => {
                    v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
                }
                (Some((_, v)), None) | (None, Some(&(_, v))) => v,
                (None, None) => 0.0,
            }
        })
        .collect()
}
