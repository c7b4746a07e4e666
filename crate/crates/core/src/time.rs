//! Slot grid and civil-day helpers. Timestamps are stored in UTC; days are
//! Europe/Warsaw civil days.

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;

pub const SLOT_MINUTES: i64 = 15;
pub const SLOTS_PER_DAY: usize = 96;
pub const LOCAL_TZ: Tz = chrono_tz::Europe::Warsaw;

pub fn slot_duration() -> Duration {
    Duration::minutes(SLOT_MINUTES)
}

/// UTC instant of local midnight starting `date`.
pub fn local_midnight(date: NaiveDate) -> DateTime<Utc> {
    // Warsaw switches clocks at 02:00/03:00, so midnight is never skipped or doubled.
    LOCAL_TZ
        .from_local_datetime(&date.and_time(NaiveTime::MIN))
        .earliest()
        .expect("local midnight exists")
        .with_timezone(&Utc)
}

/// Number of 15-minute slots in a local civil day: 96, or 92/100 on DST days.
pub fn slots_in_day(date: NaiveDate) -> usize {
    let next = date.succ_opt().expect("date in range");
    ((local_midnight(next) - local_midnight(date)).num_minutes() / SLOT_MINUTES) as usize
}

/// Local civil date and wall-clock slot index (0..96) of a UTC instant.
pub fn local_slot(ts: DateTime<Utc>) -> (NaiveDate, usize) {
    let local = ts.with_timezone(&LOCAL_TZ);
    let slot = (local.hour() as usize * 60 + local.minute() as usize) / SLOT_MINUTES as usize;
    (local.date_naive(), slot)
}

pub fn floor_to_slot(ts: DateTime<Utc>) -> DateTime<Utc> {
    let secs = ts.timestamp();
    let step = SLOT_MINUTES * 60;
    DateTime::from_timestamp(secs.div_euclid(step) * step, 0).expect("in range")
}

pub fn ceil_to_slot(ts: DateTime<Utc>) -> DateTime<Utc> {
    let floor = floor_to_slot(ts);
    if floor == ts {
        ts
    } else {
        floor + slot_duration()
    }
}

pub fn is_on_grid(ts: DateTime<Utc>) -> bool {
    floor_to_slot(ts) == ts
}

/// Wall-clock label `HH:MM` for a slot index.
pub fn slot_label(slot: usize) -> String {
    let minutes = slot * SLOT_MINUTES as usize;
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}
