use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc, Weekday};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;

use super::{
    AnomalyKind, AnomalyScript, ApplianceMode, AppliancePattern, HouseholdPersona, Phase, SimError,
    SimOutput,
};
use crate::protocol::{DataLine, ObisCode, ReadoutFrame, REGISTER_MODULUS_MILLI};
use crate::store::MeterReading;
use crate::time::{local_midnight, local_slot, slot_duration, SLOTS_PER_DAY, SLOT_MINUTES};

const MINUTES_PER_DAY: usize = 1440;
const TEMPLATE_STREAM: u64 = u64::MAX;
const REGISTER_STREAM: u64 = u64::MAX - 1;
/// Keeps zero-weight slots of a start window reachable.
const WINDOW_WEIGHT_FLOOR: f64 = 1e-3;

/// Generator for one stream of the run. Every simulated day draws from its
/// own ChaCha8 stream (`stream = day index`), so editing one day never
/// perturbs the draws of another.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n_days` local days starting at `start`.
///
/// Readings are emitted on every 15-minute boundary from local midnight of
/// `start` to local midnight after the last day. The register counts
/// 0.001 kWh and carries the truncated remainder forward, so the long-run
/// energy is exact.
pub fn simulate_period(
    persona: &HouseholdPersona,
    start: NaiveDate,
    n_days: usize,
    scripts: &[AnomalyScript],
    seed: u64,
) -> Result<SimOutput, SimError> {
    persona.validate()?;
    if n_days == 0 {
        return Err(SimError::EmptyPeriod);
    }
    let end = start + Days::new(n_days as u64 - 1);
    if let Some(s) = scripts.iter().find(|s| s.day < start || s.day > end) {
        return Err(SimError::ScriptOutsidePeriod {
            kind: s.kind,
            day: s.day,
            start,
            end,
        });
    }

    let templates = assign_templates(&persona.template_weights, n_days, seed);
    let mut plans = BTreeMap::new();
    let mut truth_labels = BTreeMap::new();
    for (index, &template) in templates.iter().enumerate() {
        let date = start + Days::new(index as u64);
        let todays: Vec<&AnomalyScript> = scripts.iter().filter(|s| s.day == date).collect();
        let mut rng = stream_rng(seed, index as u64);
        plans.insert(
            date,
            simulate_day(persona, template, date.weekday(), &todays, &mut rng),
        );
        let label = match todays.last() {
            Some(s) => s.kind.label().to_string(),
            None => persona.routine_templates[template].name.clone(),
        };
        truth_labels.insert(date, label);
    }

    let initial_milli = match persona.initial_register_kwh {
        Some(v) => (v * Decimal::from(1000)).trunc().to_u64().unwrap_or(0),
        None => stream_rng(seed, REGISTER_STREAM).random_range(1_000_000..=30_000_000),
    };
    let t0 = local_midnight(start);
    let t_end = local_midnight(end + Days::new(1));
    let n_slots = ((t_end - t0).num_minutes() / SLOT_MINUTES) as usize;

    let mut readings = Vec::with_capacity(n_slots + 1);
    let mut slot_power_w = Vec::with_capacity(n_slots);
    // Energy in 0.001 Wh (= 1e-6 kWh) so a slot's energy is an integer.
    let mut micro = initial_milli as u128 * 1000;
    let reading_at = |ts: DateTime<Utc>, micro: u128| {
        let milli = (micro / 1000) % REGISTER_MODULUS_MILLI as u128;
        MeterReading::from_milli(persona.id.clone(), ts, milli as u64)
    };
    for i in 0..n_slots {
        let ts = t0 + slot_duration() * i as i32;
        readings.push(reading_at(ts, micro));
        let (date, slot) = local_slot(ts);
        let power = plans[&date][slot];
        slot_power_w.push(power);
        micro += (power * 250.0).round() as u128;
    }
    readings.push(reading_at(t_end, micro));

    Ok(SimOutput {
        meter_id: persona.id.clone(),
        start,
        n_days,
        readings,
        slot_power_w,
        truth_labels,
    })
}

/// Template index per day: counts follow the weights by largest remainder,
/// order is a seeded shuffle.
fn assign_templates(weights: &[f64], n_days: usize, seed: u64) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * n_days as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n_days - counts.iter().sum::<usize>();
    for &i in by_remainder.iter().take(short) {
        counts[i] += 1;
    }
    let mut days: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    days.shuffle(&mut stream_rng(seed, TEMPLATE_STREAM));
    days
}

#[derive(Debug, Clone)]
struct Run {
    power_w: f64,
    program: Vec<Phase>,
    start_minute: usize,
}

impl Run {
    fn end_minute(&self) -> usize {
        self.start_minute
            + self
                .program
                .iter()
                .map(|p| p.minutes as usize)
                .sum::<usize>()
                .max(1)
    }

    fn overlaps(&self, from: usize, to: usize) -> bool {
        self.start_minute < to && self.end_minute() > from
    }
}

fn program_of(appliance: &AppliancePattern) -> Vec<Phase> {
    if appliance.program.is_empty() {
        vec![Phase {
            minutes: 1,
            level: 1.0,
        }]
    } else {
        appliance.program.clone()
    }
}

fn simulate_day(
    persona: &HouseholdPersona,
    template: usize,
    weekday: Weekday,
    scripts: &[&AnomalyScript],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let template = &persona.routine_templates[template];
    let mut minutes = vec![0.0; MINUTES_PER_DAY];
    let mut runs = Vec::new();

    for appliance in &persona.appliances {
        match appliance.mode {
            ApplianceMode::Standby => minutes.iter_mut().for_each(|m| *m += appliance.power_w),
            ApplianceMode::ContinuousDutyCycle => duty_cycle(appliance, &mut minutes, rng),
            ApplianceMode::ScheduledBurst => {
                for entry in &appliance.schedule {
                    if !entry.applies(&template.name, weekday) {
                        continue;
                    }
                    if !rng.random_bool(entry.probability) {
                        continue;
                    }
                    let window = &template.weights[entry.start_slot..entry.end_slot];
                    let slot = entry.start_slot + weighted_index(window, rng);
                    let offset = rng.random_range(0..=appliance.start_jitter_min.min(14)) as usize;
                    runs.push(Run {
                        power_w: appliance.power_w,
                        program: match entry.duration_min {
                            Some(minutes) => vec![Phase {
                                minutes,
                                level: program_of(appliance)[0].level,
                            }],
                            None => program_of(appliance),
                        },
                        start_minute: slot * SLOT_MINUTES as usize + offset,
                    });
                }
            }
        }
    }

    for script in scripts {
        apply_script(persona, script, &mut runs);
    }

    for run in &runs {
        let mut minute = run.start_minute;
        for phase in &run.program {
            for _ in 0..phase.minutes {
                if minute < MINUTES_PER_DAY {
                    minutes[minute] += run.power_w * phase.level;
                }
                minute += 1;
            }
        }
    }

    minutes
        .chunks(SLOT_MINUTES as usize)
        .map(|c| c.iter().sum::<f64>() / SLOT_MINUTES as f64)
        .collect::<Vec<_>>()
        .into_iter()
        .take(SLOTS_PER_DAY)
        .collect()
}

fn weighted_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().map(|w| w + WINDOW_WEIGHT_FLOOR).sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w + WINDOW_WEIGHT_FLOOR;
        if target < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Compressor-style cycling: on for 12-20 minutes, off long enough to meet
/// the duty cycle on average, with a random phase at midnight.
fn duty_cycle(appliance: &AppliancePattern, minutes: &mut [f64], rng: &mut ChaCha8Rng) {
    let duty = appliance.duty_cycle;
    if duty <= 0.0 {
        return;
    }
    if duty >= 1.0 {
        minutes.iter_mut().for_each(|m| *m += appliance.power_w);
        return;
    }
    let on_len = Uniform::new_inclusive(12.0, 20.0).expect("valid range");
    let spread = Uniform::new_inclusive(0.8, 1.2).expect("valid range");
    let mut on = rng.random_bool(duty);
    let mut remaining = rng.random_range(1..=20usize);
    for m in minutes.iter_mut() {
        if remaining == 0 {
            on = !on;
            let on_minutes: f64 = on_len.sample(rng);
            remaining = if on {
                on_minutes.round() as usize
            } else {
                (on_minutes * (1.0 - duty) / duty * spread.sample(rng))
                    .round()
                    .max(1.0) as usize
            };
        }
        if on {
            *m += appliance.power_w;
        }
        remaining -= 1;
    }
}

fn apply_script(persona: &HouseholdPersona, script: &AnomalyScript, runs: &mut Vec<Run>) {
    let minute = |slots: f64| (slots.max(0.0) as usize) * SLOT_MINUTES as usize;
    match script.kind {
        AnomalyKind::FullAbsence => runs.clear(),
        AnomalyKind::AbsenceMorning => {
            let from = minute(script.param("from_slot", 28.0));
            let to = minute(script.param("to_slot", 48.0));
            runs.retain(|r| !r.overlaps(from, to));
        }
        AnomalyKind::ShiftedMorning => {
            let from = minute(script.param("from_slot", 20.0));
            let until = minute(script.param("until_slot", 44.0));
            let shift = minute(script.param("shift_slots", 12.0));
            for r in runs.iter_mut() {
                if (from..until).contains(&r.start_minute) {
                    r.start_minute += shift;
                }
            }
        }
        AnomalyKind::EveningBaking => {
            let start = minute(script.param("start_slot", 74.0));
            let bake = script.param("minutes", 90.0).max(1.0) as u32;
            let find = |name: &str| persona.appliances.iter().find(|a| a.name == name);
            let oven_w = find("oven").map_or(2200.0, |a| a.power_w);
            let level = script.param("oven_level", 0.55);
            let baking = Run {
                power_w: oven_w,
                program: vec![Phase {
                    minutes: bake,
                    level,
                }],
                start_minute: start,
            };
            let after = baking.end_minute() + 30;
            runs.push(baking);
            if let Some(dishwasher) = find("dishwasher") {
                runs.push(Run {
                    power_w: dishwasher.power_w,
                    program: program_of(dishwasher),
                    start_minute: after,
                });
            }
        }
    }
}

/// A readout frame stamped with the time the beacon took it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampedFrame {
    pub meter_id: String,
    pub timestamp: DateTime<Utc>,
    pub frame: ReadoutFrame,
}

impl TimestampedFrame {
    /// Recovers the reading this frame carries, if it has a 1.8.0 register.
    pub fn to_reading(&self) -> Result<Option<MeterReading>, crate::protocol::ProtocolError> {
        Ok(self
            .frame
            .extract_energy(ObisCode::POSITIVE_ACTIVE)?
            .map(|v| {
                MeterReading::new(
                    self.meter_id.clone(),
                    self.timestamp,
                    ObisCode::POSITIVE_ACTIVE,
                    v,
                )
            }))
    }
}

/// One positive active energy readout per simulated reading.
pub fn emit_frames(sim: &SimOutput) -> Result<Vec<TimestampedFrame>, SimError> {
    sim.readings
        .iter()
        .map(|r| {
            let milli = (r.value_kwh * Decimal::from(1000))
                .trunc()
                .to_u64()
                .unwrap_or(0);
            Ok(TimestampedFrame {
                meter_id: r.meter_id.clone(),
                timestamp: r.timestamp,
                frame: ReadoutFrame::new(vec![DataLine::energy(milli)])?,
            })
        })
        .collect()
}
