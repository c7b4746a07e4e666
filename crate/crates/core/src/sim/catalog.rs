//! Built-in personas S1-S4.
//!
//! Each persona owns a fixed appliance set. Ratings, programs
//! and routines are configuration defaults chosen to give the qualitative
//! daily shapes (morning peak around 08:00, evening peak 20:00-21:00, noon
//! and late-afternoon activity days), not measured data.

use chrono::{Days, NaiveDate};

use super::{
    AnomalyKind, AnomalyScript, AppliancePattern, HouseholdPersona, Phase, RoutineTemplate,
    ScheduleEntry, SimError,
};
use crate::time::SLOTS_PER_DAY;

pub const PERSONA_IDS: [&str; 4] = ["S1", "S2", "S3", "S4"];

fn phase(minutes: u32, level: f64) -> Phase {
    Phase { minutes, level }
}

fn at(start_slot: usize, probability: f64) -> ScheduleEntry {
    ScheduleEntry::new(start_slot, start_slot + 1, probability)
}

fn window(start_slot: usize, end_slot: usize, probability: f64) -> ScheduleEntry {
    ScheduleEntry::new(start_slot, end_slot, probability)
}

fn lasting(mut entry: ScheduleEntry, minutes: u32) -> ScheduleEntry {
    entry.duration_min = Some(minutes);
    entry
}

/// Sum of Gaussian bumps `(center slot, width in slots, height)` over a small floor.
fn bumps(peaks: &[(f64, f64, f64)]) -> Vec<f64> {
    (0..SLOTS_PER_DAY)
        .map(|s| {
            let s = s as f64;
            0.02 + peaks
                .iter()
                .map(|(c, w, h)| h * (-0.5 * ((s - c) / w).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

fn template(name: &str, peaks: &[(f64, f64, f64)]) -> RoutineTemplate {
    RoutineTemplate {
        name: name.to_string(),
        weights: bumps(peaks),
    }
}

const MORNING: (f64, f64, f64) = (32.0, 3.0, 1.0);
const EVENING: (f64, f64, f64) = (82.0, 4.0, 0.8);

fn typical() -> RoutineTemplate {
    template("typical", &[MORNING, EVENING])
}

fn noon() -> RoutineTemplate {
    template("noon", &[(32.0, 3.0, 0.6), (48.0, 5.0, 1.0), EVENING])
}

fn late_afternoon() -> RoutineTemplate {
    template(
        "late-afternoon",
        &[(32.0, 3.0, 0.6), (66.0, 5.0, 1.0), EVENING],
    )
}

fn fridge() -> AppliancePattern {
    AppliancePattern::duty_cycled("fridge", 90.0, 0.4)
}

fn kettle() -> AppliancePattern {
    AppliancePattern::burst("kettle", 2000.0, vec![phase(4, 1.0)]).jitter(6)
}

fn hair_dryer() -> AppliancePattern {
    AppliancePattern::burst("hair-dryer", 1200.0, vec![phase(10, 1.0)]).jitter(4)
}

fn oven() -> AppliancePattern {
    AppliancePattern::burst("oven", 2200.0, vec![phase(75, 0.55)]).jitter(5)
}

fn dishwasher() -> AppliancePattern {
    AppliancePattern::burst(
        "dishwasher",
        1800.0,
        vec![
            phase(20, 1.0),
            phase(50, 0.05),
            phase(15, 1.0),
            phase(15, 0.05),
        ],
    )
    .jitter(5)
}

/// Cycle peaking at the heater rating, then motor and spin.
fn washing_machine() -> AppliancePattern {
    AppliancePattern::burst(
        "washing machine",
        2000.0,
        vec![phase(15, 1.0), phase(45, 0.1), phase(10, 0.25)],
    )
    .jitter(4)
}

fn iron() -> AppliancePattern {
    AppliancePattern::burst("iron", 1800.0, vec![phase(40, 0.45)]).jitter(8)
}

fn tv() -> AppliancePattern {
    AppliancePattern::burst("TV", 60.0, vec![phase(180, 1.0)]).jitter(14)
}

fn led_lighting() -> AppliancePattern {
    AppliancePattern::burst("LED lighting", 40.0, vec![phase(150, 1.0)]).jitter(14)
}

fn regular_lighting() -> AppliancePattern {
    AppliancePattern::burst("regular lighting", 180.0, vec![phase(150, 1.0)]).jitter(14)
}

fn air_conditioner() -> AppliancePattern {
    AppliancePattern::burst("A/C", 900.0, vec![phase(180, 0.7)]).jitter(10)
}

fn alarm() -> AppliancePattern {
    AppliancePattern::standby("alarm", 5.0)
}

fn s1() -> HouseholdPersona {
    HouseholdPersona {
        id: "S1".into(),
        appliances: vec![
            led_lighting().at(at(80, 1.0)).at(lasting(at(26, 0.5), 60)),
            fridge(),
            kettle()
                .at(at(30, 1.0))
                .at(at(34, 1.0))
                .at(at(81, 1.0))
                .at(window(60, 68, 0.2)),
            oven()
                .jitter(1)
                .at(lasting(at(50, 1.0), 90).on(&["guests"])),
            dishwasher().jitter(1).at(at(60, 1.0).on(&["guests"])),
            hair_dryer().at(at(31, 1.0)),
            washing_machine().jitter(1).at(at(40, 1.0).on(&["laundry"])),
            iron().jitter(1).at(at(60, 1.0).on(&["laundry"])),
            tv().at(at(78, 1.0)),
        ],
        routine_templates: vec![
            typical(),
            template("guests", &[(32.0, 3.0, 0.6), (52.0, 5.0, 1.0), EVENING]),
            template("laundry", &[MORNING, (44.0, 6.0, 0.8), EVENING]),
        ],
        template_weights: vec![0.6, 0.2, 0.2],
        initial_register_kwh: None,
    }
}

fn s2() -> HouseholdPersona {
    HouseholdPersona {
        id: "S2".into(),
        appliances: vec![
            regular_lighting().at(lasting(at(82, 0.9), 120)),
            led_lighting().at(at(80, 0.95)),
            fridge(),
            kettle()
                .at(at(28, 0.95))
                .at(at(64, 0.8))
                .at(window(40, 46, 0.2)),
            oven().at(at(70, 0.9).on(&["guests"])),
            dishwasher().at(at(80, 0.95).on(&["guests"])),
            hair_dryer().at(at(29, 0.7)),
            washing_machine().at(at(38, 0.95).on(&["cleaning"])),
            iron().at(at(56, 0.9).on(&["cleaning"])),
            tv().at(at(76, 0.95)),
            alarm(),
        ],
        routine_templates: vec![
            template("typical", &[(29.0, 3.0, 1.0), EVENING]),
            template("cleaning", &[(29.0, 3.0, 0.6), (46.0, 6.0, 1.0), EVENING]),
            template("guests", &[(29.0, 3.0, 0.6), (72.0, 5.0, 1.0), EVENING]),
        ],
        template_weights: vec![0.6, 0.2, 0.2],
        initial_register_kwh: None,
    }
}

/// Low-use household: gas cooking, no hair-dryer or iron in use, a cold
/// laundry program.
fn s3() -> HouseholdPersona {
    HouseholdPersona {
        id: "S3".into(),
        appliances: vec![
            led_lighting().at(at(80, 0.95)),
            fridge(),
            AppliancePattern::burst(
                "washing machine",
                2000.0,
                vec![phase(40, 0.1), phase(10, 0.2)],
            )
            .jitter(10)
            .at(at(40, 0.9).on(&["laundry"])),
            tv().at(at(78, 0.9)).at(lasting(window(48, 52, 0.3), 60)),
        ],
        routine_templates: vec![
            template("quiet", &[EVENING]),
            template("laundry", &[(42.0, 4.0, 1.0), EVENING]),
        ],
        template_weights: vec![0.8, 0.2],
        initial_register_kwh: None,
    }
}

/// Keeps a strict timetable for long appliance runs, so the three routines
/// differ far more between each other than from day to day.
fn s4() -> HouseholdPersona {
    HouseholdPersona {
        id: "S4".into(),
        appliances: vec![
            led_lighting().at(at(80, 1.0)).at(lasting(at(26, 0.5), 60)),
            fridge(),
            kettle().at(at(31, 1.0)).at(at(81, 1.0)),
            oven()
                .jitter(0)
                .at(at(46, 1.0).on(&["noon"]))
                .at(lasting(at(62, 1.0), 90).on(&["late-afternoon"])),
            hair_dryer().at(at(32, 1.0)),
            washing_machine().jitter(0).at(at(40, 1.0).on(&["noon"])),
            iron().jitter(0).at(at(54, 1.0).on(&["noon"])),
            tv().at(at(78, 1.0)),
            air_conditioner()
                .jitter(0)
                .at(at(60, 1.0).on(&["late-afternoon"])),
        ],
        routine_templates: vec![typical(), noon(), late_afternoon()],
        template_weights: vec![0.5, 0.25, 0.25],
        initial_register_kwh: None,
    }
}

/// Built-in persona for `id` (S1-S4).
pub fn build_persona(id: &str) -> Result<HouseholdPersona, SimError> {
    let persona = match id {
        "S1" => s1(),
        "S2" => s2(),
        "S3" => s3(),
        "S4" => s4(),
        other => return Err(SimError::UnknownPersona(other.to_string())),
    };
    debug_assert!(persona.validate().is_ok());
    Ok(persona)
}

/// Case-study anomaly days for a persona whose run starts at `start`: S1 gets
/// one day of each scripted morning/evening anomaly, S2 a two-day trip.
/// Days falling outside `n_days` are dropped.
pub fn default_scripts(persona_id: &str, start: NaiveDate, n_days: usize) -> Vec<AnomalyScript> {
    let day = |offset: u64| start + Days::new(offset);
    let scripts = match persona_id {
        "S1" => vec![
            (2, AnomalyKind::EveningBaking),
            (17, AnomalyKind::AbsenceMorning),
            (28, AnomalyKind::ShiftedMorning),
        ],
        "S2" => vec![
            (12, AnomalyKind::FullAbsence),
            (13, AnomalyKind::FullAbsence),
        ],
        _ => vec![],
    };
    scripts
        .into_iter()
        .filter(|(offset, _)| (*offset as usize) < n_days)
        .map(|(offset, kind)| AnomalyScript::new(kind, day(offset)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn names(id: &str) -> BTreeSet<String> {
        build_persona(id)
            .unwrap()
            .appliance_names()
            .into_iter()
            .map(String::from)
            .collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn equipment_matches_table() {
        assert_eq!(
            names("S1"),
            set(&[
                "LED lighting",
                "fridge",
                "kettle",
                "oven",
                "dishwasher",
                "hair-dryer",
                "washing machine",
                "iron",
                "TV"
            ])
        );
        assert_eq!(
            names("S2"),
            set(&[
                "regular lighting",
                "LED lighting",
                "fridge",
                "kettle",
                "oven",
                "dishwasher",
                "hair-dryer",
                "washing machine",
                "iron",
                "TV",
                "alarm"
            ])
        );
        assert_eq!(
            names("S3"),
            set(&["LED lighting", "fridge", "washing machine", "TV"])
        );
        assert_eq!(
            names("S4"),
            set(&[
                "LED lighting",
                "fridge",
                "kettle",
                "oven",
                "hair-dryer",
                "washing machine",
                "iron",
                "TV",
                "A/C"
            ])
        );
    }

    #[test]
    fn all_personas_valid() {
        for id in PERSONA_IDS {
            build_persona(id).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn unknown_persona_lists_ids() {
        let err = build_persona("S9").unwrap_err();
        assert!(err.to_string().contains("S1, S2, S3, S4"));
    }

    #[test]
    fn template_counts() {
        assert_eq!(build_persona("S4").unwrap().routine_templates.len(), 3);
        assert_eq!(build_persona("S3").unwrap().routine_templates.len(), 2);
    }

    #[test]
    fn persona_json_round_trip() {
        let p = build_persona("S4").unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(HouseholdPersona::from_json(&json).unwrap(), p);
    }
}
