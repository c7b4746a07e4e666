//! Synthetic household load simulator producing 15-minute cumulative
//! register readings with per-day ground truth.
//!
//! A day is simulated at one-minute resolution in local wall-clock time and
//! averaged into 96 slots. Every day first draws a routine template; the
//! template tags which scheduled bursts may run and weights where inside
//! their start window they begin. Anomaly scripts then edit that day's plan.

mod catalog;
mod engine;

use std::collections::BTreeMap;

use chrono::{NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::MeterReading;
use crate::time::SLOTS_PER_DAY;

pub use catalog::{build_persona, default_scripts, PERSONA_IDS};
pub use engine::{emit_frames, simulate_period, TimestampedFrame};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown persona {0:?}; valid ids are {valid}", valid = PERSONA_IDS.join(", "))]
    UnknownPersona(String),
    #[error("invalid persona: {0}")]
    InvalidPersona(String),
    #[error("script {kind} on {day} lies outside the simulated period {start}..{end}")]
    ScriptOutsidePeriod {
        kind: AnomalyKind,
        day: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("simulation needs at least one day")]
    EmptyPeriod,
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApplianceMode {
    /// Always on, cycling between on and off (fridge compressor).
    ContinuousDutyCycle,
    /// Runs a fixed program when a schedule entry fires.
    ScheduledBurst,
    /// Constant draw.
    Standby,
}

/// One segment of a burst program at `level` × rated power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub minutes: u32,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// First slot in which a run may start.
    pub start_slot: usize,
    /// Exclusive end of the start window.
    pub end_slot: usize,
    /// Empty means every day.
    #[serde(default)]
    pub days_of_week: Vec<Weekday>,
    pub probability: f64,
    /// Templates on which this entry is active; empty means all.
    #[serde(default)]
    pub templates: Vec<String>,
    /// Replaces the program with one phase of this length at the program's first level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_min: Option<u32>,
}

impl ScheduleEntry {
    pub fn new(start_slot: usize, end_slot: usize, probability: f64) -> Self {
        Self {
            start_slot,
            end_slot,
            days_of_week: Vec::new(),
            probability,
            templates: Vec::new(),
            duration_min: None,
        }
    }

    pub fn on(mut self, templates: &[&str]) -> Self {
        self.templates = templates.iter().map(|t| t.to_string()).collect();
        self
    }

    pub fn applies(&self, template: &str, weekday: Weekday) -> bool {
        (self.templates.is_empty() || self.templates.iter().any(|t| t == template))
            && (self.days_of_week.is_empty() || self.days_of_week.contains(&weekday))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliancePattern {
    pub name: String,
    pub power_w: f64,
    pub mode: ApplianceMode,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    /// Burst program; a single full-power minute if empty.
    #[serde(default)]
    pub program: Vec<Phase>,
    /// Fraction of time on, for duty-cycled appliances.
    #[serde(default = "default_duty")]
    pub duty_cycle: f64,
    /// A run starts this many minutes at most into its chosen slot.
    #[serde(default = "default_jitter")]
    pub start_jitter_min: u32,
}

fn default_duty() -> f64 {
    1.0
}

fn default_jitter() -> u32 {
    14
}

impl AppliancePattern {
    pub fn standby(name: &str, power_w: f64) -> Self {
        Self {
            name: name.to_string(),
            power_w,
            mode: ApplianceMode::Standby,
            schedule: Vec::new(),
            program: Vec::new(),
            duty_cycle: 1.0,
            start_jitter_min: 0,
        }
    }

    pub fn duty_cycled(name: &str, power_w: f64, duty_cycle: f64) -> Self {
        Self {
            mode: ApplianceMode::ContinuousDutyCycle,
            duty_cycle,
            ..Self::standby(name, power_w)
        }
    }

    pub fn burst(name: &str, power_w: f64, program: Vec<Phase>) -> Self {
        Self {
            mode: ApplianceMode::ScheduledBurst,
            program,
            start_jitter_min: default_jitter(),
            ..Self::standby(name, power_w)
        }
    }

    pub fn at(mut self, entry: ScheduleEntry) -> Self {
        self.schedule.push(entry);
        self
    }

    pub fn jitter(mut self, minutes: u32) -> Self {
        self.start_jitter_min = minutes;
        self
    }

    pub fn program_minutes(&self) -> u32 {
        self.program.iter().map(|p| p.minutes).sum::<u32>().max(1)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidPersona(format!("{}: {why}", self.name)));
        if !(self.power_w >= 0.0 && self.power_w.is_finite()) {
            return bad("power must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return bad("duty cycle outside [0, 1]".into());
        }
        for e in &self.schedule {
            if e.start_slot >= e.end_slot || e.end_slot > SLOTS_PER_DAY {
                return bad(format!("schedule window {}..{}", e.start_slot, e.end_slot));
            }
            if !(0.0..=1.0).contains(&e.probability) {
                return bad(format!("activation probability {}", e.probability));
            }
        }
        if self
            .program
            .iter()
            .any(|p| !(p.level >= 0.0 && p.level.is_finite()))
        {
            return bad("negative program level".into());
        }
        Ok(())
    }
}

/// A named 96-slot activity weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineTemplate {
    pub name: String,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdPersona {
    pub id: String,
    pub appliances: Vec<AppliancePattern>,
    pub routine_templates: Vec<RoutineTemplate>,
    pub template_weights: Vec<f64>,
    /// Starting register value; drawn from the seed when absent.
    #[serde(default, with = "rust_decimal::serde::str_option")]
    pub initial_register_kwh: Option<rust_decimal::Decimal>,
}

impl HouseholdPersona {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: &str| Err(SimError::InvalidPersona(format!("{}: {why}", self.id)));
        if self.routine_templates.is_empty() {
            return bad("no routine templates");
        }
        if self.routine_templates.len() != self.template_weights.len() {
            return bad("one weight per template required");
        }
        if self.template_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return bad("negative template weight");
        }
        if (self.template_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("template weights must sum to 1");
        }
        for t in &self.routine_templates {
            if t.weights.len() != SLOTS_PER_DAY {
                return bad("template vectors need 96 slots");
            }
            if t.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return bad("template weights must be non-negative");
            }
        }
        self.appliances
            .iter()
            .try_for_each(AppliancePattern::validate)
    }

    pub fn appliance_names(&self) -> Vec<&str> {
        self.appliances.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let persona: Self =
            serde_json::from_str(text).map_err(|e| SimError::InvalidPersona(e.to_string()))?;
        persona.validate()?;
        Ok(persona)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// No burst activity between `from_slot` (28) and `to_slot` (48).
    AbsenceMorning,
    /// Morning bursts (those starting before `until_slot`, 44) move `shift_slots` (12) later.
    ShiftedMorning,
    /// An oven bake from `start_slot` (74) for `minutes` (90), then the dishwasher if owned.
    EveningBaking,
    /// Only duty-cycled and standby loads run.
    FullAbsence,
}

impl AnomalyKind {
    pub fn label(&self) -> &'static str {
        match self {
            AnomalyKind::AbsenceMorning => "absence-morning",
            AnomalyKind::ShiftedMorning => "shifted-morning",
            AnomalyKind::EveningBaking => "evening-baking",
            AnomalyKind::FullAbsence => "full-absence",
        }
    }
}

impl std::fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScript {
    pub kind: AnomalyKind,
    pub day: NaiveDate,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl AnomalyScript {
    pub fn new(kind: AnomalyKind, day: NaiveDate) -> Self {
        Self {
            kind,
            day,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    pub(crate) fn param(&self, name: &str, default: f64) -> f64 {
        self.parameters.get(name).copied().unwrap_or(default)
    }
}

/// Simulation result: register readings on every 15-minute boundary and the
/// label of every simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub meter_id: String,
    pub start: NaiveDate,
    pub n_days: usize,
    pub readings: Vec<MeterReading>,
    /// Mean power the simulator applied in each interval between readings.
    pub slot_power_w: Vec<f64>,
    pub truth_labels: BTreeMap<NaiveDate, String>,
}
