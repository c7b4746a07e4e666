//! Shared inputs for the benchmarks.

use chrono::NaiveDate;
use enwell_core::sim::{build_persona, default_scripts, simulate_period, SimOutput};

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 6, 19).expect("valid date")
}

/// A 30-day run of a built-in persona with its default scripts.
pub fn month(persona: &str, seed: u64) -> SimOutput {
    let persona_def = build_persona(persona).expect("built-in persona");
    let scripts = default_scripts(persona, start(), 30);
    simulate_period(&persona_def, start(), 30, &scripts, seed).expect("valid period")
}
