use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use enwell_core::analytics::{adjusted_rand_index, write_profiles_csv};
use enwell_core::pipeline::{analyze_meter, AnalysisConfig, MeterAnalysis};
use enwell_core::sim::{
    build_persona, default_scripts, simulate_period, AnomalyScript, HouseholdPersona, SimError,
    SimOutput,
};
use enwell_core::store::{
    parse_ndjson, read_readings_csv, write_readings_csv, MeterReading, StoreStats, TelemetryStore,
};
use serde::{Deserialize, Serialize};

use crate::charts;
use crate::config::RunConfig;
use crate::UsageError;

pub const STORE_FILE: &str = "readings.ndjson";

/// Ground truth written next to each simulated readings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub meter_id: String,
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub labels: BTreeMap<NaiveDate, String>,
    pub scripts: Vec<AnomalyScript>,
}

pub enum ScriptSource {
    Defaults,
    None,
    /// Scripts keyed by persona id.
    File(BTreeMap<String, Vec<AnomalyScript>>),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, UsageError> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid {}: {e}", path.display())))
}

/// Reads readings CSV, or NDJSON when the extension is `.ndjson` or `.jsonl`.
pub fn read_readings(path: &Path) -> Result<Vec<MeterReading>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim().is_empty() {
        bail!("no readings in {}", path.display());
    }
    let ndjson = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("ndjson" | "jsonl")
    );
    let readings = if ndjson {
        parse_ndjson(&text)
    } else {
        read_readings_csv(text.as_bytes())
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    if readings.is_empty() {
        bail!("no readings in {}", path.display());
    }
    Ok(readings)
}

pub fn open_store(data_dir: &Path) -> Result<TelemetryStore> {
    create_dir(data_dir)?;
    let path = data_dir.join(STORE_FILE);
    TelemetryStore::open(&path).with_context(|| format!("opening store {}", path.display()))
}

fn sim_error(e: SimError) -> anyhow::Error {
    match e {
        SimError::UnknownPersona(_)
        | SimError::InvalidPersona(_)
        | SimError::ScriptOutsidePeriod { .. }
        | SimError::EmptyPeriod => UsageError(e.to_string()).into(),
        other => other.into(),
    }
}

pub fn simulate_personas(
    config: &RunConfig,
    personas: &[HouseholdPersona],
    scripts: &ScriptSource,
) -> Result<Vec<(SimOutput, Vec<AnomalyScript>)>> {
    personas
        .iter()
        .map(|p| {
            let scripts = match scripts {
                ScriptSource::Defaults => default_scripts(&p.id, config.start, config.days),
                ScriptSource::None => Vec::new(),
                ScriptSource::File(map) => map.get(&p.id).cloned().unwrap_or_default(),
            };
            let sim = simulate_period(p, config.start, config.days, &scripts, config.seed)
                .map_err(sim_error)?;
            Ok((sim, scripts))
        })
        .collect()
}

fn write_simulation(
    dir: &Path,
    config: &RunConfig,
    sim: &SimOutput,
    scripts: &[AnomalyScript],
) -> Result<PathBuf> {
    create_dir(dir)?;
    let csv_path = dir.join(format!("{}.csv", sim.meter_id));
    let file =
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_readings_csv(std::io::BufWriter::new(file), &sim.readings)?;
    let truth = TruthFile {
        meter_id: sim.meter_id.clone(),
        start: config.start,
        days: config.days,
        seed: config.seed,
        labels: sim.truth_labels.clone(),
        scripts: scripts.to_vec(),
    };
    write_json(&dir.join(format!("{}_truth.json", sim.meter_id)), &truth)?;
    Ok(csv_path)
}

pub fn resolve_personas(
    config: &RunConfig,
    persona_file: Option<&Path>,
) -> Result<Vec<HouseholdPersona>> {
    if let Some(path) = persona_file {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        let persona = HouseholdPersona::from_json(&text).map_err(sim_error)?;
        return Ok(vec![persona]);
    }
    config
        .personas
        .iter()
        .map(|id| build_persona(id).map_err(sim_error))
        .collect()
}

pub fn simulate(
    config: &RunConfig,
    persona_file: Option<&Path>,
    scripts: &ScriptSource,
) -> Result<()> {
    let personas = resolve_personas(config, persona_file)?;
    for (sim, scripts) in simulate_personas(config, &personas, scripts)? {
        let path = write_simulation(&config.out_dir, config, &sim, &scripts)?;
        println!(
            "{}: {} readings -> {}",
            sim.meter_id,
            sim.readings.len(),
            path.display()
        );
    }
    Ok(())
}

pub fn ingest(data_dir: &Path, files: &[PathBuf]) -> Result<()> {
    let mut store = open_store(data_dir)?;
    let mut total = StoreStats::default();
    for file in files {
        let readings = read_readings(file)?;
        let delta = store
            .ingest(readings)
            .with_context(|| format!("ingesting {}", file.display()))?;
        println!("{}", serde_json::json!({ "file": file, "stats": delta }));
        total += delta;
    }
    println!(
        "{}",
        serde_json::json!({ "total": total, "store": store.stats() })
    );
    Ok(())
}

/// Writes every artifact for one analyzed meter into `dir`.
pub fn write_analysis(dir: &Path, analysis: &MeterAnalysis, config: &AnalysisConfig) -> Result<()> {
    create_dir(dir)?;
    let profiles_path = dir.join("profiles.csv");
    let file = fs::File::create(&profiles_path)
        .with_context(|| format!("creating {}", profiles_path.display()))?;
    write_profiles_csv(&analysis.profiles, std::io::BufWriter::new(file))?;
    write_json(&dir.join("excluded_days.json"), &analysis.excluded)?;
    write_json(&dir.join("model.json"), &analysis.model)?;
    if let Some(selection) = &analysis.selection {
        write_json(&dir.join("kselection.json"), selection)?;
    }
    write_json(&dir.join("clusters.json"), &analysis.summary)?;
    write_json(&dir.join("anomalies.json"), &analysis.anomalies)?;
    fs::write(
        dir.join("clusters.svg"),
        charts::cluster_chart(&analysis.model, &analysis.profiles),
    )?;
    fs::write(
        dir.join("anomalies.svg"),
        charts::anomaly_chart(
            &analysis.model,
            &analysis.profiles,
            &analysis.anomalies,
            config.top_n,
        ),
    )?;
    Ok(())
}

fn print_analysis(a: &MeterAnalysis, top_n: usize) {
    let recommended = a
        .selection
        .as_ref()
        .map_or("n/a".to_string(), |s| s.recommended_k.to_string());
    println!(
        "{}: {} profiles ({} excluded), k = {} (recommended {recommended}), cluster sizes {:?}",
        a.meter_id,
        a.profiles.len(),
        a.excluded.len(),
        a.model.k,
        a.model.cluster_sizes(),
    );
    for day in a.anomalies.top(top_n) {
        let flag = if a.anomalies.flagged.contains(day) {
            " flagged"
        } else {
            ""
        };
        println!("  {day}: {:.0} W{flag}", a.anomalies.scores[day]);
    }
}

pub fn analyze(
    store: &TelemetryStore,
    meter: Option<&str>,
    out_dir: &Path,
    config: &AnalysisConfig,
) -> Result<Vec<MeterAnalysis>> {
    if store.is_empty() {
        bail!("no readings");
    }
    let meters = match meter {
        Some(m) => vec![m.to_string()],
        None => store.meters(),
    };
    let mut analyses = Vec::new();
    for meter_id in meters {
        let analysis = analyze_meter(store, &meter_id, config)
            .with_context(|| format!("analyzing meter {meter_id}"))?;
        write_analysis(&out_dir.join(&meter_id), &analysis, config)?;
        print_analysis(&analysis, config.top_n);
        analyses.push(analysis);
    }
    let models: Vec<_> = analyses.iter().map(|a| &a.model).collect();
    fs::write(
        out_dir.join("centroids.svg"),
        charts::centroid_chart(&models),
    )?;
    Ok(analyses)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedDay {
    pub day: NaiveDate,
    pub score_w: f64,
    pub flagged: bool,
    pub truth: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStudyEntry {
    pub meter_id: String,
    pub profiles: usize,
    pub k: usize,
    pub recommended_k: Option<usize>,
    pub cluster_sizes: Vec<usize>,
    pub most_populated: usize,
    /// Agreement between the model's clusters and the simulator's day labels.
    pub adjusted_rand_index: f64,
    pub top_days: Vec<RankedDay>,
}

pub fn casestudy(config: &RunConfig) -> Result<Vec<CaseStudyEntry>> {
    let personas = resolve_personas(config, None)?;
    let mut entries = Vec::new();
    let mut analyses = Vec::new();
    for (sim, scripts) in simulate_personas(config, &personas, &ScriptSource::Defaults)? {
        write_simulation(&config.out_dir.join("sim"), config, &sim, &scripts)?;
        let mut store = TelemetryStore::in_memory();
        store.ingest(sim.readings.clone())?;
        let analysis = analyze_meter(&store, &sim.meter_id, &config.analysis)
            .with_context(|| format!("analyzing meter {}", sim.meter_id))?;
        write_analysis(
            &config.out_dir.join(&sim.meter_id),
            &analysis,
            &config.analysis,
        )?;
        print_analysis(&analysis, config.analysis.top_n);

        let days: Vec<NaiveDate> = analysis.profiles.iter().map(|p| p.day).collect();
        let truth: Vec<&String> = days.iter().map(|d| &sim.truth_labels[d]).collect();
        let found: Vec<usize> = days.iter().map(|d| analysis.model.assignments[d]).collect();
        entries.push(CaseStudyEntry {
            meter_id: sim.meter_id.clone(),
            profiles: analysis.profiles.len(),
            k: analysis.model.k,
            recommended_k: analysis.selection.as_ref().map(|s| s.recommended_k),
            cluster_sizes: analysis.model.cluster_sizes(),
            most_populated: analysis.summary.most_populated,
            adjusted_rand_index: adjusted_rand_index(&truth, &found),
            top_days: analysis
                .anomalies
                .top(config.analysis.top_n)
                .iter()
                .map(|d| RankedDay {
                    day: *d,
                    score_w: analysis.anomalies.scores[d],
                    flagged: analysis.anomalies.flagged.contains(d),
                    truth: sim.truth_labels[d].clone(),
                })
                .collect(),
        });
        analyses.push(analysis);
    }
    let models: Vec<_> = analyses.iter().map(|a| &a.model).collect();
    fs::write(
        config.out_dir.join("centroids.svg"),
        charts::centroid_chart(&models),
    )?;
    write_json(&config.out_dir.join("casestudy.json"), &entries)?;
    for e in &entries {
        let labels: Vec<String> = e
            .top_days
            .iter()
            .map(|d| format!("{} {}", d.day, d.truth))
            .collect();
        println!(
            "{}: ARI {:.3}; top days: {}",
            e.meter_id,
            e.adjusted_rand_index,
            labels.join(", ")
        );
    }
    Ok(entries)
}
