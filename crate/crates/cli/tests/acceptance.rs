//! Acceptance run: every criterion prints one PASS/FAIL line, then the test
//! fails if any criterion did.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{Days, NaiveDate};
use enwell_cli::config::FileConfig;
use enwell_cli::service::{router, AppState};
use enwell_core::analytics::{
    adjusted_rand_index, anomaly_scores, kmeans_fit, kmeans_restart, DailyProfile, KMeansOptions,
};
use enwell_core::pipeline::{analyze_meter, AnalysisConfig, KChoice};
use enwell_core::protocol::{
    encode_readout, parse_readout, DataLine, IdentificationMessage, ObisCode, ProtocolError, Unit,
};
use enwell_core::sim::{build_persona, default_scripts, simulate_period, SimOutput};
use enwell_core::store::{
    register_delta, to_ndjson, write_readings_csv, MeterReading, TelemetryStore,
};
use http_body_util::BodyExt;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::ToPrimitive;
use tower::ServiceExt;

const SEEDS: std::ops::Range<u64> = 1..21;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 6, 19).unwrap()
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn check(id: usize, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let mut o = f();
    let elapsed = t.elapsed();
    if let Some(limit) = budget {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!("; exceeded {limit:?}"));
        }
    }
    // Written to the stderr handle directly so the line survives output capture.
    let line = format!(
        "criterion {id}: {} {} ({:.2}s)\n",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    o.pass
}

fn data_line() -> impl Strategy<Value = DataLine> {
    (
        (0u8..=99, 0u8..=99, 0u8..=99).prop_map(|(c, q, t)| ObisCode::new(c, q, t).unwrap()),
        "[ -'+-~&&[^()*]]{0,16}",
        prop_oneof![Just(Unit::Kwh), Just(Unit::Kvarh), Just(Unit::None)],
    )
        .prop_map(|(address, value, unit)| DataLine::new(address, value, unit))
}

fn protocol() -> Outcome {
    let lines = prop::collection::vec(data_line(), 0..12);
    let round_trip = runner(10_000).run(&lines, |lines| {
        let bytes = encode_readout(&lines).unwrap();
        prop_assert_eq!(parse_readout(&bytes).unwrap().lines, lines);
        Ok(())
    });
    let fuzz = runner(10_000).run(&prop::collection::vec(any::<u8>(), 0..512), |bytes| {
        let _ = parse_readout(&bytes);
        let _ = IdentificationMessage::parse(&bytes);
        Ok(())
    });

    let mut gen = runner(1);
    let frame_lines = prop::collection::vec(data_line(), 1..8);
    let mut corruptions = 0u64;
    let mut missed = 0u64;
    for _ in 0..1000 {
        let bytes = encode_readout(&frame_lines.new_tree(&mut gen).unwrap().current()).unwrap();
        // Body: everything strictly between STX and ETX.
        for i in 1..bytes.len() - 2 {
            let mut corrupt = bytes.clone();
            for flip in 1..=255u8 {
                corrupt[i] = bytes[i] ^ flip;
                corruptions += 1;
                if !matches!(
                    parse_readout(&corrupt),
                    Err(ProtocolError::ChecksumMismatch { .. })
                ) {
                    missed += 1;
                }
            }
        }
    }
    outcome(
        round_trip.is_ok() && fuzz.is_ok() && missed == 0,
        format!(
            "round-trip {}, fuzz {}, {corruptions} corruptions with {missed} not reported as checksum mismatch",
            if round_trip.is_ok() { "ok" } else { "failed" },
            if fuzz.is_ok() { "ok" } else { "failed" },
        ),
    )
}

fn simulate(id: &str, seed: u64, scripted: bool) -> SimOutput {
    let scripts = if scripted {
        default_scripts(id, start(), 30)
    } else {
        Vec::new()
    };
    simulate_period(&build_persona(id).unwrap(), start(), 30, &scripts, seed).unwrap()
}

fn store_of(sim: &SimOutput) -> TelemetryStore {
    let mut store = TelemetryStore::in_memory();
    store.ingest(sim.readings.clone()).unwrap();
    store
}

fn conservation() -> Outcome {
    let mut worst = 0.0f64;
    let mut slots = 0;
    for id in ["S1", "S2", "S3", "S4"] {
        let sim = simulate(id, 42, true);
        let store = store_of(&sim);
        let r = &sim.readings;
        let power = store.mean_power_series(
            id,
            ObisCode::POSITIVE_ACTIVE,
            r[0].timestamp,
            r[r.len() - 1].timestamp,
        );
        if power.len() != r.len() - 1 {
            return outcome(
                false,
                format!(
                    "{id}: {} samples for {} intervals",
                    power.len(),
                    r.len() - 1
                ),
            );
        }
        let mut total_energy = 0.0;
        for (i, sample) in power.iter().enumerate() {
            let delta = register_delta(r[i].value_kwh, r[i + 1].value_kwh)
                .unwrap()
                .to_f64()
                .unwrap();
            let energy = sample.mean_power_w.unwrap() * 0.25 / 1000.0;
            total_energy += energy;
            worst = worst.max((energy - delta).abs());
            slots += 1;
        }
        let register_total = register_delta(r[0].value_kwh, r[r.len() - 1].value_kwh)
            .unwrap()
            .to_f64()
            .unwrap();
        worst = worst.max((total_energy - register_total).abs() / power.len() as f64);
    }
    outcome(
        worst <= 0.001,
        format!("{slots} slots, worst per-slot error {worst:.2e} kWh"),
    )
}

fn fixed_k(k: usize, seed: u64) -> AnalysisConfig {
    let mut cfg = AnalysisConfig {
        k: KChoice::Fixed(k),
        ..AnalysisConfig::default()
    };
    cfg.kmeans.seed = seed;
    cfg
}

fn cluster_recovery() -> Outcome {
    let mut ari_ok = 0;
    let mut k_ok = 0;
    let mut worst_ari = f64::INFINITY;
    for seed in SEEDS {
        let sim = simulate("S4", seed, false);
        let a = analyze_meter(&store_of(&sim), "S4", &fixed_k(3, seed)).unwrap();
        let truth: Vec<&String> = a
            .profiles
            .iter()
            .map(|p| &sim.truth_labels[&p.day])
            .collect();
        let found: Vec<usize> = a
            .profiles
            .iter()
            .map(|p| a.model.assignments[&p.day])
            .collect();
        let ari = adjusted_rand_index(&truth, &found);
        worst_ari = worst_ari.min(ari);
        ari_ok += usize::from(ari >= 0.9);
        k_ok += usize::from(a.selection.unwrap().recommended_k == 3);
    }
    outcome(
        ari_ok >= 18 && k_ok >= 18,
        format!(
            "S4: ARI >= 0.9 in {ari_ok}/20 (min {worst_ari:.3}), recommended k = 3 in {k_ok}/20"
        ),
    )
}

fn degenerate_persona() -> Outcome {
    let mut ks = Vec::new();
    for seed in SEEDS {
        let sim = simulate("S3", seed, false);
        let a = analyze_meter(&store_of(&sim), "S3", &fixed_k(3, seed)).unwrap();
        ks.push(a.selection.unwrap().recommended_k);
    }
    let ok = ks.iter().filter(|&&k| k <= 2).count();
    outcome(
        ok >= 18,
        format!("S3: recommended k <= 2 in {ok}/20 {ks:?}"),
    )
}

fn anomaly_recovery() -> Outcome {
    let scripts = default_scripts("S1", start(), 30);
    let mut top = vec![0; scripts.len()];
    let mut flagged = vec![0; scripts.len()];
    for seed in SEEDS {
        let sim = simulate("S1", seed, true);
        let a = analyze_meter(&store_of(&sim), "S1", &fixed_k(3, seed)).unwrap();
        for (i, s) in scripts.iter().enumerate() {
            top[i] += usize::from(a.anomalies.top(3).contains(&s.day));
            flagged[i] += usize::from(a.anomalies.flagged.contains(&s.day));
        }
    }
    let summary: Vec<String> = scripts
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{} top-3 {}/20 flagged {}/20", s.kind, top[i], flagged[i]))
        .collect();
    outcome(
        scripts.len() == 3 && top.iter().all(|&n| n >= 19) && flagged.iter().all(|&n| n >= 17),
        format!("S1: {}", summary.join(", ")),
    )
}

/// Minimum SSE over every labeling of `points` into at most `k` groups.
fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sse = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| labels[i] == c)
                .map(|i| &points[i])
                .collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..points[0].len() {
                let mean = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                sse += members.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>();
            }
        }
        best = best.min(sse);
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn day(i: usize) -> NaiveDate {
    start() + Days::new(i as u64)
}

fn kmeans_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut matched = 0;
    let mut non_monotone = 0;
    let mut steps = 0;
    for instance in 0..200 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=3usize.min(n));
        // Alternate low-dimensional patterns tiled to 96 slots with free 96-slot vectors.
        let period = if instance % 2 == 0 {
            rng.random_range(1..=3)
        } else {
            96
        };
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let base: Vec<f64> = (0..period).map(|_| rng.random_range(0.0..1000.0)).collect();
                base.iter().cycle().take(96).copied().collect()
            })
            .collect();
        let profiles: Vec<DailyProfile> = points
            .iter()
            .enumerate()
            .map(|(i, v)| DailyProfile::new("m", day(i), v.clone()))
            .collect();
        let options = KMeansOptions {
            restarts: 50,
            ..KMeansOptions::with_seed(instance)
        };
        let model = kmeans_fit(&profiles, k, &options).unwrap();
        let optimum = brute_force_inertia(&points, k);
        if (model.inertia - optimum).abs() <= 1e-9 * optimum.max(f64::MIN_POSITIVE)
            || model.inertia == optimum
        {
            matched += 1;
        }
        for r in 0..options.restarts {
            let fit = kmeans_restart(&points, k, &options, r).unwrap();
            for w in fit.trace.windows(2) {
                steps += 1;
                non_monotone += usize::from(w[1] > w[0] * (1.0 + 1e-12));
            }
        }
    }
    outcome(
        matched == 200 && non_monotone == 0,
        format!("{matched}/200 at brute-force optimum; {non_monotone} of {steps} recorded steps increased inertia"),
    )
}

fn reading_series(increments: &[u64], start_milli: u64) -> Vec<MeterReading> {
    let t0 = chrono::TimeZone::with_ymd_and_hms(&chrono::Utc, 2024, 6, 10, 22, 0, 0).unwrap();
    let mut value = start_milli;
    let mut out = vec![MeterReading::from_milli("m", t0, value)];
    for (i, inc) in increments.iter().enumerate() {
        value += inc;
        out.push(MeterReading::from_milli(
            "m",
            t0 + chrono::Duration::minutes(15 * (i as i64 + 1)),
            value % 1_000_000_000,
        ));
    }
    out
}

fn clustered_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (
        prop::collection::vec(prop::collection::vec(0.0f64..2000.0, 96), 1..4),
        prop::collection::vec(
            (
                any::<prop::sample::Index>(),
                prop::collection::vec(-150.0f64..150.0, 96),
            ),
            6..20,
        ),
    )
        .prop_map(|(shapes, members)| {
            members
                .into_iter()
                .map(|(which, noise)| {
                    which
                        .get(&shapes)
                        .iter()
                        .zip(noise)
                        .map(|(b, e)| (b + e).max(0.0))
                        .collect()
                })
                .collect()
        })
}

fn to_profiles(rows: &[Vec<f64>]) -> Vec<DailyProfile> {
    rows.iter()
        .enumerate()
        .map(|(i, v)| DailyProfile::new("m", day(i), v.clone()))
        .collect()
}

fn invariant_suite() -> Outcome {
    let increments = prop::collection::vec(0u64..800, 1..60);
    let idempotent = runner(1000).run(
        &(increments.clone(), any::<prop::sample::Index>()),
        |(incs, split)| {
            let readings = reading_series(&incs, 5_000);
            let mut store = TelemetryStore::in_memory();
            store
                .ingest(readings[..split.index(readings.len())].to_vec())
                .unwrap();
            store.ingest(readings.clone()).unwrap();
            let before = store.readings();
            let delta = store.ingest(readings.clone()).unwrap();
            prop_assert_eq!(delta.readings_accepted, 0);
            prop_assert_eq!(store.readings(), before);
            Ok(())
        },
    );
    let order = runner(1000).run(&(increments, any::<u64>()), |(incs, perm)| {
        use rand::seq::SliceRandom;
        let readings = reading_series(&incs, 999_990_000);
        let mut shuffled = readings.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm));
        let mut a = TelemetryStore::in_memory();
        a.ingest(readings).unwrap();
        let mut b = TelemetryStore::in_memory();
        for chunk in shuffled.chunks(7) {
            b.ingest(chunk.to_vec()).unwrap();
        }
        prop_assert_eq!(a.readings(), b.readings());
        Ok(())
    });
    let scale = runner(1000).run(
        &(
            clustered_rows(),
            1usize..=4,
            any::<u64>(),
            prop::sample::select(vec![0.5, 3.0]),
        ),
        |(rows, k, seed, c)| {
            let profiles = to_profiles(&rows);
            let scaled: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|v| v * c).collect())
                .collect();
            let scaled = to_profiles(&scaled);
            let options = KMeansOptions::with_seed(seed);
            let m = kmeans_fit(&profiles, k, &options).unwrap();
            let ms = kmeans_fit(&scaled, k, &options).unwrap();
            prop_assert_eq!(&m.assignments, &ms.assignments);
            for (a, b) in m
                .centroids
                .iter()
                .flatten()
                .zip(ms.centroids.iter().flatten())
            {
                prop_assert!((a * c - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            let r = anomaly_scores(&m, &profiles).unwrap();
            let rs = anomaly_scores(&ms, &scaled).unwrap();
            for (d, s) in &r.scores {
                prop_assert!((s * c - rs.scores[d]).abs() <= 1e-9 * rs.scores[d].max(1.0));
            }
            prop_assert_eq!(&r.ranked_days, &rs.ranked_days);
            prop_assert_eq!(&r.flagged, &rs.flagged);
            Ok(())
        },
    );
    let permutation = runner(1000).run(
        &(clustered_rows(), any::<u64>(), 0usize..20),
        |(rows, seed, rotate)| {
            let profiles = to_profiles(&rows);
            let model = kmeans_fit(&profiles, 2, &KMeansOptions::with_seed(seed)).unwrap();
            let mut permuted = profiles.clone();
            permuted.reverse();
            let len = permuted.len();
            permuted.rotate_left(rotate % len);
            prop_assert_eq!(
                anomaly_scores(&model, &profiles).unwrap(),
                anomaly_scores(&model, &permuted).unwrap()
            );
            Ok(())
        },
    );
    let results = [
        (
            "idempotent ingestion",
            idempotent.map_err(|e| e.to_string()),
        ),
        ("order independence", order.map_err(|e| e.to_string())),
        ("scale equivariance", scale.map_err(|e| e.to_string())),
        (
            "permutation independence",
            permutation.map_err(|e| e.to_string()),
        ),
    ];
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "4 properties x 1000 cases".to_string()
        } else {
            failed.join("; ")
        },
    )
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn cli_report(dir: &Path, sim: &SimOutput) -> serde_json::Value {
    let csv = dir.join(format!("{}.csv", sim.meter_id));
    write_readings_csv(std::fs::File::create(&csv).unwrap(), &sim.readings).unwrap();
    let out = dir.join("analysis");
    let status = Command::new(env!("CARGO_BIN_EXE_enwell"))
        .arg("--data-dir")
        .arg(dir)
        .args(["analyze", "--input"])
        .arg(&csv)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(out.join(&sim.meter_id).join("anomalies.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn service_equivalence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let defaults = FileConfig::default()
        .resolve(dir.path().into())
        .unwrap()
        .analysis;
    let app = router(AppState::new(TelemetryStore::in_memory(), defaults));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut same = BTreeSet::new();
    let mut differ = BTreeSet::new();
    for id in ["S1", "S2", "S3", "S4"] {
        let sim = simulate(id, 42, true);
        let from_cli = cli_report(dir.path(), &sim);
        let from_service = rt.block_on(async {
            let post = Request::post("/v1/readings")
                .body(Body::from(to_ndjson(&sim.readings)))
                .unwrap();
            let (status, _) = call(&app, post).await;
            assert_eq!(status, StatusCode::OK);
            let get = Request::get(format!("/v1/meters/{id}/anomalies"))
                .body(Body::empty())
                .unwrap();
            let (status, body) = call(&app, get).await;
            assert_eq!(status, StatusCode::OK);
            body
        });
        if from_cli == from_service {
            same.insert(id);
        } else {
            differ.insert(id);
        }
    }
    outcome(
        differ.is_empty(),
        format!("identical AnomalyReport JSON for {same:?}, differing for {differ:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    let results = [
        check(1, Some(Duration::from_secs(30)), protocol),
        check(2, Some(Duration::from_secs(10)), conservation),
        check(3, Some(Duration::from_secs(60)), cluster_recovery),
        check(4, None, degenerate_persona),
        check(5, None, anomaly_recovery),
        check(6, None, kmeans_oracle),
        check(7, None, invariant_suite),
        check(8, None, service_equivalence),
    ];
    let failed: Vec<usize> = (1..=8).filter(|i| !results[i - 1]).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
