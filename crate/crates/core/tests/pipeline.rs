use std::io::BufReader;
use std::path::Path;

use ampscope::detect::{self, DetectorConfig};
use ampscope::selectors::{MisusedNameList, SelectorId};
use ampscope::synth::{self, ScenarioConfig};
use ampscope::trace::{self, TraceMeta};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scenario() -> ScenarioConfig {
    ScenarioConfig::from_toml(&std::fs::read_to_string(fixture("scenario.toml")).unwrap()).unwrap()
}

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["ampscope"];
    v.extend_from_slice(args);
    ampscope::cli::run(v)
}

#[test]
fn generated_trace_round_trips() {
    let s = synth::generate_scenario(&scenario()).unwrap();
    let mut buf = Vec::new();
    trace::write_trace(&mut buf, &s.trace).unwrap();
    let meta = TraceMeta::with_sampling(s.truth.sampling_denominator);
    let parsed = trace::parse_trace(BufReader::new(&buf[..]), &meta).unwrap();
    assert_eq!(parsed.skipped, 0);
    assert_eq!(parsed.records, s.trace);
    let clean = trace::sanitize(parsed.records);
    assert_eq!(clean.dropped_packets, 0);
}

#[test]
fn fixture_scenario_detects_most_attacks() {
    let s = synth::generate_scenario(&scenario()).unwrap();
    let names = MisusedNameList::from_names(s.truth.attack_qnames(), SelectorId::GroundTruth);
    let stats = detect::aggregate_client_days(&s.trace, &names);
    let meta = TraceMeta::with_sampling(s.truth.sampling_denominator);
    let events = detect::detect_attacks(&stats, &s.trace, &names, &DetectorConfig::default(), &meta).unwrap();
    let planted: std::collections::BTreeSet<_> = s.truth.attacks.iter().map(|a| (a.victim_ip, a.day)).collect();
    assert!(events.iter().all(|e| planted.contains(&(e.victim_ip, e.day))));
    assert!(events.len() * 10 >= planted.len() * 8);
}

#[test]
fn same_seed_same_scenario() {
    let a = synth::generate_scenario(&scenario()).unwrap();
    let b = synth::generate_scenario(&scenario()).unwrap();
    assert_eq!(a, b);
    let mut other = scenario();
    other.seed += 1;
    assert_ne!(synth::generate_scenario(&other).unwrap().trace, a.trace);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["--version"]), 0);
    assert_eq!(cli(&["detect", "--help"]), 0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["detect", "--no-such-flag"]), 2);
    assert_eq!(cli(&["detect", "--share-threshold", "lots"]), 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["detect", "--out", dir.path().to_str().unwrap()]), 2);
    assert_eq!(cli(&["--threads", "0", "report", "--out", dir.path().to_str().unwrap()]), 2);
}

#[test]
fn processing_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = dir.path().join("absent.jsonl");
    assert_eq!(cli(&["ingest", "--trace", missing.to_str().unwrap(), "--out", out]), 1);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "unknown_key = 3\n").unwrap();
    assert_eq!(cli(&["ingest", "--config", bad.to_str().unwrap(), "--out", out]), 1);
    std::fs::write(&bad, "seed = 1\nduration_days = 0\n").unwrap();
    assert_eq!(cli(&["synth", "--config", bad.to_str().unwrap(), "--out", out]), 1);
}

#[test]
fn config_file_supplies_paths_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["synth", "--config", fixture("scenario.toml").to_str().unwrap(), "--out", out]), 0);
    let cfg = dir.path().join("pipeline.toml");
    std::fs::write(
        &cfg,
        format!("trace = {:?}\nout = {:?}\nsampling = 16000\n", dir.path().join("trace.jsonl"), dir.path().join("ing")),
    )
    .unwrap();
    assert_eq!(cli(&["ingest", "--config", cfg.to_str().unwrap()]), 0);
    assert!(dir.path().join("ing/trace.jsonl").exists());
    let other = dir.path().join("ing2");
    assert_eq!(cli(&["ingest", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap()]), 0);
    assert!(other.join("ingest.json").exists());
}

#[test]
fn estimate_fixture_finds_the_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli(&[
        "estimate",
        "--records",
        fixture("records.jsonl").to_str().unwrap(),
        "--reference-names",
        "example.gov.",
        "--out",
        out,
    ]);
    assert_eq!(code, 0);
    let plateaus = std::fs::read_to_string(dir.path().join("plateaus.jsonl")).unwrap();
    assert_eq!(plateaus.lines().count(), 1);
    assert!(plateaus.contains("zone.example.edu."));
}
