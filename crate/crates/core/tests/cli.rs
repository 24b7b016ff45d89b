mod common;

use std::fs;
use std::path::Path;

use memsim::dataset::read_dataset;
use memsim::hintgen::QaType;

use common::cli;

const LONE: &str = r#"
entities:
  self self "User"
attributes:
  self.age "Age" int_range 18 80
  self.hometown "Hometown" categorical ["Beijing", "Shanghai"]
edges:
cpds:
  cpd self.age: uniform
  cpd self.hometown: uniform
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "--seed", "11", "--out", s(&out)];
    args.extend_from_slice(extra);
    let (code, _) = cli(&args);
    assert_eq!(code, 0, "{args:?}");
    out
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["frobnicate"]).0, 1);
    assert_eq!(cli(&["mix", "--eta", "3"]).0, 1);
    assert_eq!(cli(&["generate", "--count", "simple=lots"]).0, 1);
    assert_eq!(cli(&["--help"]).0, 0);
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.schema");
    fs::write(&bad, LONE.replace("edges:", "edges:\n  self.age -> self.hometown\n  self.hometown -> self.age")).unwrap();
    assert_eq!(cli(&["validate", "--schema", s(&bad)]).0, 2);
    assert_eq!(cli(&["validate"]).0, 0);
    let (code, text) = cli(&["validate", "--schema", s(&dir.path().join("nope.schema"))]);
    assert_eq!((code, text.as_str()), (3, ""));
}

#[test]
fn missing_structure_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("lone.schema");
    fs::write(&schema, LONE).unwrap();
    let out = dir.path().join("out");
    let base = ["generate", "--seed", "1", "--schema", s(&schema), "--out", s(&out)];
    assert_eq!(cli(&[&base[..], &["--count", "comparative=2"]].concat()).0, 3);
    assert_eq!(cli(&[&base[..], &["--count", "simple=2"]].concat()).0, 0);
}

#[test]
fn every_type_gets_its_own_file() {
    let dir = tempfile::tempdir().unwrap();
    let counts: Vec<String> = QaType::ALL.iter().map(|t| format!("{}=2", t.split_name())).collect();
    let extra: Vec<&str> = counts.iter().flat_map(|c| ["--count", c.as_str()]).collect();
    let out = generate(dir.path(), "ds", &extra);
    for t in QaType::ALL {
        assert!(out.join(format!("{}.jsonl", t.split_name())).exists());
        assert!(out.join(format!("{}.debug.jsonl", t.split_name())).exists());
    }
    assert!(out.join("manifest.json").exists() && out.join("generation_report.json").exists());
    assert_eq!(read_dataset(&out).unwrap().len(), 12);
}

#[test]
fn audit_flags_corruption_and_missing_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), "ds", &["--count", "simple=3", "--count", "comparative=3"]);
    let (code, text) = cli(&["audit", "--dataset", s(&out)]);
    assert_eq!(code, 0, "{text}");

    // swap the correct letter on one trajectory
    let path = out.join("comparative.jsonl");
    let body = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<serde_json::Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let letter = lines[1]["correct_choice"].as_str().unwrap().to_string();
    lines[1]["correct_choice"] = (if letter == "A" { "B" } else { "A" }).into();
    fs::write(&path, lines.iter().map(|v| v.to_string() + "\n").collect::<String>()).unwrap();
    let (code, text) = cli(&["audit", "--dataset", s(&out)]);
    assert_eq!(code, 2);
    let row = text.lines().find(|l| l.starts_with("comparative")).unwrap();
    assert!(row.contains("66.7"), "{row}");

    fs::remove_file(out.join("simple.debug.jsonl")).unwrap();
    assert_eq!(cli(&["audit", "--dataset", s(&out)]).0, 2);
}

#[test]
fn mix_stats_and_bench_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), "ds", &["--count", "simple=4", "--count", "conditional=4"]);
    let mixed = dir.path().join("mixed");
    assert_eq!(cli(&["mix", "--dataset", s(&out), "--out", s(&mixed), "--eta", "3", "--seed", "2"]).0, 0);
    let ds = read_dataset(&mixed).unwrap();
    assert_eq!(ds.eta.unwrap().value, 3);

    let (code, text) = cli(&["stats", "--dataset", s(&mixed), "--json"]);
    assert_eq!(code, 0);
    let stats: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(stats["total"]["trajectories"], 8);
    assert!(stats["swip"].as_f64().unwrap() > 0.0);

    let config = dir.path().join("bench.toml");
    fs::write(&config, "dataset = \"mixed\"\nout = \"results\"\n[bench]\nseed = 3\nmechanisms = [{ kind = \"full\" }, { kind = \"recent\", k = 5 }]\n").unwrap();
    let (code, text) = cli(&["bench", "--config", s(&config)]);
    assert_eq!(code, 0, "{text}");
    for f in ["report.txt", "report.json", "episodes.jsonl"] {
        assert!(dir.path().join("results").join(f).exists());
    }
    assert_eq!(fs::read_to_string(dir.path().join("results/episodes.jsonl")).unwrap().lines().count(), 16);

    fs::write(&config, "dataset = \"mixed\"\n[bench]\nseed = 3\nmechanisms = []\n").unwrap();
    assert_eq!(cli(&["bench", "--config", s(&config)]).0, 2);
    fs::write(&config, "dataset = \"mixed\"\n[bench]\nmechanisms = [{ kind = \"full\" }]\n").unwrap();
    assert_eq!(cli(&["bench", "--config", s(&config)]).0, 2);
}

#[test]
fn sample_profile_is_seeded() {
    let a = cli(&["sample-profile", "--seed", "5", "--count", "2", "--json"]);
    let b = cli(&["sample-profile", "--seed", "5", "--count", "2", "--json"]);
    assert_eq!(a.0, 0);
    assert_eq!(a, b);
    assert_ne!(a.1, cli(&["sample-profile", "--seed", "6", "--count", "2", "--json"]).1);
}
