use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spatialemb_core::{sef, Axis};

const SCENE: &str = r#"
channels = 8
duration_s = 1.0
seed = 5

[[source]]
role = "target"
delays = [0, 1, 2, 3, 4, 5, 6, 7]

[[source]]
role = "interferer"
delays = [0, -1.5, -3, -4.5, -6, -7.5, -9, -10.5]
snr_db = 0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spatialemb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulated 8-channel scene in a fresh directory.
fn scene_dir() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.toml");
    fs::write(&scene, SCENE).unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--scene", s(&scene), "--out-dir", s(&out)]);
    (dir, out)
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let (dir, a) = scene_dir();
    let b = dir.path().join("again");
    ok(&["simulate", "--scene", s(&dir.path().join("scene.toml")), "--out-dir", s(&b)]);
    for name in ["mixture.wav", "solo.wav", "mask.sef"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let mask = sef::read_feature(a.join("mask.sef")).unwrap();
    assert_eq!(mask.dims()[1], (Axis::Freq, 201));
}

#[test]
fn extract_writes_fixed_and_filter_bank_layouts() {
    let (dir, sim) = scene_dir();
    let (mix, solo) = (sim.join("mixture.wav"), sim.join("solo.wav"));
    let f1 = dir.path().join("lps.sef");
    ok(&["extract", "--mixture", s(&mix), "--solo", s(&solo), "--out", s(&f1)]);
    let t = sef::read_feature(&f1).unwrap();
    assert_eq!(t.dims()[0], (Axis::Channel, 9));
    assert_eq!(t.dims()[2], (Axis::Freq, 201));

    let f2 = dir.path().join("lfb.sef");
    ok(&["extract", "--mixture", s(&mix), "--solo", s(&solo), "--out", s(&f2), "--feature", "lfb80", "--solo-start-frame", "0"]);
    let t = sef::read_feature(&f2).unwrap();
    assert_eq!(t.dims()[2], (Axis::Bin, 80));
}

#[test]
fn missing_solo_is_a_usage_error_without_output() {
    let (dir, sim) = scene_dir();
    let out = dir.path().join("never.sef");
    let r = run(&[
        "extract",
        "--mixture",
        s(&sim.join("mixture.wav")),
        "--solo",
        s(&dir.path().join("nope.wav")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.starts_with("error class=SoloMissing message="), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_combination_fails_before_writing() {
    let (dir, sim) = scene_dir();
    let out = dir.path().join("never.sef");
    let r = run(&[
        "extract",
        "--mixture",
        s(&sim.join("mixture.wav")),
        "--solo",
        s(&sim.join("solo.wav")),
        "--out",
        s(&out),
        "--fusion",
        "dac",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("class="));
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2, "only scene.toml and sim/");
}

#[test]
fn flags_override_config_file() {
    let (dir, sim) = scene_dir();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[features]\nkind = \"lfb40\"\n").unwrap();
    let out = dir.path().join("f.sef");
    let (mix, solo) = (sim.join("mixture.wav"), sim.join("solo.wav"));
    let args = |extra: &[&str]| {
        let mut v = vec!["extract", "--config", s(&cfg), "--mixture", s(&mix)];
        v.extend(["--solo", s(&solo), "--out", s(&out)]);
        v.extend_from_slice(extra);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let a = args(&[]);
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(sef::read_feature(&out).unwrap().dims()[2], (Axis::Bin, 40));
    let b = args(&["--feature", "lfb80"]);
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(sef::read_feature(&out).unwrap().dims()[2], (Axis::Bin, 80));
}

#[test]
fn embed_is_deterministic_and_dac_passes_compare() {
    let (dir, sim) = scene_dir();
    let feats = dir.path().join("x.sef");
    let common = ["--topology", "expanded", "--fusion", "dac", "--seed", "9"];
    let (mix, solo) = (sim.join("mixture.wav"), sim.join("solo.wav"));
    let mut a = vec!["extract", "--mixture", s(&mix), "--solo", s(&solo)];
    a.extend(["--out", s(&feats)]);
    a.extend(common);
    ok(&a);
    let e1 = dir.path().join("e1.sef");
    let e2 = dir.path().join("e2.sef");
    for e in [&e1, &e2] {
        let mut args = vec!["embed", "--features", s(&feats), "--out", s(e), "--compare"];
        args.extend(common);
        let out = ok(&args);
        assert!(String::from_utf8_lossy(&out.stderr).contains("max diff"));
    }
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&e2).unwrap());
    let y = sef::read_feature(&e1).unwrap();
    assert_eq!(y.dims()[1], (Axis::Bin, 256));
}

#[test]
fn embed_rejects_features_of_the_wrong_size() {
    let (dir, sim) = scene_dir();
    let feats = dir.path().join("x.sef");
    ok(&["extract", "--mixture", s(&sim.join("mixture.wav")), "--solo", s(&sim.join("solo.wav")), "--out", s(&feats)]);
    let out = dir.path().join("e.sef");
    let r = run(&["embed", "--features", s(&feats), "--out", s(&out), "--feature", "lfb80"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("class=SpecMismatch"));
    assert!(!out.exists());
}

#[test]
fn batch_extract_runs_every_line() {
    let (dir, sim) = scene_dir();
    let list = dir.path().join("jobs.txt");
    let mut text = String::from("# mixture solo out\n");
    for i in 0..3 {
        text += &format!(
            "{} {} {}\n",
            s(&sim.join("mixture.wav")),
            s(&sim.join("solo.wav")),
            s(&dir.path().join(format!("o{i}.sef")))
        );
    }
    fs::write(&list, text).unwrap();
    ok(&["extract", "--list", s(&list), "--jobs", "2"]);
    let first = fs::read(dir.path().join("o0.sef")).unwrap();
    for i in 1..3 {
        assert_eq!(fs::read(dir.path().join(format!("o{i}.sef"))).unwrap(), first);
    }
}

#[test]
fn bench_emits_one_row_per_fusion() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    ok(&[
        "bench", "--out", s(&csv_path), "--topology", "expanded", "--fusions", "tac,dac", "--batch-seconds", "0.2",
        "--repeats", "3", "--mics", "4",
    ]);
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), spatialemb_core::perf::CSV_COLUMNS);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let flops = |i: usize| rows[i][col("flops_total")].parse::<u64>().unwrap();
    assert_eq!(&rows[0][col("fusion")], "tac");
    assert_eq!(&rows[1][col("fusion")], "dac");
    assert!(flops(1) < flops(0));
    assert_eq!(&rows[0][col("status")], "ok");
    assert!(!rows[0][col("peak_bytes")].is_empty(), "allocation hook installed");
}

#[test]
fn bench_rejects_fewer_than_three_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let r = run(&["bench", "--out", s(&out), "--repeats", "1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("class=ConfigError"));
    assert!(!out.exists());
}

#[test]
fn corrupt_features_are_reported_by_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sef");
    fs::write(&bad, b"NOPE0000").unwrap();
    let r = run(&["embed", "--features", s(&bad), "--out", s(&dir.path().join("e.sef"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("class=BadMagic"));
}

#[test]
fn unknown_selftest_id_is_usage_error() {
    let r = run(&["selftest", "--only", "42"]);
    assert_eq!(r.status.code(), Some(2));
}
