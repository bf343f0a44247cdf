use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_landscape-spde"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn four_wells(weights: [f64; 4]) -> String {
    let c = [[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]];
    let mut s = String::from("[landscape]\ngrid_size = 128\nwells = [\n");
    for (w, c) in weights.iter().zip(c) {
        s += &format!("  {{ center = [{}, {}], weight = {w} }},\n", c[0], c[1]);
    }
    s + "]\n"
}

#[test]
fn missing_wells_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\n[run]\nsigma = 0.1\n");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("landscape.wells"));
}

#[test]
fn syntax_errors_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 3\n[run\nsigma = 0.1\n");
    let out = run(&["landscape", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn noiseless_run_stays_in_its_basin() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--config",
        config("default.toml").to_str().unwrap(),
        "--sigma",
        "0",
        "--t-end",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["final_basin"], s["initial_basin"]);
    for f in ["trajectory.csv", "diagnostics.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_same_digests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&[
            "run",
            "--config",
            config("default.toml").to_str().unwrap(),
            "--t-end",
            "2",
            "--seed",
            "99",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let ma = read_json(&a.path().join("manifest.json"));
    let mb = read_json(&b.path().join("manifest.json"));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["seed"], 99);
    for f in ["trajectory.csv", "diagnostics.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn empty_sigma_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "exit-study",
        "--config",
        config("exit_study.toml").to_str().unwrap(),
        "--sigmas=",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_well_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[landscape]\nwells = [{ center = [0.0, 0.0], weight = 1.0 }]\n[study]\nsigmas = [0.3, 0.2, 0.1]\n",
    );
    let out = run(&["exit-study", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_member_ensemble_matches_run() {
    let r = tempfile::tempdir().unwrap();
    let e = tempfile::tempdir().unwrap();
    let cfg = config("default.toml");
    let common = ["--config", cfg.to_str().unwrap(), "--t-end", "12"];
    let out = run(&[&["run"][..], &common, &["--out", r.path().to_str().unwrap()]].concat());
    assert!(out.status.success());
    let out = run(&[&["ensemble", "-n", "1"][..], &common, &["--out", e.path().to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let single = std::fs::read_to_string(r.path().join("diagnostics.csv")).unwrap();
    let pooled = std::fs::read_to_string(e.path().join("diagnostics.csv")).unwrap();
    let stripped: Vec<&str> = pooled
        .lines()
        .map(|l| l.split_once(',').unwrap().1)
        .collect();
    assert_eq!(stripped, single.lines().collect::<Vec<_>>());
    let t = read_json(&e.path().join("transitions.json"));
    let total: u64 = t["sequences"].as_array().unwrap().iter().map(|s| s["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 1);

    let out = run(&["ensemble", "--config", cfg.to_str().unwrap(), "--t-end", "5", "--out", e.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.burn_in"));
}

#[test]
fn limit_weights_follow_inverse_determinants() {
    for (weights, want) in [([1.0, 1.0, 2.0, 2.0], [0.4, 0.4, 0.1, 0.1]), ([1.0; 4], [0.25; 4])] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), &four_wells(weights));
        let out = run(&["landscape", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let s = read_json(&dir.path().join("landscape.json"));
        let got: Vec<f64> = s["limit_measure"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }
}

#[test]
fn symmetric_landscape_has_symmetric_barrier_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &four_wells([1.0; 4]));
    let out = run(&["landscape", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let s = read_json(&dir.path().join("landscape.json"));
    let table = s["barriers"].as_array().unwrap();
    // the diagonals are not adjacent; every side of the square is
    assert_eq!(table.len(), 8);
    let b = |from: u64, to: u64| {
        table
            .iter()
            .find(|r| r["from_well"] == from && r["to_well"] == to)
            .map(|r| r["barrier"].as_f64().unwrap())
            .unwrap()
    };
    let reference = b(0, 1);
    for (f, t) in [(1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 0), (0, 3)] {
        assert!((b(f, t) - reference).abs() < 1e-9, "{f}->{t}");
    }
    assert!(reference > 0.0);
}

#[test]
fn print_config_shows_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &four_wells([1.0; 4]));
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["intervals = 64", "dt = 0.001", "l = 0.1", "filter_width", "bounds", "burn_in = 10.0"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}
