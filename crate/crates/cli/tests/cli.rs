use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rbt_cli::stages::{FidelityRow, Summary};
use tempfile::TempDir;

const SMALL: &str = r#"{
  "seed": 3,
  "protocol": {
    "shots": 400,
    "bin_size": 100,
    "lengths": [1, 2, "inf"],
    "reference_lengths": [1, 2, 4, 8, 16, "inf"],
    "reference_per_length": 4,
    "replications": 20
  },
  "witness": {"replications": 20}
}"#;

const PIPELINE_FILES: [&str; 10] = [
    "sequences.json",
    "dataset.csv",
    "null_dataset.csv",
    "qpt.csv",
    "draws.csv",
    "fits.json",
    "reconstruction.json",
    "hinton.csv",
    "summary.json",
    "witness.json",
];

fn rbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = rbt(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn pipeline(dir: &TempDir, config: &str, sub: &str) -> PathBuf {
    let cfg = write_config(dir.path(), &format!("{sub}.json"), config);
    let out = dir.path().join(sub);
    run_ok(&["pipeline", "--config", &cfg, "--out", &path_str(&out)]);
    out
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn row<'a>(s: &'a Summary, method: &str) -> &'a FidelityRow {
    s.fidelities
        .iter()
        .find(|r| r.method == method)
        .unwrap_or_else(|| panic!("no {method} row"))
}

fn assert_same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = fs::read(a.join(name)).unwrap_or_else(|_| panic!("{name} missing in {}", a.display()));
        let y = fs::read(b.join(name)).unwrap_or_else(|_| panic!("{name} missing in {}", b.display()));
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let a = pipeline(&dir, SMALL, "a");
    let b = pipeline(&dir, SMALL, "b");
    assert_same_files(&a, &b, &PIPELINE_FILES);
    let c = dir.path().join("c");
    let cfg = dir.path().join("a.json");
    run_ok(&["pipeline", "--config", &path_str(&cfg), "--seed", "4", "--out", &path_str(&c)]);
    assert_ne!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(c.join("dataset.csv")).unwrap());
}

#[test]
fn staged_run_matches_pipeline() {
    let dir = TempDir::new().unwrap();
    let fused = pipeline(&dir, SMALL, "fused");
    let cfg = path_str(&dir.path().join("fused.json"));
    let staged = path_str(&dir.path().join("staged"));
    for stage in ["gen-sequences", "simulate", "fit", "reconstruct", "witness"] {
        run_ok(&[stage, "--config", &cfg, "--out", &staged]);
    }
    assert_same_files(&fused, Path::new(&staged), &PIPELINE_FILES);

    // Refit from another directory's data.
    let refit = path_str(&dir.path().join("refit"));
    run_ok(&["fit", "--config", &cfg, "--stage-input", &path_str(&fused), "--out", &refit]);
    assert_same_files(&fused, Path::new(&refit), &["fits.json", "draws.csv"]);
    assert!(!Path::new(&refit).join("dataset.csv").exists());
}

#[test]
fn rewitness_touches_only_witness_file() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(&dir, SMALL, "run");
    let before: Vec<Vec<u8>> = PIPELINE_FILES.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    let more = SMALL.replace(r#""witness": {"replications": 20}"#, r#""witness": {"replications": 30}"#);
    let cfg = write_config(dir.path(), "more.json", &more);
    let output = rbt(&["witness", "--config", &cfg, "--out", &path_str(&out)]);
    assert!(output.status.success());
    assert_eq!(String::from_utf8_lossy(&output.stdout).lines().count(), 1);
    for (name, old) in PIPELINE_FILES.iter().zip(&before) {
        let new = fs::read(out.join(name)).unwrap();
        if *name == "witness.json" {
            assert_ne!(&new, old);
            assert!(String::from_utf8_lossy(&new).contains("\"replications\": 30"));
        } else {
            assert_eq!(&new, old, "{name} changed");
        }
    }
}

#[test]
fn corrupted_dataset_names_the_row() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(&dir, SMALL, "run");
    let path = out.join("dataset.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = "0,1,4,0,not-a-number".into();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let cfg = path_str(&dir.path().join("run.json"));
    let res = rbt(&["fit", "--config", &cfg, "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(4));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("dataset.csv") && err.contains("row 5 (line 6)"), "{err}");
}

#[test]
fn mismatched_draws_are_rejected() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(&dir, SMALL, "run");
    let path = out.join("draws.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen(",0.", ",0.1", 1)).unwrap();
    let cfg = path_str(&dir.path().join("run.json"));
    let res = rbt(&["reconstruct", "--config", &cfg, "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("digest"));
}

#[test]
fn config_errors_exit_2_with_pointer() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"protocol": {"lengths": [1, "x"]}}"#);
    let out = path_str(&dir.path().join("out"));
    let res = rbt(&["pipeline", "--config", &cfg, "--out", &out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/protocol/lengths/1"));
    assert!(!Path::new(&out).exists());

    let cfg = write_config(dir.path(), "bad2.json", r#"{"spam": {"assignment_fidelity": 1.5}}"#);
    let res = rbt(&["simulate", "--config", &cfg, "--out", &out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/spam/assignment_fidelity"));
}

#[test]
fn missing_inputs_exit_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let res = rbt(&["fit", "--config", &cfg, "--out", &path_str(&dir.path().join("empty"))]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("dataset.csv"));
}

#[test]
fn failed_pipeline_removes_partial_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    // A directory where the last output belongs makes the final write fail.
    fs::create_dir_all(out.join("witness.json")).unwrap();
    let res = rbt(&["pipeline", "--config", &cfg, "--out", &path_str(&out)]);
    assert_eq!(res.status.code(), Some(4));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("witness.json")]);
}

#[test]
fn ideal_hadamard_summary_is_one() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(
        &dir,
        r#"{"noise": {"ideal": true}, "protocol": {"sampling": "expected", "replications": 20}, "witness": {"replications": 20}}"#,
        "ideal",
    );
    let s = summary(&out);
    assert_eq!(s.fidelities.len(), 5);
    for r in &s.fidelities {
        assert!((r.value - 1.0).abs() < 1e-6, "{} = {}", r.method, r.value);
    }
    assert!((s.true_fidelity - 1.0).abs() < 1e-12);
}

#[test]
fn w_direct_interval_is_wider_than_reconstruction() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(
        &dir,
        r#"{"target": "W", "protocol": {"shots": 2000, "replications": 200}, "qpt": {"enabled": false}, "witness": {"replications": 20}}"#,
        "w",
    );
    let s = summary(&out);
    let direct = row(&s, "w-direct").ci.unwrap();
    let full = row(&s, "rbt").ci.unwrap();
    assert!(direct.width() > full.width(), "direct {direct:?} vs full {full:?}");
    assert!((row(&s, "w-direct").value - row(&s, "rbt").value).abs() < 1e-12);
    assert!(!out.join("qpt.csv").exists());
}

#[test]
fn pulse_scan_grid() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pulse");
    run_ok(&["pulse-scan", "--out", &path_str(&out)]);
    let mut rdr = csv::Reader::from_path(out.join("pulse_scan.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["model", "samples", "dt", "order", "drag", "infidelity", "leakage"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(rows.iter().all(|r| r[3] == *"1" || r[3] == *"2"));
    let qubit = |order: &str| -> Vec<(usize, f64)> {
        rows.iter()
            .filter(|r| &r[0] == "qubit" && &r[3] == order)
            .map(|r| (r[1].parse().unwrap(), r[5].parse().unwrap()))
            .collect()
    };
    let (first, second) = (qubit("1"), qubit("2"));
    assert_eq!(first.len(), 5);
    for ((n1, f1), (n2, f2)) in first.iter().zip(&second) {
        assert_eq!(n1, n2);
        assert!(f2 < f1, "order 2 not better at {n1} samples");
    }
    let finest = second.iter().max_by_key(|(n, _)| *n).unwrap();
    assert!(finest.1 < 1e-8, "finest order-2 infidelity {}", finest.1);
}

#[test]
fn published_schema_is_current() {
    let published = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("config.schema.json")).unwrap();
    assert_eq!(published, rbt_cli::config::config_schema());
    let out = rbt(&["schema"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), published);
}
