//! Binary-level tests: flags, exit codes and file handling.

use std::path::PathBuf;
use std::process::Command;

fn plec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plec"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("plec-cli-{name}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_CONFIG: &str = r#"{
  "seed": 5,
  "topology": {"builtin": "path-2"},
  "layers": [{"tag": "g", "gates": [{"kind": "CZ", "control": 0, "target": 1}]}],
  "noise": {"inject": {"g": {"kind": "depolarizing_two_local", "fidelity": 0.995}}},
  "learning": {"depths": [0, 2, 4], "instances_per_point": 10,
               "shots_per_instance": 32, "bootstrap_resamples": 10}
}"#;

#[test]
fn learn_runs_and_exits_zero() {
    let dir = tmp_dir("learn-ok");
    let cfg = write_config(&dir, SMALL_CONFIG);
    let out = plec()
        .args(["learn", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .arg("--jobs")
        .arg("1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed = String::from_utf8_lossy(&out.stdout);
    assert!(printed.contains("model-g.json"));
    assert!(printed.contains("decays-g.csv"));
    assert!(printed.contains("fit-report-g.json"));
}

#[test]
fn calibrated_learn_runs() {
    let dir = tmp_dir("learn-cal");
    let cfg = write_config(&dir, SMALL_CONFIG);
    let out = plec()
        .args(["learn", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .args(["--calibrate-max-depth", "8"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn serial_and_parallel_runs_are_byte_identical() {
    let dir = tmp_dir("jobs-determinism");
    let cfg = write_config(&dir, SMALL_CONFIG);
    let mut outputs = vec![];
    for jobs in ["1", "2"] {
        let out_dir = dir.join(format!("jobs-{jobs}"));
        let out = plec()
            .args(["learn", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .args(["--jobs", jobs])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let run_dir = String::from_utf8_lossy(&out.stdout)
            .lines()
            .next()
            .unwrap()
            .trim()
            .to_string();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&run_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the outputs");
}

#[test]
fn missing_config_file_exits_one_with_diagnostic() {
    let out = plec()
        .args(["learn", "--config", "/nonexistent/nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot read config file"), "stderr: {err}");
}

#[test]
fn missing_model_file_exits_one_with_diagnostic() {
    let dir = tmp_dir("missing-model");
    let cfg = write_config(
        &dir,
        r#"{
  "seed": 5,
  "topology": {"builtin": "path-2"},
  "layers": [{"tag": "g", "gates": [{"kind": "CZ", "control": 0, "target": 1}]}],
  "noise": {"inject": {"g": {"kind": "file", "path": "/nonexistent/model.json"}}},
  "learning": {"depths": [0, 2], "instances_per_point": 4, "shots_per_instance": 8,
               "bootstrap_resamples": 0}
}"#,
    );
    let out = plec()
        .args(["learn", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read model file"));
}

#[test]
fn invalid_layer_in_config_exits_one() {
    let dir = tmp_dir("bad-layer");
    let cfg = write_config(
        &dir,
        r#"{
  "seed": 5,
  "topology": {"builtin": "path-2"},
  "layers": [{"tag": "g", "gates": [{"kind": "CX", "control": 0, "target": 0}]}]
}"#,
    );
    let out = plec()
        .args(["bases", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn backend_flag_is_validated() {
    let dir = tmp_dir("bad-backend");
    let cfg = write_config(&dir, SMALL_CONFIG);
    let out = plec()
        .args(["learn", "--config"])
        .arg(&cfg)
        .args(["--backend", "tensor"])
        .output()
        .unwrap();
    // Flag misuse is a user error.
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bases_plan_file_has_interface_shape() {
    let dir = tmp_dir("bases-shape");
    let cfg = write_config(&dir, SMALL_CONFIG);
    let out = plec()
        .args(["bases", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let run_dir = stdout.lines().next().unwrap().trim();
    let plan: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(PathBuf::from(run_dir).join("plan-g.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(plan["bases"].as_array().unwrap().len(), 9);
    let spec = &plan["specs"].as_array().unwrap()[0];
    assert!(spec.get("basis").is_some());
    assert!(spec.get("kind").is_some());
    assert!(spec.get("b").is_some());
    assert!(plan["provenance"]["config_hash"].is_string());
}
