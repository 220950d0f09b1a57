use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use quakesim::export::{RunManifest, RunStatus};
use quakesim::scenario::RadialScenario;
use serde_json::{json, Value};

fn quakesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quakesim")).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn small(dir: &Path) -> String {
    RadialScenario {
        n_zones: 3,
        points_per_zone: 5,
        ..Default::default()
    }
    .write(dir)
    .unwrap()
    .to_string_lossy()
    .into_owned()
}

fn edit_config(path: &str, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, v.to_string()).unwrap();
}

#[test]
fn run_prints_metrics_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = quakesim(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("RMSE_Z") && stdout.contains("mock-attenuation"), "{stdout}");

    let again = String::from_utf8(quakesim(&["run", "--config", &cfg]).stdout).unwrap();
    assert_eq!(again.matches("reused").count(), 6, "{again}");
}

#[test]
fn steps_one_at_a_time_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    for step in ["sample", "fuse", "simulate", "evaluate", "analyze", "export"] {
        let out = quakesim(&[step, "--config", &cfg, "--ablate", "socioeconomic", "--redact-location"]);
        assert!(out.status.success(), "{step}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(dir.path().join("out/export/mock-attenuation__redact-no_socioeconomic/manifest.json").is_file());
}

#[test]
fn missing_predecessor_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = quakesim(&["evaluate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}

#[test]
fn config_errors_exit_1_and_list_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    fs::remove_file(dir.path().join("vs30.asc")).unwrap();
    edit_config(&cfg, |v| v["prompt"]["assumed_event_date"] = json!("someday"));
    let out = quakesim(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("vs30") && err.contains("assumed_event_date"), "{err}");

    let bad_flag = quakesim(&["run", "--config", &cfg, "--ablate", "weather"]);
    assert_eq!(bad_flag.status.code(), Some(1));
}

#[test]
fn malformed_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    fs::write(dir.path().join("zones.geojson"), "{\"type\": \"FeatureCollection\", \"features\": [").unwrap();
    let out = quakesim(&["sample", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    edit_config(&cfg, |v| {
        v["model"] = json!({
            "model_id": "remote",
            "endpoint": "http://127.0.0.1:9/v1/chat/completions",
            "api_key_env": "QUAKESIM_TEST_KEY",
            "retry": {"max_attempts": 1, "base_backoff_ms": 1},
            "timeout_ms": 2000
        })
    });
    let out = Command::new(env!("CARGO_BIN_EXE_quakesim")).args(["run", "--config", &cfg]).env("QUAKESIM_TEST_KEY", "k").output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // the partial run is still accounted for
    let text = fs::read_to_string(dir.path().join("out/export/remote__base/manifest.json")).unwrap();
    let m: RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    m.check_conservation().unwrap();
    assert_eq!(m.totals.predicted, 0);
    assert_eq!(m.totals.failed, m.totals.fused_ok);
    assert!(!dir.path().join("out/export/remote__base/.step.json").exists());
}

#[test]
fn run_equals_steps_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    assert!(quakesim(&["run", "--config", &cfg]).status.success());
    let whole = dir.path().join("out_run");
    fs::rename(dir.path().join("out"), &whole).unwrap();
    for step in ["sample", "fuse", "simulate", "evaluate", "analyze", "export"] {
        assert!(quakesim(&[step, "--config", &cfg]).status.success(), "{step}");
    }
    let stepwise = dir.path().join("out");
    let mut compared = 0;
    for step in ["sample", "fuse"].into_iter().map(String::from).chain(["simulate", "evaluate", "analyze"].map(|s| format!("{s}/mock-attenuation__base"))) {
        for e in fs::read_dir(whole.join(&step)).unwrap() {
            let name = e.unwrap().file_name();
            assert_eq!(fs::read(whole.join(&step).join(&name)).unwrap(), fs::read(stepwise.join(&step).join(&name)).unwrap(), "{step}/{name:?}");
            compared += 1;
        }
    }
    let export = "export/mock-attenuation__base";
    for name in ["choropleth.geojson", "metrics.json", "metrics.txt", ".step.json"] {
        assert_eq!(fs::read(whole.join(export).join(name)).unwrap(), fs::read(stepwise.join(export).join(name)).unwrap(), "{name}");
    }
    let strip = |p: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().retain(|k, _| k != "started" && k != "finished");
        v
    };
    assert_eq!(strip(&whole.join(export).join("manifest.json")), strip(&stepwise.join(export).join("manifest.json")));
    assert!(compared >= 15);
}

#[test]
fn sweep_prints_one_row_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = small(dir.path());
    let b = dir.path().join("icl.json");
    fs::copy(&a, &b).unwrap();
    let b = b.to_string_lossy().into_owned();
    edit_config(&b, |v| {
        v["prompt"]["icl_mmi_guide"] = json!(true);
        v["output_dir"] = json!("out_icl");
    });
    let out = quakesim(&["sweep", "--config", &a, "--config", &b]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    assert!(stdout.contains(" icl "), "{stdout}");
}

#[test]
fn demo_writes_a_runnable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("demo");
    let out = quakesim(&["demo", "--dir", target.to_str().unwrap(), "--zones", "2", "--points", "4"]);
    assert!(out.status.success());
    let cfg = String::from_utf8(out.stdout).unwrap().trim().to_string();
    assert!(quakesim(&["run", "--config", &cfg]).status.success());
}
