use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lqr_homotopy::experiment::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqr-homotopy"))
}

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("recipes")
        .join(name)
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn every_recipe_parses_and_round_trips() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.build_dist().unwrap();
        if cfg.class.is_some() {
            cfg.build_class().unwrap();
        }
        let once = cfg.to_json();
        let again = ExperimentConfig::from_json(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), once);
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn verify_recipe_succeeds() {
    let out = tempfile::tempdir().unwrap();
    let o = run("verify", &recipe("verify.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 2232);
    assert!(report["negative_samples"].as_array().unwrap().is_empty());
    assert!(report["constants"]["eps_max"].as_f64().unwrap() < 1e-6);
}

#[test]
fn dare_output_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run("dare", &recipe("dare.json"), dir.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let first = fs::read(a.path().join("dare.csv")).unwrap();
    assert_eq!(first, fs::read(b.path().join("dare.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("gamma,P_0_0,K_0_0,residual,optimal_cost\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"mode":"gradcheck","problem":{"A":[[0.0]],"B":[[1.0]],"Q":[[1.0]],"R":[[0.25]]},
            "class":{"counterexample":{"delta":0.0005}},"mu0":{"eps":0.0},
            "gradcheck":{"points":5,"gammas":[0.5]},"seed":1}"#,
    );
    let read = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let o = run("gradcheck", &config, &out, extra);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("gradcheck.csv")).unwrap()
    };
    let default = read("a", &[]);
    assert_eq!(default, read("b", &[]));
    assert_eq!(default, read("c", &["--seed", "1"]));
    assert_ne!(default, read("d", &["--seed", "2"]));
}

#[test]
fn config_errors_exit_1_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"problem":{"A":[[0.1]],"B":[[1.0]],"Q":[[1.0]],"R":[[0.1]]},"pg":{"max_iters":"many"}}"#,
    );
    let o = run("train", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pg.max_iters"), "{}", stderr(&o));

    let config = write_config(
        dir.path(),
        r#"{"problem":{"A":[[0.1]],"B":[[1.0]],"Q":[[1.0]],"R":[[0.1]]},"mode":"homotopy"}"#,
    );
    let o = run("train", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`class`"), "{}", stderr(&o));

    let o = bin().arg("train").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dare_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"problem":{"A":[[1e200]],"B":[[1.0]],"Q":[[1.0]],"R":[[1.0]]},"schedule":{"gammas":[0.5]}}"#,
    );
    let o = run("dare", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn divergence_exits_3_and_keeps_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"mode":"vanilla","problem":{"A":[[0.1]],"B":[[1.0]],"Q":[[1.0]],"R":[[0.1]]},
            "class":{"linear":{}},"mu0":{"eps":0.0},"gamma":0.5,"pg":{"step_size":100.0,"horizon":5}}"#,
    );
    let out = dir.path().join("out");
    let o = run("train", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let log = fs::read_to_string(out.join("train.csv")).unwrap();
    assert!(log.lines().count() >= 2);
}

#[test]
fn negative_verification_sample_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // atoms away from the spike preimages: (0, 1) is no longer a local minimum
    let config = write_config(
        dir.path(),
        r#"{"mode":"verify","problem":{"A":[[0.0]],"B":[[1.0]],"Q":[[1.0]],"R":[[0.25]]},
            "class":{"counterexample":{"delta":0.0005}},"mu0":{"eps":0.0,"x0":-1.0,"y0":-1.5},
            "gamma":0.5,"verify":{"directions":36,"radii":2}}"#,
    );
    let out = dir.path().join("out");
    let o = run("verify", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(out.join("verify.json").exists());
}

#[test]
fn trap_recipe_stays_trapped_while_escape_recipe_reaches_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let summary = |name: &str| -> serde_json::Value {
        let out = dir.path().join(name);
        let o = run("train", &recipe(name), &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
    };
    let trap = summary("trap.json");
    assert!(trap["final_gap"].as_f64().unwrap() > 2.0);
    let escape = summary("escape.json");
    assert!(escape["final_gap"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(escape["stages"].as_array().unwrap().len(), 50);
}
