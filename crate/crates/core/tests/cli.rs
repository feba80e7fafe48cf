mod common;

use std::path::Path;
use std::process::Command;

use ccs_core::dataset::{make_folds, FoldMode};
use ccs_core::estimators::{all_requests, CrossFitter};
use ccs_core::nuisance::{ClipPolicy, ModelSpec, NuisanceSpecs};
use ccs_core::report::sig6;
use ccs_core::simlab::Study;
use common::{k1, study_data, tiny, write_inputs};
use serde_json::Value;
use tempfile::TempDir;

const EIGHT: [(u8, u8, f64); 8] = [
    (1, 1, 1.0),
    (1, 0, 0.0),
    (1, 1, 0.0),
    (1, 0, 1.0),
    (0, 1, 1.0),
    (0, 0, 1.0),
    (0, 1, 0.0),
    (0, 0, 0.0),
];

fn ccs(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ccs"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn intercept_specs(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("specs.json");
    std::fs::write(
        &p,
        serde_json::to_string(&NuisanceSpecs::uniform(ModelSpec::intercept_only())).unwrap(),
    )
    .unwrap();
    p
}

#[test]
fn analyze_reproduces_library_results() {
    let dir = TempDir::new().unwrap();
    let d = tiny(&EIGHT, 0.5);
    let (data, schema) = write_inputs(dir.path(), &d);
    let specs = intercept_specs(dir.path());
    let json = dir.path().join("out.json");
    let (code, text) = ccs(&[
        "analyze",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
        "--splits",
        "1",
        "--specs",
        s(&specs),
        "--out-json",
        s(&json),
    ]);
    assert_eq!(code, 0);
    assert!(text.contains('%'));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let fitter = CrossFitter::new(
        NuisanceSpecs::uniform(ModelSpec::intercept_only()),
        ClipPolicy::default(),
    );
    let lib = fitter.run(&d, &k1(d.len()), &all_requests()).unwrap();
    let est = v["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 10);
    for r in &lib.reports {
        let row = est
            .iter()
            .find(|e| {
                serde_json::from_value::<ccs_core::estimators::EstimandRequest>(
                    e["request"].clone(),
                )
                .unwrap()
                    == r.request
            })
            .unwrap();
        assert_eq!(row["point"].as_f64().unwrap(), r.point);
        assert_eq!(row["se"].as_f64().unwrap(), r.se);
    }
    assert_eq!(v["contrasts"].as_array().unwrap().len(), 5);
}

#[test]
fn csv_and_json_outputs_agree() {
    let dir = TempDir::new().unwrap();
    let d = study_data(Study::Three, 400, 4);
    let (data, schema) = write_inputs(dir.path(), &d);
    let (json, csv) = (dir.path().join("a.json"), dir.path().join("a.csv"));
    let (code, _) = ccs(&[
        "analyze",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
        "--seed",
        "3",
        "--out-json",
        s(&json),
        "--out-csv",
        s(&csv),
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "assumptions,parameter,estimate,se,ci_lower,ci_upper"
    );
    assert_eq!(lines.len(), 1 + 10 + 5);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let estimates: Vec<String> = reader
        .records()
        .map(|r| r.unwrap()[2].to_string())
        .collect();
    let points: Vec<String> = v["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| sig6(e["point"].as_f64().unwrap()))
        .collect();
    for p in &points {
        assert!(estimates.contains(p), "{p} missing from CSV");
    }
    let plan = make_folds(d.len(), 5, 3, FoldMode::Balanced).unwrap();
    let lib = CrossFitter::new(
        NuisanceSpecs::default_for(d.schema()),
        ClipPolicy::default(),
    )
    .run(&d, &plan, &all_requests())
    .unwrap();
    for (e, r) in v["estimates"].as_array().unwrap().iter().zip(&lib.reports) {
        assert_eq!(e["point"].as_f64().unwrap(), r.point);
    }
}

#[test]
fn analyze_is_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let d = study_data(Study::Three, 500, 8);
    let (data, schema) = write_inputs(dir.path(), &d);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let (json, csv) = (
            dir.path().join(format!("{threads}.json")),
            dir.path().join(format!("{threads}.csv")),
        );
        let (code, text) = ccs(&[
            "--threads",
            threads,
            "analyze",
            "--data",
            s(&data),
            "--schema",
            s(&schema),
            "--pi-t1",
            "0.5",
            "--seed",
            "11",
            "--out-json",
            s(&json),
            "--out-csv",
            s(&csv),
        ]);
        assert_eq!(code, 0);
        outputs.push((
            text,
            std::fs::read(&json).unwrap(),
            std::fs::read(&csv).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let d = study_data(Study::Three, 300, 2);
    let (data, schema) = write_inputs(dir.path(), &d);
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ccs"));
        c.args([
            "analyze",
            "--data",
            s(&data),
            "--schema",
            s(&schema),
            "--pi-t1",
            "0.5",
        ])
        .args(extra);
        match env {
            Some(v) => c.env("CCS_SEED", v),
            None => c.env_remove("CCS_SEED"),
        };
        c.output().unwrap().stdout
    };
    assert_eq!(run(Some("9"), &[]), run(None, &["--seed", "9"]));
    assert_ne!(run(Some("9"), &[]), run(None, &[]));
}

#[test]
fn missing_column_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let d = tiny(&EIGHT, 0.5);
    let (data, schema) = write_inputs(dir.path(), &d);
    let text = std::fs::read_to_string(&data).unwrap();
    let header = text.lines().next().unwrap();
    let keep: Vec<usize> = header
        .split(',')
        .enumerate()
        .filter(|(_, h)| *h != "age")
        .map(|(i, _)| i)
        .collect();
    let stripped: String = text
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| f[i]).collect::<Vec<_>>().join(",") + "\n"
        })
        .collect();
    std::fs::write(&data, stripped).unwrap();
    let (code, _) = ccs(&[
        "analyze",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
        "--splits",
        "1",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn bad_configuration_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let d = tiny(&EIGHT, 0.5);
    let (data, schema) = write_inputs(dir.path(), &d);
    let base = [
        "analyze",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
    ];
    assert_eq!(ccs(&[&base[..], &["--epsilon", "0.7"]].concat()).0, 2);
    assert_eq!(ccs(&[&base[..], &["--splits", "0"]].concat()).0, 2);
    assert_eq!(ccs(&[&base[..], &["--splits", "9"]].concat()).0, 2);
    assert_eq!(
        ccs(&[
            "--threads",
            "0",
            "analyze",
            "--data",
            s(&data),
            "--schema",
            s(&schema),
            "--pi-t1",
            "0.5"
        ])
        .0,
        2
    );
    assert_eq!(
        ccs(&[
            "analyze",
            "--data",
            "/nonexistent.csv",
            "--schema",
            s(&schema),
            "--pi-t1",
            "0.5"
        ])
        .0,
        2
    );
    assert_eq!(ccs(&["frobnicate"]).0, 2);
}

#[test]
fn diagnose_reports_tests_and_overlap() {
    let dir = TempDir::new().unwrap();
    let d = study_data(Study::Three, 600, 6);
    let (data, schema) = write_inputs(dir.path(), &d);
    let json = dir.path().join("diag.json");
    let (code, text) = ccs(&[
        "diagnose",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
        "--out-json",
        s(&json),
    ]);
    assert_eq!(code, 0, "{text}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["n"], 600);
    assert_eq!(v["independence"].as_array().unwrap().len(), 2);
    for t in v["independence"].as_array().unwrap() {
        let or = t["or_point"].as_f64().unwrap();
        let (lo, hi) = (
            t["or_ci95"][0].as_f64().unwrap(),
            t["or_ci95"][1].as_f64().unwrap(),
        );
        assert!(lo < or && or < hi);
        assert!((t["log_or"].as_f64().unwrap().exp() - or).abs() < 1e-12);
    }
}

#[test]
fn diagnose_without_observational_rows_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let trial_only: Vec<(u8, u8, f64)> = EIGHT.iter().map(|&(_, t, y)| (1, t, y)).collect();
    let d = tiny(&trial_only, 0.5);
    let (data, schema) = write_inputs(dir.path(), &d);
    let (code, _) = ccs(&[
        "diagnose",
        "--data",
        s(&data),
        "--schema",
        s(&schema),
        "--pi-t1",
        "0.5",
    ]);
    assert_eq!(code, 2);
}

fn scenario(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn simulate_writes_one_row_per_estimator_and_contrast() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(
        dir.path(),
        r#"{"study": 3, "misspec": ["a", "f"], "n": 400, "reps": 3, "master_seed": 5, "n_truth": 20000}"#,
    );
    let (json, csv) = (dir.path().join("s.json"), dir.path().join("s.csv"));
    let (code, text) = ccs(&[
        "simulate",
        s(&sc),
        "--out-json",
        s(&json),
        "--out-csv",
        s(&csv),
    ]);
    assert_eq!(code, 0);
    assert!(text.contains("scenario (f)"));
    let csv = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "study,scenario,parameter,estimator,truth,bias,mean_se,sd,coverage,rmse,reps"
    );
    assert_eq!(lines.len(), 1 + 2 * 15);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["rows"].as_array().unwrap().len(), 10);
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(
        dir.path(),
        r#"{"study": 1, "misspec": "b", "n": 300, "reps": 4, "master_seed": 8, "n_truth": 5000}"#,
    );
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let csv = dir.path().join(format!("{threads}.csv"));
        let (code, text) = ccs(&[
            "--threads",
            threads,
            "simulate",
            s(&sc),
            "--out-csv",
            s(&csv),
        ]);
        assert_eq!(code, 0);
        outs.push((text, std::fs::read(&csv).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn undefined_scenario_label_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(
        dir.path(),
        r#"{"study": 1, "misspec": "h", "n": 300, "reps": 2}"#,
    );
    assert_eq!(ccs(&["simulate", s(&sc)]).0, 2);
    let sc = scenario(
        dir.path(),
        r#"{"study": 4, "misspec": "a", "n": 300, "reps": 2}"#,
    );
    assert_eq!(ccs(&["simulate", s(&sc)]).0, 2);
    let sc = scenario(
        dir.path(),
        r#"{"study": 3, "misspec": [], "n": 300, "reps": 2}"#,
    );
    assert_eq!(ccs(&["simulate", s(&sc)]).0, 2);
}
