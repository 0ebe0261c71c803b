use std::path::Path;
use std::process::Command;

use feast::cli::{
    exit_code, parse_config, run_with, ConfigLayer, SplitChoice, EXIT_CONFIG, EXIT_DATA,
    EXIT_DIVERGED, EXIT_OK,
};
use feast::data::SplitPart;
use feast::meta::{TrainConfig, Variant};
use feast::Error;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> String {
    let csv = s(&dir.join(name));
    let mut args = vec!["feast", "synth", "--out", csv.as_str(), "--n-subsets", "6"];
    if !extra.contains(&"--n-samples") {
        args.extend(["--n-samples", "1500"]);
    }
    args.extend_from_slice(extra);
    run_with(args).unwrap();
    csv
}

fn bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_feast")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn defaults_fill_every_training_setting() {
    let layer = ConfigLayer { data: Some("d.csv".into()), ..Default::default() };
    let rc = parse_config(None, layer).unwrap();
    assert_eq!(rc.train, TrainConfig::new(5));
    assert_eq!(rc.split, SplitChoice::Random { seed: 0 });
    assert_eq!(rc.eval_split, SplitPart::Test);
    assert_eq!((rc.schema.label.as_str(), rc.schema.sensitive.as_str()), ("y", "a"));
    assert!(rc.schema.sensitive_as_feature);
}

#[test]
fn flags_override_the_file_and_aux_size_follows_k() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"data": "d.csv", "gamma": 0.3, "k-shot": 2, "variant": "feast_no_mi"}"#).unwrap();
    let flags = ConfigLayer { gamma: Some(0.7), ..Default::default() };
    let rc = parse_config(Some(&file), flags).unwrap();
    assert_eq!(rc.train.gamma, 0.7);
    assert_eq!(rc.train.k_shot, 2);
    assert_eq!(rc.train.aux_size, 4);
    assert_eq!(rc.train.variant, Variant::FeastNoMi);
    let echoed = feast::cli::resolve(rc.to_layer()).unwrap();
    assert_eq!(echoed, rc);
}

#[test]
fn config_errors_name_the_key() {
    let unknown = ConfigLayer::from_json(r#"{"data": "d.csv", "gama": 0.5}"#).unwrap_err();
    assert!(unknown.to_string().contains("gama"), "{unknown}");
    assert_eq!(exit_code(&unknown), EXIT_CONFIG);
    let typed = ConfigLayer::from_json(r#"{"gamma": "high"}"#).unwrap_err();
    assert!(typed.to_string().contains("gamma"), "{typed}");
    let missing = parse_config(None, ConfigLayer::default()).unwrap_err();
    assert!(missing.to_string().contains("data"), "{missing}");
    let bad = ConfigLayer { data: Some("d.csv".into()), tau: Some(0), ..Default::default() };
    assert!(parse_config(None, bad).unwrap_err().to_string().contains("tau"));
}

#[test]
fn untrained_blind_model_on_unbiased_data_is_nearly_fair() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), "fair.csv", &["--delta", "0", "--n-samples", "4000"]);
    let run = s(&dir.path().join("run"));
    let ev = s(&dir.path().join("eval"));
    run_with([
        "feast", "train", "--data", &csv, "--out", &run, "--meta-steps", "0", "--variant", "m_maml",
        "--test-tasks", "200", "--query-size", "200",
    ])
    .unwrap();
    run_with(["feast", "eval", "--run", &run, "--out", &ev]).unwrap();
    let tasks = std::fs::read_to_string(dir.path().join("eval/tasks.jsonl")).unwrap();
    assert_eq!(tasks.lines().count(), 200);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval/summary.json")).unwrap()).unwrap();
    let dp = summary["metrics"]["dp"]["mean"].as_f64().unwrap();
    assert!(dp < 0.1, "mean dp {dp}");
}

#[test]
fn train_eval_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), "d.csv", &[]);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let run = s(&dir.path().join(format!("run{i}")));
        let ev = s(&dir.path().join(format!("eval{i}")));
        run_with([
            "feast", "train", "--data", &csv, "--out", &run, "--meta-steps", "6", "--k-shot", "3",
            "--dict-capacity", "4", "--test-tasks", "30", "--checkpoint-every", "4",
        ])
        .unwrap();
        run_with(["feast", "eval", "--run", &run, "--out", &ev]).unwrap();
        outputs.push(std::fs::read(dir.path().join(format!("eval{i}/tasks.jsonl"))).unwrap());
        let history = std::fs::read_to_string(dir.path().join(format!("run{i}/history.jsonl"))).unwrap();
        assert_eq!(history.lines().count(), 6);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_writes_one_row_per_cell_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), "d.csv", &[]);
    let mut tables = Vec::new();
    for i in 0..2 {
        let out = s(&dir.path().join(format!("sweep{i}")));
        run_with([
            "feast", "sweep", "--data", &csv, "--out", &out, "--variants", "feast,maml", "--meta-steps", "4",
            "--k-shot", "3", "--dict-capacity", "4", "--test-tasks", "20",
        ])
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join(format!("sweep{i}/sweep.csv"))).unwrap();
        assert_eq!(text.lines().count(), 3, "{text}");
        assert!(dir.path().join(format!("sweep{i}/maml_gamma0.5_aux6_k3/summary.json")).exists());
        tables.push(text);
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth(dir.path(), "d.csv", &[]);
    let run = s(&dir.path().join("run"));
    let train = |extra: &[&str]| {
        let mut a = vec!["train", "--data", csv.as_str(), "--out", run.as_str(), "--meta-steps", "2", "--k-shot", "3", "--dict-capacity", "4"];
        a.extend_from_slice(extra);
        bin(&a)
    };
    assert_eq!(train(&[]).0, i32::from(EXIT_OK));
    let (code, err) = train(&[]);
    assert_eq!(code, i32::from(EXIT_CONFIG), "{err}");
    assert_eq!(train(&["--force"]).0, i32::from(EXIT_OK));
    assert_eq!(train(&["--force", "--alpha", "1e6"]).0, i32::from(EXIT_DIVERGED));
    assert_eq!(train(&["--force", "--label", "nope"]).0, i32::from(EXIT_DATA));
    assert_eq!(bin(&["train", "--out", &run, "--force"]).0, i32::from(EXIT_CONFIG));
    assert_eq!(bin(&["bogus"]).0, i32::from(EXIT_CONFIG));
    assert_eq!(bin(&["--help"]).0, i32::from(EXIT_OK));
    assert_eq!(exit_code(&Error::Schema("x".into())), EXIT_DATA);
}
