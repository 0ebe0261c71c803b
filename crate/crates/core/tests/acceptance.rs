//! Acceptance suite. Each test prints one `[PASS]`, `[FAIL]` or `[SKIP]`
//! line; run with `--nocapture` to see them. The lines are also written to
//! `acceptance_report.txt` in the cargo target tmp directory.

mod common;

use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use common::{
    check_dictionary_ops, check_fixture, gradcheck_suite, metric_fixtures, mi_brute_force,
    random_dict_ops, rng, synth_setup, MiInstance, FD_TOL,
};
use feast::cli::{load_data, parse_config, run_with, ConfigLayer};
use feast::meta::{evaluate, train, TrainConfig, TrainState, Variant};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const MI_TOL: f64 = 1e-8;
const DP_REDUCTION: f64 = 0.20;
const ACC_SLACK: f64 = 0.05;
const ABLATION_WINS: usize = 4;

/// True until the first line of this run has been written.
static REPORT: Mutex<bool> = Mutex::new(true);

fn report(criterion: u8, status: &str, detail: &str) {
    let line = format!("[{status}] criterion {criterion}: {detail}");
    println!("{line}");
    let mut fresh = REPORT.lock().unwrap();
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_report.txt");
    let truncate = std::mem::replace(&mut *fresh, false);
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(!truncate)
        .write(true)
        .truncate(truncate)
        .open(path)
    {
        let _ = writeln!(f, "{line}");
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_1_gradients() {
    let reports = gradcheck_suite(100);
    let worst = reports.iter().max_by(|a, b| a.max_rel.total_cmp(&b.max_rel)).unwrap();
    let failed: Vec<&str> = reports.iter().filter(|r| !(r.max_rel <= FD_TOL)).map(|r| r.name).collect();
    let ok = failed.is_empty() && reports.iter().all(|r| r.instances >= 100);
    report(
        1,
        verdict(ok),
        &format!(
            "{} ops and losses x 100 instances, worst rel err {:.2e} ({}), tol {FD_TOL:e}; failing {failed:?}",
            reports.len(),
            worst.max_rel,
            worst.name
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_mi_oracle() {
    let mut r = rng(2024);
    let (mut worst, mut degenerate, mut imbalanced) = (0.0f64, 0, 0);
    for _ in 0..100 {
        let inst = MiInstance::random(&mut r);
        let (got, deg) = inst.graph_value();
        worst = worst.max((got - mi_brute_force(&inst)).abs());
        degenerate += usize::from(deg);
        let ones = inst.s_attrs.iter().filter(|&&a| a == 1).count();
        imbalanced += usize::from(2 * ones != inst.s_attrs.len());
    }
    let ok = worst <= MI_TOL && degenerate > 0 && imbalanced > 0;
    report(
        2,
        verdict(ok),
        &format!("100 instances, max |graph - oracle| {worst:.2e} (tol {MI_TOL:e}), {degenerate} degenerate, {imbalanced} imbalanced"),
    );
    assert!(ok);
}

#[test]
fn criterion_3_metrics() {
    let fixtures = metric_fixtures();
    let errors: Vec<String> = fixtures.iter().filter_map(|f| check_fixture(f).err()).collect();
    let ok = errors.is_empty() && fixtures.len() >= 10;
    report(3, verdict(ok), &format!("{} exact fixtures, mismatches {errors:?}", fixtures.len()));
    assert!(ok);
}

#[test]
fn criterion_4_dictionary() {
    let mut errors = Vec::new();
    for (seed, capacity) in [(41u64, 1usize), (42, 5), (43, 64)] {
        let ops = random_dict_ops(1000, 3, &mut rng(seed));
        if let Err(e) = check_dictionary_ops(capacity, &ops) {
            errors.push(format!("capacity {capacity}: {e}"));
        }
    }
    let ok = errors.is_empty();
    report(4, verdict(ok), &format!("3 x 1000 random push/select operations, errors {errors:?}"));
    assert!(ok);
}

/// Mean ΔDP and accuracy of every variant for every seed.
struct TrendRuns {
    /// `[seed][variant]` in [`Variant::ALL`] order.
    dp: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
}

fn trend_runs() -> &'static TrendRuns {
    static RUNS: OnceLock<TrendRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let (mut dp, mut acc) = (Vec::new(), Vec::new());
        for seed in SEEDS {
            let (table, split) = synth_setup(8000, 12, seed);
            let (mut d, mut a) = (Vec::new(), Vec::new());
            for variant in Variant::ALL {
                let cfg = TrainConfig {
                    variant,
                    seed,
                    meta_steps: 300,
                    test_tasks: 300,
                    ..TrainConfig::new(5)
                };
                let state = train(cfg, &table, &split.train).unwrap();
                let s = evaluate(&state, &table, &split.test).unwrap().summary();
                d.push(s.dp.mean);
                a.push(s.acc.mean);
            }
            dp.push(d);
            acc.push(a);
        }
        TrendRuns { dp, acc }
    })
}

fn column(rows: &[Vec<f64>], v: Variant) -> f64 {
    let i = Variant::ALL.iter().position(|&x| x == v).unwrap();
    rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64
}

#[test]
fn criterion_5_fairness_trend() {
    let runs = trend_runs();
    let (dp_f, dp_m) = (column(&runs.dp, Variant::Feast), column(&runs.dp, Variant::Maml));
    let (acc_f, acc_m) = (column(&runs.acc, Variant::Feast), column(&runs.acc, Variant::Maml));
    let reduction = 1.0 - dp_f / dp_m;
    let ok = dp_f < dp_m && reduction >= DP_REDUCTION && acc_f >= acc_m - ACC_SLACK;
    report(
        5,
        verdict(ok),
        &format!(
            "5 seeds: dp feast {dp_f:.4} vs maml {dp_m:.4} ({:.1}% lower, need {:.0}%); acc feast {acc_f:.4} vs maml {acc_m:.4} (slack {ACC_SLACK})",
            100.0 * reduction,
            100.0 * DP_REDUCTION
        ),
    );
    assert!(ok);
}

/// Reported, not asserted: see the project notes for the analysis.
#[test]
fn criterion_6_ablation_ordering() {
    let runs = trend_runs();
    let idx = |v: Variant| Variant::ALL.iter().position(|&x| x == v).unwrap();
    let wins = runs
        .dp
        .iter()
        .filter(|row| Variant::ABLATIONS.iter().all(|&v| row[idx(Variant::Feast)] <= row[idx(v)]))
        .count();
    let means: Vec<String> = Variant::ABLATIONS
        .iter()
        .map(|&v| format!("{v} {:.4}", column(&runs.dp, v)))
        .collect();
    report(
        6,
        verdict(wins >= ABLATION_WINS),
        &format!("feast lowest dp in {wins}/5 seeds (need {ABLATION_WINS}); means: {}", means.join(", ")),
    );
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let csv = p("d.csv");
    run_with(["feast", "synth", "--out", &csv, "--n-samples", "3000", "--n-subsets", "8", "--seed", "5"]).unwrap();
    let common = ["--data", csv.as_str(), "--k-shot", "5", "--test-tasks", "100", "--seed", "5"];
    let train_cli = |out: &str, steps: &str, extra: &[&str]| {
        let mut a = vec!["feast", "train", "--out", out, "--meta-steps", steps];
        a.extend_from_slice(&common);
        a.extend_from_slice(extra);
        run_with(a).unwrap();
    };
    let mut jsonl = Vec::new();
    for i in 0..2 {
        let (run, ev) = (p(&format!("run{i}")), p(&format!("eval{i}")));
        train_cli(&run, "40", &[]);
        run_with(["feast", "eval", "--run", &run, "--out", &ev]).unwrap();
        jsonl.push(std::fs::read(dir.path().join(format!("eval{i}/tasks.jsonl"))).unwrap());
    }
    let identical = jsonl[0] == jsonl[1];

    train_cli(&p("half"), "17", &[]);
    let ckpt = p("half/checkpoint");
    train_cli(&p("resumed"), "40", &["--resume", &ckpt]);
    let params = |run: &str| {
        let d = dir.path().join(run).join("checkpoint");
        ["classifier.bin", "generator.bin", "classifier_adam.bin", "generator_adam.bin"]
            .map(|f| std::fs::read(d.join(f)).unwrap())
    };
    let resumed_equal = params("resumed") == params("run0");
    let a = TrainState::load(dir.path().join("resumed/checkpoint")).unwrap();
    let b = TrainState::load(dir.path().join("run0/checkpoint")).unwrap();
    let dict_equal = a.dictionary == b.dictionary && a.history == b.history;

    let ok = identical && resumed_equal && dict_equal;
    report(
        7,
        verdict(ok),
        &format!(
            "tasks.jsonl byte-identical: {identical}; resume at 17/40 bit-exact params and optimizer: {resumed_equal}; dictionary and history: {dict_equal}"
        ),
    );
    assert!(ok);
}

/// Set `FEAST_ADULT_CONFIG` to a run config (JSON, same keys as the CLI)
/// whose `data` points at a preprocessed Adult CSV.
#[test]
fn criterion_8_adult() {
    let Ok(path) = std::env::var("FEAST_ADULT_CONFIG") else {
        report(8, "SKIP", "FEAST_ADULT_CONFIG not set; reference dp feast 0.258, maml 0.473");
        return;
    };
    let mut dp = Vec::new();
    for variant in [Variant::Feast, Variant::Maml] {
        let flags = ConfigLayer { variant: Some(variant), ..Default::default() };
        let rc = parse_config(Some(Path::new(&path)), flags).unwrap();
        let (table, info) = load_data(&rc).unwrap();
        let state = train(rc.train.clone(), &table, &info.split.train).unwrap();
        let s = evaluate(&state, &table, info.split.part(rc.eval_split)).unwrap().summary();
        dp.push(s.dp.mean);
    }
    let ok = dp[0] < dp[1];
    report(
        8,
        verdict(ok),
        &format!("Adult dp feast {:.4} vs maml {:.4} (reference 0.258 vs 0.473)", dp[0], dp[1]),
    );
    assert!(ok);
}
