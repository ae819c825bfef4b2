use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn prefixlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefixlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = prefixlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn budget_prints_schedule_cost() {
    assert_eq!(ok(&["budget", "32:128,288:2"]).trim(), "4608");
    assert_eq!(ok(&["budget", "288:16"]).trim(), "4608");
    assert_eq!(ok(&["budget", "16:128,288:2"]).trim(), "2592");
    assert_eq!(ok(&["budget", "64:128,288:2"]).trim(), "8640");
}

#[test]
fn errors_map_to_exit_codes() {
    let bad = prefixlab(&["budget", "8:4,4:2"]);
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8(bad.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[config/BadSchedule]"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = prefixlab(&["train-critic", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    let out = prefixlab(&["gen-data", "--set", "no_such_key=1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = prefixlab(&["gen-data", "--set", "leak_prob=2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diverged_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--prompts", "20", "--rollouts", "4", "--out", s(&data)]);
    let out = prefixlab(&[
        "train-critic",
        "--data",
        s(&data),
        "--set",
        "learning_rate=1e300",
        "--set",
        "train_steps=50",
        "--out",
        s(&dir.path().join("critic")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn single_stage_oracle_schedule_is_best_of_n() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["--prompts", "30", "--seed", "5"];
    ok(&[&["sample", "--schedule", "64:16", "--selector", "oracle", "--out", s(&a)], &common[..]].concat());
    ok(&[&["sample", "--strategy", "bon:16:oracle", "--out", s(&b)], &common[..]].concat());
    let ra = fs::read(a.join("report.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.csv")).unwrap());
    let text = String::from_utf8(ra).unwrap();
    assert!(text.starts_with("strategy,prompt_id,event_count,score,oracle_score,cost_tokens,seed\n"));
    assert!(text.lines().nth(1).unwrap().starts_with("bon16-oracle,0,"));
}

#[test]
fn critic_strategies_need_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefixlab(&["sample", "--strategy", "plan-critic:8:128,64:2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn pipeline(root: &Path, jobs: &str) {
    let data = root.join("data");
    let critic = root.join("critic");
    let common = ["--seed", "3", "--jobs", jobs];
    ok(&[&["gen-data", "--prompts", "50", "--rollouts", "8", "--out", s(&data)], &common[..]].concat());
    ok(&[
        &[
            "train-critic",
            "--data",
            s(&data),
            "--set",
            "train_steps=500",
            "--out",
            s(&critic),
        ],
        &common[..],
    ]
    .concat());
    ok(&[
        &[
            "compare",
            "--data",
            s(&data),
            "--critic",
            s(&critic.join("critic.ckpt")),
            "--prompts",
            "50",
            "--out",
            s(&root.join("compare")),
        ],
        &common[..],
    ]
    .concat());
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["data", "critic", "compare"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        for n in names {
            let bytes = fs::read(dir.join(sub).join(&n)).unwrap();
            out.push((format!("{sub}/{n}"), bytes));
        }
    }
    out
}

#[test]
fn smoke_pipeline_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    pipeline(&a, "1");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "smoke pipeline took {elapsed:.1} s");

    pipeline(&b, "2");
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
    for name in ["compare/comparison.csv", "compare/summary.csv", "critic/loss.csv", "data/records.jsonl"] {
        assert!(fa.iter().any(|(n, _)| n == name), "missing {name}");
    }

    // Rerunning into the same directory rewrites identical bytes.
    pipeline(&a, "1");
    assert_eq!(files(&a), fa);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("compare/run-compare.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "compare");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]["comparison.csv"].is_string());
}

#[test]
fn probe_and_postfix_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-data", "--prompts", "120", "--rollouts", "4", "--out", s(&data)]);
    let probe = dir.path().join("probe");
    ok(&[
        "probe",
        "--data",
        s(&data),
        "--t-prefix",
        "4,8",
        "--set",
        "probe_steps=200",
        "--out",
        s(&probe),
    ]);
    let corr = fs::read_to_string(probe.join("correlations.csv")).unwrap();
    let mut lines = corr.lines();
    assert_eq!(lines.next(), Some("attribute,t_prefix,leak_prob,kendall,spearman,pearson,n"));
    assert_eq!(lines.count(), 2);
    assert!(probe.join("probe.svg").exists());

    let pv = dir.path().join("pv");
    ok(&["postfix-variance", "--prefixes", "10", "--completions", "5", "--out", s(&pv)]);
    let table = fs::read_to_string(pv.join("postfix.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("prefix_id,event_count,mean,std"));
    assert_eq!(table.lines().count(), 11);
    let summary = fs::read_to_string(pv.join("postfix_summary.csv")).unwrap();
    assert!(summary.starts_with("prefixes,completions,prefix_len,median_std,std_of_means,ratio\n10,5,8,"));
}
