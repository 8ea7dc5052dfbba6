use std::path::Path;
use std::process::{Command, Output};

use mixpivot::chainfile::{load_chain, save_chain};
use mixpivot::ChainBuilder;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixpivot"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["relabel", "--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["--bogus"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    // Missing required input source or flag value.
    assert_eq!(code(&run(&["pipeline", "--out", "x"])), 1);
    assert_eq!(code(&run(&["simulate", "--scenario", "Q", "--out", "x"])), 1);
}

fn simulate_and_sample(dir: &Path) -> (String, String) {
    let data = dir.join("data.csv").to_string_lossy().into_owned();
    let chain = dir.join("chain.ndjson").to_string_lossy().into_owned();
    let out = run(&[
        "simulate", "--scenario", "B", "--n", "400", "--seed", "5", "--out", &data,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&[
        "sample", "--data", &data, "--G", "4", "--iters", "150", "--burnin", "30", "--seed",
        "9", "--out", &chain,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (data, chain)
}

#[test]
fn simulate_sample_relabel_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (_data, chain) = simulate_and_sample(dir.path());

    let loaded = load_chain(dir.path().join("chain.ndjson")).unwrap();
    assert_eq!(loaded.h(), 150);
    assert_eq!(loaded.g(), 4);
    assert_eq!(loaded.n(), 400);
    assert_eq!(loaded.meta().burnin, Some(30));

    let out_a = dir.path().join("a");
    let out = run(&[
        "relabel", "--chain", &chain, "--criterion", "b", "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let relabelled = load_chain(out_a.join("relabelled.ndjson")).unwrap();
    assert_eq!(relabelled.g(), 4);
    assert!(relabelled.h() > 0);
    assert_eq!(
        relabelled.meta().relabelled_by.as_deref(),
        Some("pivotal:b")
    );

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("report.json")).unwrap())
            .unwrap();
    let kept = report["kept_proportion"].as_f64().unwrap();
    assert!(kept > 0.0 && kept <= 1.0);
    assert_eq!(
        report["kept"].as_array().unwrap().len(),
        relabelled.h()
    );
    assert_eq!(report["pivots"].as_array().unwrap().len(), 4);
    assert!(out_a.join("groupprobs.csv").exists());

    // Re-running with the same inputs is byte-identical.
    let out_b = dir.path().join("b");
    let out = run(&[
        "relabel", "--chain", &chain, "--criterion", "b", "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for file in ["relabelled.ndjson", "report.json", "groupprobs.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(file)).unwrap(),
            std::fs::read(out_b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = run(&[
        "simulate", "--scenario", "A", "--n", "120", "--seed", "3", "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let c1 = dir.path().join("c1.ndjson");
    let c2 = dir.path().join("c2.ndjson");
    for c in [&c1, &c2] {
        let out = run(&[
            "sample", "--data", data.to_str().unwrap(), "--G", "2", "--iters", "40",
            "--burnin", "10", "--seed", "11", "--out", c.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(&c1).unwrap(),
        std::fs::read(&c2).unwrap()
    );
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_data, chain) = simulate_and_sample(dir.path());
    let out_dir = dir.path().join("out");
    let out_str = out_dir.to_str().unwrap();

    let out = run(&["relabel", "--chain", &chain, "--criterion", "q", "--out", out_str]);
    assert_eq!(code(&out), 1);

    let out = run(&[
        "relabel", "--chain", &chain, "--criterion", "mus", "--G-hat", "7", "--out", out_str,
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("MUS capped"), "{}", stderr(&out));

    let out = run(&["relabel", "--chain", "/no/such/file", "--out", out_str]);
    assert_eq!(code(&out), 1);

    // Wrong number of manual pivots.
    let out = run(&[
        "relabel", "--chain", &chain, "--pivots", "1,2", "--out", out_str,
    ]);
    assert_eq!(code(&out), 1);

    // The comparison must name at least one baseline (clap-enforced).
    let out = run(&[
        "compare", "--scenario", "B", "--n", "50", "--iters", "20", "--out", out_str,
    ]);
    assert_eq!(code(&out), 1);

    // Baseline command rejects the method under comparison.
    let out = run(&[
        "baseline", "--chain", &chain, "--method", "pivotal", "--out", out_str,
    ]);
    assert_eq!(code(&out), 1);

    // stephens without --data.
    let out = run(&[
        "baseline", "--chain", &chain, "--method", "stephens", "--out", out_str,
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
}

#[test]
fn empty_filter_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Every sweep occupies two components, so anchoring a single group
    // drops everything.
    let mut b = ChainBuilder::new(2, 4, 1);
    b.push_iteration(&[1, 1, 2, 2], &[0.0, 5.0], &[0.5, 0.5], None)
        .unwrap();
    b.push_iteration(&[2, 2, 1, 1], &[5.0, 0.0], &[0.5, 0.5], None)
        .unwrap();
    let chain = b.finish().unwrap();
    let path = dir.path().join("chain.ndjson");
    save_chain(&chain, &path).unwrap();

    let out = run(&[
        "relabel", "--chain", path.to_str().unwrap(), "--G-hat", "1", "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn baseline_and_metrics_commands() {
    let dir = tempfile::tempdir().unwrap();
    let (data, chain) = simulate_and_sample(dir.path());
    let out_dir = dir.path().join("out");
    let out_str = out_dir.to_str().unwrap();

    let out = run(&[
        "baseline", "--chain", &chain, "--method", "ordering", "--out", out_str,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let relabelled = load_chain(out_dir.join("relabelled_ordering.ndjson")).unwrap();
    assert_eq!(relabelled.meta().relabelled_by.as_deref(), Some("ordering:mu1"));

    let out = run(&[
        "baseline", "--chain", &chain, "--method", "stephens", "--data", &data, "--out",
        out_str,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("relabelled_stephens.ndjson").exists());

    let metrics_dir = dir.path().join("metrics");
    let out = run(&[
        "metrics", "--chain", &chain, "--out", metrics_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(metrics_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["units"], 400);
    assert_eq!(summary["components"], 4);
    // The raw chain switches labels thanks to the permutation move.
    assert!(summary["switch_rate_mu1"].as_f64().unwrap() > 0.0);
    let estimates = std::fs::read_to_string(metrics_dir.join("estimates.csv")).unwrap();
    assert_eq!(estimates.lines().count(), 1 + 4 * 2);
}

#[test]
fn pipeline_and_compare_commands() {
    let dir = tempfile::tempdir().unwrap();
    let pipe_dir = dir.path().join("pipe");
    let out = run(&[
        "pipeline", "--scenario", "B", "--n", "400", "--G", "4", "--iters", "150",
        "--burnin", "30", "--seed", "4", "--criterion", "e", "--reps", "2", "--out",
        pipe_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in ["kept.csv", "metrics.csv", "relabelled.ndjson", "report.json"] {
        assert!(pipe_dir.join(file).exists(), "{file}");
    }
    let kept = std::fs::read_to_string(pipe_dir.join("kept.csv")).unwrap();
    assert_eq!(kept.lines().count(), 3);

    let cmp_dir = dir.path().join("cmp");
    let out = run(&[
        "compare", "--scenario", "B", "--n", "400", "--G", "4", "--iters", "150",
        "--burnin", "30", "--seed", "4", "--baseline", "pk", "--baseline", "ordering",
        "--out", cmp_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "estimates.csv",
        "errors.csv",
        "summary.csv",
        "relabelled_pivotal_b.ndjson",
        "relabelled_pk.ndjson",
        "relabelled_ordering.ndjson",
    ] {
        assert!(cmp_dir.join(file).exists(), "{file}");
    }
    let summary = std::fs::read_to_string(cmp_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,switch_rate,kept_proportion,seconds\n"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn threads_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "pipeline", "--scenario", "B", "--n", "300", "--iters", "60", "--burnin", "10",
            "--reps", "1", "--out", dir.path().join("t").to_str().unwrap(),
        ])
        .env("PIVOTAL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("PIVOTAL_THREADS"), "{}", stderr(&out));

    let out = bin()
        .args([
            "pipeline", "--scenario", "B", "--n", "300", "--iters", "60", "--burnin", "10",
            "--reps", "2", "--out", dir.path().join("t2").to_str().unwrap(),
        ])
        .env("PIVOTAL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}
