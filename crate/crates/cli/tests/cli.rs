//! End-to-end runs of the `bgvlab` binary.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn bgvlab(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_bgvlab")).args(args).output().expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let r = bgvlab(&all);
    let v = serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}\n{}", r.stdout, r.stderr));
    (r.code, v)
}

fn node_log2(report: &Value, id: &str) -> f64 {
    report["body"]["prediction"]["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|n| n["id"] == id)
        .unwrap_or_else(|| panic!("no node {id}"))["estimate"]["log2_variance"]
        .as_f64()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_reproduces_the_reference_variances() {
    for (n, want) in [("8192", [48.76, 40.84, 95.68, 95.71]), ("16384", [49.76, 41.84, 98.68, 98.71])] {
        let (code, v) = json(&["estimate", "--n", n, "--depth", "6"]);
        assert_eq!(code, 0, "estimate at n={n} should not alarm");
        for (id, w) in ["enc", "ms1", "mult1", "mult6"].into_iter().zip(want) {
            let got = node_log2(&v, id);
            assert!((got - w).abs() <= 0.05, "n={n} {id}: {got:.3} vs {w}");
        }
    }
}

#[test]
fn depth_zero_reports_fresh_and_switched_noise() {
    let r = bgvlab(&["estimate", "--depth", "0"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("enc") && r.stdout.contains("ms1"), "{}", r.stdout);
    assert!(!r.stdout.contains("mult"), "no products at depth 0: {}", r.stdout);
}

#[test]
fn unswitched_products_grow_termwise() {
    let (code, v) = json(&["estimate", "--n", "4096", "--depth", "3", "--ms-policy", "none"]);
    assert_eq!(code, 0);
    let m: Vec<f64> = (1..=3).map(|k| node_log2(&v, &format!("mult{k}"))).collect();
    assert!(m[0] > 100.0 && m[1] > 2.0 * m[0] && m[2] > 2.0 * m[1], "doubling exponents expected: {m:?}");
    let text = bgvlab(&["estimate", "--n", "4096", "--depth", "3", "--ms-policy", "none"]).stdout;
    assert!(text.contains("non-Gaussian"), "regime note missing: {text}");
}

#[test]
fn select_params_totals_and_gap_alarm() {
    let (code, v) = json(&["select-params", "--n", "8192", "--depth", "3", "--congruence", "none"]);
    assert_eq!(code, 0, "unconstrained primes realize the bound: {}", v["alarms"]);
    let plan = &v["body"]["plan"];
    let total = plan["theoretical_total"].as_f64().unwrap();
    assert!((total - 124.5).abs() <= 1.0, "total {total}");
    assert!(plan["realization_gap"].as_f64().unwrap() <= 2.0);

    let (code, v) = json(&["select-params", "--n", "8192", "--depth", "3"]);
    assert_eq!(code, 1, "a 2n·t congruence forces a large gap");
    assert!(v["alarms"].to_string().contains("realization gap"), "{}", v["alarms"]);
}

#[test]
fn worst_case_plan_is_larger_and_clean() {
    let total = |mode: &str| {
        let (code, v) = json(&["select-params", "--depth", "3", "--mode", mode, "--congruence", "none"]);
        assert_eq!(code, 0, "{mode}: {}", v["alarms"]);
        v["body"]["plan"]["theoretical_total"].as_f64().unwrap()
    };
    let (avg, worst) = (total("average-case"), total("worst-case"));
    assert!(worst > avg + 10.0, "worst {worst} vs average {avg}");
}

#[test]
fn compare_passes_and_rejects_an_empty_grid() {
    let r = bgvlab(&["compare"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(!r.stdout.contains("FAIL"), "{}", r.stdout);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "ns = []\n").unwrap();
    let r = bgvlab(&["compare", "--config", path_str(&cfg)]);
    assert_eq!(r.code, 2, "empty grid is a usage error");
    assert!(r.stderr.contains("--ns is empty"), "{}", r.stderr);
}

#[test]
fn usage_errors_exit_two() {
    let r = bgvlab(&["simulate", "--trials", "29"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("at least 30"), "{}", r.stderr);
    assert_eq!(bgvlab(&["estimate", "--bogus"]).code, 2, "unknown flags are usage errors");
    assert_eq!(bgvlab(&["estimate", "--t", "65536"]).code, 2, "t must be prime");
    assert_eq!(bgvlab(&["simulate", "--trials", "40", "--resume"]).code, 2, "--resume needs --out");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lab.toml");
    std::fs::write(&cfg, "n = 4096\ndepth = 2\nD = 6.0\n").unwrap();
    let (_, v) = json(&["estimate", "--config", path_str(&cfg), "--depth", "1"]);
    let req = &v["body"]["request"];
    assert_eq!(req["n"], 4096, "n comes from the file");
    assert_eq!(req["M"], 1, "--depth beats the file");
    assert_eq!(req["D"], 6.0);

    let bad = dir.path().join("typo.toml");
    std::fs::write(&bad, "depht = 2\n").unwrap();
    assert_eq!(bgvlab(&["estimate", "--config", path_str(&bad)]).code, 2, "unknown keys are rejected");
}

const SIM: [&str; 10] = ["simulate", "--n", "1024", "--depth", "2", "--congruence", "none", "--trials", "60", "--out"];

fn simulate_into(dir: &Path, extra: &[&str]) -> Run {
    let mut args = SIM.to_vec();
    args.push(path_str(dir));
    args.extend(extra);
    bgvlab(&args)
}

fn samples(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("samples.csv")).unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = simulate_into(&a, &[]);
    let rb = simulate_into(&b, &[]);
    assert!(ra.code < 2 && rb.code < 2, "{}{}", ra.stderr, rb.stderr);
    assert_eq!(samples(&a), samples(&b), "same seed, same samples");
    assert!(samples(&a).starts_with("# bgvlab "), "preamble first");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["body"]["trials"], 60);
    assert_eq!(summary["body"]["failures"], 0);

    let c = tmp.path().join("c");
    simulate_into(&c, &["--seed", "2"]);
    assert_ne!(samples(&a), samples(&c), "a different seed changes the samples");
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, cut) = (tmp.path().join("full"), tmp.path().join("cut"));
    simulate_into(&full, &["--checkpoint-every", "20"]);
    simulate_into(&cut, &["--checkpoint-every", "20"]);

    // roll the second run back to its first checkpoint
    let text = samples(&cut);
    let keep: Vec<&str> = text.lines().take(2 + 20).collect();
    std::fs::write(cut.join("samples.csv"), keep.join("\n") + "\n").unwrap();
    let cp_path = cut.join("checkpoint.json");
    let mut cp: Value = serde_json::from_str(&std::fs::read_to_string(&cp_path).unwrap()).unwrap();
    cp["completed"] = 20.into();
    std::fs::write(&cp_path, cp.to_string()).unwrap();

    let r = simulate_into(&cut, &["--checkpoint-every", "20", "--resume"]);
    assert!(r.code < 2, "{}", r.stderr);
    assert_eq!(samples(&cut), samples(&full), "resume must continue the same streams");

    let r = simulate_into(&cut, &["--resume", "--seed", "9"]);
    assert_eq!(r.code, 2, "a checkpoint from another seed is refused");
    assert!(r.stderr.contains("different run"), "{}", r.stderr);
}

#[test]
fn gaussianity_reads_a_run_and_compare_joins_it() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    simulate_into(&run, &["--dump-trials", "1"]);
    assert!(run.join("dump/trial-0/secret.key").is_file(), "dumped key");
    assert!(run.join("dump/trial-0/mult1.ct").is_file(), "dumped probe ciphertext");

    let (code, v) = json(&["gaussianity", "--input", path_str(&run)]);
    assert_eq!(code, 0);
    let reports = v["body"]["reports"].as_object().unwrap();
    assert!(reports.contains_key("enc") && reports.contains_key("mult2"), "{:?}", reports.keys());

    let r = bgvlab(&["gaussianity", "--input", path_str(&run), "--probes", "mult9"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("available"), "the error lists the columns: {}", r.stderr);

    let r = bgvlab(&["compare", "--ns", "1024", "--join", path_str(&run)]);
    assert!(r.code < 2, "{}", r.stderr);
    assert!(r.stdout.contains("mult1"), "joined rows shown: {}", r.stdout);
}

#[test]
fn simulate_runs_from_a_saved_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.json");
    let r = bgvlab(&[
        "select-params",
        "--n",
        "1024",
        "--depth",
        "2",
        "--congruence",
        "none",
        "--format",
        "json",
        "--out",
        path_str(&plan),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let run = tmp.path().join("run");
    let r = bgvlab(&["simulate", "--trials", "40", "--plan", path_str(&plan), "--out", path_str(&run)]);
    assert!(r.code < 2, "{}", r.stderr);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    let primes: Vec<String> = saved["body"]["plan"]["realized_primes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_str().unwrap().to_owned())
        .collect();
    assert_eq!(summary["body"]["primes"], serde_json::json!(primes), "the chain comes from the plan");
    assert_eq!(summary["body"]["request"]["n"], 1024, "so do the scheme parameters");
    assert_eq!(summary["body"]["request"]["M"], 2, "and the circuit depth");
}
