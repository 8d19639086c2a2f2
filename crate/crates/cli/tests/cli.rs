use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ptm_energy::metrics::{self, default_bin_centers, TmKernel};
use ptm_energy::screening::{screening_report, ScoredCandidate};
use ptm_energy::tensor_io::encode_npy;
use ptm_energy::{ChainMap, PaeLogits};
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ptm-energy");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("PTMENERGY_BINS")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn chains_toml(binder: usize, target: usize) -> String {
    format!(
        "binder = \"A\"\ntargets = [\"B\"]\nchains = [{{ label = \"A\", length = {binder} }}, {{ label = \"B\", length = {target} }}]\n"
    )
}

/// Deterministic, non-symmetric logits in roughly [-3, 3].
fn logits(len: usize, bins: usize, salt: f64) -> Vec<f64> {
    (0..len * len * bins)
        .map(|k| 3.0 * ((k as f64) * 0.7548776662 + salt).sin())
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn npy(&self, name: &str, shape: &[usize], data: &[f64]) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, encode_npy(shape, data)).unwrap();
        p
    }

    fn text(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        run(self.path(), args)
    }

    fn files(&self, sub: &str) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<_> = fs::read_dir(self.path().join(sub))
            .map(|rd| {
                rd.flatten()
                    .map(|e| (e.file_name().to_string_lossy().to_string(), fs::read(e.path()).unwrap()))
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }
}

#[test]
fn score_zero_tensor_gives_log_kernel_sum() {
    let fx = Fixture::new();
    fx.npy("zero.npy", &[4, 4, 64], &vec![0.0; 4 * 4 * 64]);
    fx.text("c.toml", &chains_toml(2, 2));
    let v = stdout_json(&fx.run(&["--json", "score", "--logits", "zero.npy", "--chains", "c.toml"]));
    let kernel = TmKernel::new(4, default_bin_centers()).unwrap();
    let expected = -kernel.weights().iter().sum::<f64>().ln();
    assert!((v["ptm_energy"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn score_subsets_and_oracle_fixture() {
    let fx = Fixture::new();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/small_oracles.json")).unwrap();
    let fixtures: Value = serde_json::from_str(&text).unwrap();
    let f = &fixtures[0];
    let data: Vec<f64> = f["logits"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().parse().unwrap()).collect();
    let bins: Vec<f64> = f["bin_centers"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect();
    fx.npy("l.npy", &[4, 4, 3], &data);
    fx.npy("bins.npy", &[3], &bins);
    fx.text("c.toml", &chains_toml(2, 2));
    let base = ["--json", "score", "--logits", "l.npy", "--chains", "c.toml", "--bins", "bins.npy"];
    let all = stdout_json(&fx.run(&base));
    for key in ["ptm", "iptm", "iptm_mean", "ptm_energy"] {
        let want: f64 = f[key].as_str().unwrap().parse().unwrap();
        assert!((all[key].as_f64().unwrap() - want).abs() <= 1e-12, "{key}");
    }
    let only = |m: &str| {
        let mut args = base.to_vec();
        args.extend(["--metric", m]);
        stdout_json(&fx.run(&args))
    };
    let iptm = only("iptm");
    let mean = only("iptm-mean");
    assert_eq!(iptm.as_object().unwrap().len(), 1);
    assert!(mean["iptm_mean"].as_f64().unwrap() <= iptm["iptm"].as_f64().unwrap());

    // the bin grid also comes from the environment
    let env = Command::new(BIN)
        .args(["--json", "score", "--logits", "l.npy", "--chains", "c.toml", "--metric", "ptm"])
        .env("PTMENERGY_BINS", "bins.npy")
        .current_dir(fx.path())
        .output()
        .unwrap();
    assert_eq!(stdout_json(&env)["ptm"], all["ptm"]);
}

#[test]
fn score_output_file_is_idempotent() {
    let fx = Fixture::new();
    fx.npy("l.npy", &[5, 5, 64], &logits(5, 64, 0.3));
    fx.npy("p.npy", &[5], &[0.9, 0.8, 0.7, 0.1, 0.2]);
    fx.text("c.toml", &chains_toml(3, 2));
    let args = ["score", "--logits", "l.npy", "--chains", "c.toml", "--plddt", "p.npy", "--out", "m.json"];
    assert!(fx.run(&args).status.success());
    let first = fs::read(fx.path().join("m.json")).unwrap();
    assert!(fx.run(&args).status.success());
    assert_eq!(first, fs::read(fx.path().join("m.json")).unwrap());
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert!((v["plddt_mean"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn exit_codes_follow_error_categories() {
    let fx = Fixture::new();
    fx.text("c.toml", &chains_toml(2, 2));
    fx.text("bad.npy", "not an npy file");
    let mut nan = vec![0.0; 2 * 2 * 4];
    nan[5] = f64::NAN;
    fx.npy("nan.npy", &[2, 2, 4], &nan);
    fx.npy("ok.npy", &[4, 4, 8], &logits(4, 8, 0.0));

    let code = |args: &[&str]| fx.run(args).status.code().unwrap();
    assert_eq!(code(&["score", "--logits", "missing.npy", "--chains", "c.toml"]), 2);
    assert_eq!(code(&["score", "--logits", "bad.npy", "--chains", "c.toml"]), 1);
    assert_eq!(code(&["score", "--logits", "nan.npy", "--chains", "c.toml"]), 1);
    // chain map declares 4 residues, tensor has 4 but only 8 bins vs 64 default
    assert_eq!(code(&["score", "--logits", "ok.npy", "--chains", "c.toml"]), 1);
    fx.text("c5.toml", &chains_toml(2, 3));
    assert_eq!(code(&["score", "--logits", "ok.npy", "--chains", "c5.toml"]), 1);

    let out = fx.run(&["--json", "score", "--logits", "bad.npy", "--chains", "c.toml"]);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "BadMagic");
    assert_eq!(err["error"]["category"], "validation");
}

#[test]
fn grad_report_summaries() {
    let fx = Fixture::new();
    fx.npy("l.npy", &[4, 4, 64], &logits(4, 64, 1.1));
    fx.text("c.toml", &chains_toml(2, 2));
    let common = ["--logits", "l.npy", "--chains", "c.toml", "--check-fd"];

    let mut args = vec!["--json", "grad-report", "--objective", "ptm-energy", "--out", "e"];
    args.extend(common);
    let e = stdout_json(&fx.run(&args));
    assert_eq!(e["engaged_fraction"], 1.0);
    assert_eq!(e["support_pairs"], 8);
    assert!(e["finite_difference"]["max_relative_error"].as_f64().unwrap() < 1e-6);

    let mut args = vec!["--json", "grad-report", "--objective", "iptm", "--out", "i"];
    args.extend(common);
    let i = stdout_json(&fx.run(&args));
    assert!(i["argmax_row"].as_u64().unwrap() < 4);
    assert_eq!(i["support_pairs"], 2);
    assert!(i["finite_difference"]["max_relative_error"].as_f64().unwrap() < 1e-6);

    let heatmap = fs::read_to_string(fx.path().join("e/gradient_heatmap.csv")).unwrap();
    assert_eq!(heatmap.lines().next().unwrap(), "binder_residue,2,3");
    assert_eq!(heatmap.lines().count(), 3);
    let before = fx.files("e");
    let mut args = vec!["grad-report", "--objective", "ptm-energy", "--out", "e"];
    args.extend(common);
    assert!(fx.run(&args).status.success());
    assert_eq!(before, fx.files("e"));
}

#[test]
fn oversized_fd_check_is_rejected_without_output() {
    let fx = Fixture::new();
    fx.npy("big.npy", &[13, 13, 64], &logits(13, 64, 0.0));
    fx.text("c.toml", &chains_toml(6, 7));
    let out = fx.run(&[
        "grad-report", "--logits", "big.npy", "--chains", "c.toml", "--objective", "ptm-energy", "--check-fd", "--out", "g",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TooLargeForOracle"));
    assert!(fx.files("g").is_empty());
}

const DESIGN: &str = "binder_length = 6\nstage_steps = [8, 4, 4]\ngreedy_proposals = 20\n\
plddt_terminate_below = 0.0\n[target]\nlength = 8\n[predictor]\nbins = 12\nfeatures = 4\n";

#[test]
fn design_batches_are_deterministic() {
    let fx = Fixture::new();
    fx.text("d.toml", DESIGN);
    let a = fx.run(&["design", "--config", "d.toml", "--out", "a", "--batch", "2", "--seed", "3"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = fx.run(&["design", "--config", "d.toml", "--out", "b", "--batch", "2", "--seed", "3", "--jobs", "1"]);
    assert!(b.status.success());
    let files = fx.files("a");
    assert_eq!(files, fx.files("b"));
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "batch_summary.json",
            "designs.fasta",
            "trajectory_seed3.csv",
            "trajectory_seed3.json",
            "trajectory_seed4.csv",
            "trajectory_seed4.json"
        ]
    );
}

#[test]
fn design_objectives_are_tagged() {
    let fx = Fixture::new();
    fx.text("d.toml", DESIGN);
    let summary = |objective: &str| {
        let out = fx.run(&["--json", "design", "--config", "d.toml", "--out", objective, "--objective", objective]);
        let batch = stdout_json(&out);
        let one: Value = serde_json::from_slice(&fs::read(fx.path().join(objective).join("trajectory_seed0.json")).unwrap()).unwrap();
        (batch, one)
    };
    let (eb, e) = summary("ptm-energy");
    let (nb, n) = summary("none");
    assert_eq!(eb["objective"], "ptm_energy");
    assert_eq!(nb["objective"], "none");
    assert_eq!(e["energy_gradient_support"], 6);
    assert_eq!(n["energy_gradient_support"], 0);
    assert!(e["gradient_sparsity"]["ptm_energy_engaged_fraction"].as_f64().is_some());
}

#[test]
fn ten_trajectory_batch_has_decreasing_greedy_traces() {
    let fx = Fixture::new();
    fx.text("d.toml", DESIGN);
    let v = stdout_json(&fx.run(&["--json", "design", "--config", "d.toml", "--out", "o", "--batch", "10"]));
    assert_eq!(v["trajectories"], 10);
    assert_eq!(v["all_greedy_traces_decreasing"], true);
    assert_eq!(v["terminated_early"], 0);
    let fasta = fs::read_to_string(fx.path().join("o/designs.fasta")).unwrap();
    assert_eq!(fasta.lines().filter(|l| l.starts_with('>')).count(), 10);
}

#[test]
fn design_config_errors() {
    let fx = Fixture::new();
    fx.text("bad.toml", "binder_length = 6\nlearning_rate = 0.0\n");
    fx.text("unknown.toml", "binder_lenght = 6\n");
    let code = |args: &[&str]| fx.run(args).status.code().unwrap();
    assert_eq!(code(&["design", "--config", "bad.toml", "--out", "o"]), 1);
    assert_eq!(code(&["design", "--config", "unknown.toml", "--out", "o"]), 1);
    assert_eq!(code(&["design", "--config", "missing.toml", "--out", "o"]), 2);
    assert!(fx.files("o").is_empty());
}

/// Six candidates over two targets, positives given the most favourable
/// logits so pTMEnergy ranks them first.
fn screening_fixture(fx: &Fixture) -> Vec<ScoredCandidate> {
    fx.text("shared.toml", &chains_toml(2, 3));
    let bins = default_bin_centers::<f64>();
    let mut csv = String::from("candidate_id,label,logits_path,score\n");
    let mut expected = Vec::new();
    for c in 0..6 {
        let label = u8::from(c < 2);
        let offset = if label == 1 { 1.0 } else { 0.0 };
        let data: Vec<f64> = logits(5, 64, c as f64)
            .iter()
            .enumerate()
            .map(|(k, v)| if k % 64 < 8 { v + 4.0 * offset } else { *v })
            .collect();
        fx.npy(&format!("cand{c}.npy"), &[5, 5, 64], &data);
        let l = PaeLogits::new(data, 5, 64).unwrap();
        let kernel = TmKernel::new(5, bins.clone()).unwrap();
        let e = metrics::ptm_energy(&l, &ChainMap::binder_target(2, 3).unwrap(), &kernel).unwrap();
        expected.push(ScoredCandidate::new(format!("cand{c}"), label, -e));
        csv.push_str(&format!("cand{c},{label},cand{c}.npy,\n"));
    }
    fx.text("table.csv", &csv);
    expected
}

#[test]
fn screen_reports_match_the_library() {
    let fx = Fixture::new();
    let expected = screening_fixture(&fx);
    let v = stdout_json(&fx.run(&[
        "--json", "screen", "--table", "table.csv", "--metric", "ptm-energy", "--chains", "shared.toml", "--k", "1,2,5",
        "--out", "s",
    ]));
    let lib = screening_report(&expected, &[1, 2, 5]).unwrap();
    assert_eq!(v["auprc"], 1.0);
    assert_eq!(v["auprc"].as_f64().unwrap(), lib.auprc);
    let pk: Vec<f64> = v["precision_at_k"].as_array().unwrap().iter().map(|p| p["precision"].as_f64().unwrap()).collect();
    assert_eq!(pk, lib.precision_at_k.iter().map(|p| p.precision).collect::<Vec<_>>());
    for (got, want) in v["positive_scores"].as_array().unwrap().iter().zip(&lib.positive_scores) {
        assert!((got.as_f64().unwrap() - want).abs() <= 1e-12);
    }
    let ranking = fs::read_to_string(fx.path().join("s/ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 7);
    let histogram = fs::read_to_string(fx.path().join("s/histogram.csv")).unwrap();
    let total: usize = histogram.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 6);

    // default cutoffs are limited to what six candidates support
    let d = stdout_json(&fx.run(&["--json", "screen", "--table", "table.csv", "--metric", "iptm", "--chains", "shared.toml", "--out", "d"]));
    assert_eq!(d["precision_at_k"].as_array().unwrap().len(), 1);
    assert_eq!(d["precision_at_k"][0]["k"], 5);
}

#[test]
fn screen_errors_leave_no_output() {
    let fx = Fixture::new();
    screening_fixture(&fx);
    let out = fx.run(&["screen", "--table", "table.csv", "--metric", "ptm-energy", "--chains", "shared.toml", "--k", "5,10", "--out", "s"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("KTooLarge"));
    assert!(fx.files("s").is_empty());

    let out = fx.run(&["screen", "--table", "table.csv", "--metric", "ptm-energy", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
}

fn metrics_json(plddt: Option<f64>, iptm: f64, ptm: f64, ipae: f64) -> String {
    let mut v = serde_json::json!({ "iptm": iptm, "ptm": ptm, "interface_pae_norm": ipae });
    if let Some(p) = plddt {
        v["plddt_mean"] = p.into();
    }
    v.to_string()
}

#[test]
fn filter_verdicts() {
    let fx = Fixture::new();
    fx.text("pass.json", &metrics_json(Some(0.9), 0.6, 0.46, 0.3));
    fx.text("edge.json", &metrics_json(Some(0.9), 0.6, 0.46, 0.4));
    fx.text("missing.json", &metrics_json(None, 0.6, 0.46, 0.3));

    let out = fx.run(&["filter", "--metrics", "pass.json"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "pass");

    let out = fx.run(&["filter", "--metrics", "edge.json"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("fail: interface_pae_norm"), "{text}");

    let out = fx.run(&["filter", "--metrics", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingField"));

    let mut child = Command::new(BIN)
        .args(["--json", "filter"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(metrics_json(Some(0.9), 0.6, 0.46, 0.3).as_bytes()).unwrap();
    let v = stdout_json(&child.wait_with_output().unwrap());
    assert_eq!(v["pass"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 4);
}

#[test]
fn filter_overrides_warn_loudly() {
    let fx = Fixture::new();
    fx.text("edge.json", &metrics_json(Some(0.9), 0.6, 0.46, 0.4));
    let out = fx.run(&["filter", "--metrics", "edge.json", "--override", "interface_pae_max=0.5"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "pass");
    assert!(String::from_utf8_lossy(&out.stderr).contains("WARNING"));
    let bad = fx.run(&["filter", "--metrics", "edge.json", "--override", "plddt=0.5"]);
    assert_eq!(bad.status.code(), Some(1));
}
