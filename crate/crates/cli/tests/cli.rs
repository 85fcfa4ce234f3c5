use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn isoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoflow"))
        .args(args)
        .env_remove("ISOFLOW_THREADS")
        .output()
        .unwrap()
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = isoflow(&args);
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gaussian_slab_is_all_verified() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("all", &config("gaussian_slab.cfg"), dir.path(), &[]), 0);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["status"], "verified");
    assert_eq!(summary["records"].as_array().unwrap().len(), 6);
    let compare = json(&dir.path().join("compare.json"));
    assert_eq!(compare["metrics"]["strict"], true);
    for name in ["profile_parallel.csv", "profile_perp.csv", "transport.csv", "spectrum.csv", "jacobi.csv", "optimize_trace_0.csv", "optimize_curve_0.csv", "resolved.cfg"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let header = fs::read_to_string(dir.path().join("profile_perp.csv")).unwrap();
    assert!(header.starts_with("s,V,A,v,F,dF,ddF\n"));
    let header = fs::read_to_string(dir.path().join("optimize_trace_0.csv")).unwrap();
    assert!(header.starts_with("iter,length,area_err,grad_norm\n"));
}

#[test]
fn quadratic_slab_expects_unstable_parallel() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("all", &config("quadratic_slab.cfg"), dir.path(), &[]), 0);
    let st = json(&dir.path().join("stability.json"));
    assert_eq!(st["status"], "verified");
    assert_eq!(st["metrics"]["parallel"], "unstable");
    let w = st["metrics"]["witness"].as_f64().unwrap();
    let expected = -2.0 * (2.0 * std::f64::consts::PI).sqrt();
    assert!((w - expected).abs() < 1e-10 * expected.abs());
}

#[test]
fn log_power_transport_contracts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("transport", &config("logpower_halfspace.cfg"), dir.path(), &[]), 0);
    let t = json(&dir.path().join("transport.json"));
    assert_eq!(t["metrics"]["contraction_certified"], true);
    assert!(t["metrics"]["max_drho"].as_f64().unwrap() <= 1.0 + 1e-6);
}

#[test]
fn affine_whole_space_profiles_tie() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("profile", &config("affine_whole_space.cfg"), dir.path(), &[]), 0);
    let c = json(&dir.path().join("compare.json"));
    assert_eq!(c["status"], "verified");
    assert_eq!(c["metrics"]["strict"], false);
    assert_eq!(c["metrics"]["tie_everywhere"], true);
}

#[test]
fn expect_bound_turns_diagnostic_into_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("nonconcave_diagnostic.cfg");
    assert_eq!(run("spectrum", &cfg, &dir.path().join("a"), &[]), 0);
    assert_eq!(run("spectrum", &cfg, &dir.path().join("b"), &["--expect-bound"]), 2);
    let s = json(&dir.path().join("b/spectrum.json"));
    assert_eq!(s["status"], "violated");
    assert!(!s["witnesses"].as_array().unwrap().is_empty());
    assert!(s["metrics"]["lambda"].as_f64().unwrap() < 1.0);
}

#[test]
fn malformed_configs_exit_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for (k, text) in [
        "[density]\nlower = 1\nupper = 0\n",
        "[density]\nweight = nope\n",
        "[density\nc = 1\n",
        "\u{0}\u{1}garbage = = =\n",
        "[profile]\ngrid = -4\n",
        "[density]\nc = nan\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = dir.path().join(format!("bad{k}.cfg"));
        fs::write(&cfg, text).unwrap();
        let out = dir.path().join(format!("out{k}"));
        assert_eq!(run("profile", &cfg, &out, &[]), 1, "{text}");
        assert!(!out.exists());
    }
    let out = dir.path().join("missing");
    assert_eq!(run("all", &dir.path().join("does-not-exist.cfg"), &out, &[]), 1);
    assert_eq!(isoflow(&["profile"]).status.code(), Some(1));
    assert_eq!(isoflow(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    assert_eq!(run("all", &config("gaussian_slab.cfg"), &file.join("sub"), &[]), 1);
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("quadratic_slab.cfg");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("all", &cfg, &a, &["--threads", "1"]), 0);
    assert_eq!(run("all", &cfg, &b, &["--threads", "3"]), 0);
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() >= 10);
    assert_eq!(fa, fb);
}

#[test]
fn resolved_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(run("jacobi", &config("logpower_halfspace.cfg"), &first, &[]), 0);
    let echo = first.join("resolved.cfg");
    let second = dir.path().join("second");
    assert_eq!(run("jacobi", &echo, &second, &[]), 0);
    let a = fs::read_to_string(&echo).unwrap();
    let b = fs::read_to_string(second.join("resolved.cfg")).unwrap();
    assert_eq!(a.replace(first.to_str().unwrap(), "OUT"), b.replace(second.to_str().unwrap(), "OUT"));
    assert_eq!(csv_files(&first), csv_files(&second));
}
