//! End-to-end tests of the qdsearch binary: artifact layout, determinism,
//! manifest replay, error reporting, and the resume/compare/heatmap flows.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdsearch"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn qdsearch");
    assert!(
        out.status.success(),
        "qdsearch {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn qdsearch");
    assert!(!out.status.success(), "qdsearch {args:?} unexpectedly succeeded");
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const SMALL_TELEOP: &str = "algorithm = cma-mae\ndomain = teleop\nbudget = 120\nseed = 7\n";

#[test]
fn identical_invocations_produce_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "exp.cfg", SMALL_TELEOP);
    let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&d1, &d2] {
        run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    for name in ["manifest", "archive.csv", "stats.csv", "heatmap.pgm"] {
        assert_eq!(read(&d1.join(name)), read(&d2.join(name)), "{name} differs");
    }
    assert!(d1.join("checkpoint/final.json").exists());
}

#[test]
fn replaying_the_manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "exp.cfg", SMALL_TELEOP);
    let d1 = tmp.path().join("orig");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", d1.to_str().unwrap()]);

    let d2 = tmp.path().join("replay");
    let manifest = d1.join("manifest");
    run_ok(&["run", "--config", manifest.to_str().unwrap(), "--out", d2.to_str().unwrap()]);
    for name in ["manifest", "archive.csv", "stats.csv", "heatmap.pgm"] {
        assert_eq!(read(&d1.join(name)), read(&d2.join(name)), "{name} differs after replay");
    }
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "exp.cfg", SMALL_TELEOP);
    let (d1, d2) = (tmp.path().join("s7"), tmp.path().join("s8"));
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", d1.to_str().unwrap()]);
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        d2.to_str().unwrap(),
    ]);
    assert_ne!(read(&d1.join("archive.csv")), read(&d2.join("archive.csv")));
    let manifest = String::from_utf8(read(&d2.join("manifest"))).unwrap();
    assert!(manifest.contains("seed = 8"));
}

#[test]
fn overrides_apply_and_appear_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "exp.cfg", SMALL_TELEOP);
    let dir = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--override",
        "budget=72",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let manifest = String::from_utf8(read(&dir.join("manifest"))).unwrap();
    assert!(manifest.contains("budget = 72"), "manifest: {manifest}");
    let stats = String::from_utf8(read(&dir.join("stats.csv"))).unwrap();
    let last = stats.lines().last().unwrap();
    let evals: u64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(evals, 72, "budget override must bound the run");
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = run_err(&["run", "--config", "/nonexistent/exp.cfg"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exp.cfg"), "stderr: {stderr}");
}

#[test]
fn unknown_keys_are_reported_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "typo.cfg",
        "algorithm = cma-mae\ndomain = teleop\nbudget = 10\nbatchh = 3\n",
    );
    let out = run_err(&["run", "--config", cfg.to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("batchh"), "stderr: {stderr}");
}

#[test]
fn gradient_algorithms_fail_on_teleop_before_evaluating() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.cfg",
        "algorithm = cma-mega\ndomain = teleop\nbudget = 100\n",
    );
    let dir = tmp.path().join("out");
    let out = run_err(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gradients"), "stderr: {stderr}");
    assert!(!dir.join("archive.csv").exists(), "no results may be written");
}

#[test]
fn compare_pairs_seeds_and_is_self_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.cfg", SMALL_TELEOP);
    let b = write_config(
        tmp.path(),
        "b.cfg",
        "algorithm = uniform-baseline\ndomain = teleop\nbudget = 120\nseed = 7\n",
    );
    let dir = tmp.path().join("cmp");
    run_ok(&[
        "compare",
        "--config",
        a.to_str().unwrap(),
        "--config",
        a.to_str().unwrap(),
        "--config",
        b.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let csv = String::from_utf8(read(&dir.join("compare.csv"))).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4, "header plus three rows: {csv}");
    assert_eq!(rows[1], rows[2], "an algorithm compared against itself must tie");
    assert!(rows[3].starts_with("uniform-baseline,"));
}

#[test]
fn compare_rejects_mismatched_domains_and_unpaired_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a.cfg", SMALL_TELEOP);
    let sphere = write_config(
        tmp.path(),
        "s.cfg",
        "algorithm = cma-me\ndomain = sphere-lp\nbudget = 120\nseed = 7\n",
    );
    let out = run_err(&[
        "compare",
        "--config",
        a.to_str().unwrap(),
        "--config",
        sphere.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain"));

    let other_seed = write_config(
        tmp.path(),
        "b.cfg",
        "algorithm = cma-mae\ndomain = teleop\nbudget = 120\nseed = 9\n",
    );
    let out = run_err(&[
        "compare",
        "--config",
        a.to_str().unwrap(),
        "--config",
        other_seed.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    run_err(&["compare"]);
}

#[test]
fn heatmap_rerenders_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "exp.cfg", SMALL_TELEOP);
    let dir = tmp.path().join("out");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let rendered = tmp.path().join("again.pgm");
    run_ok(&[
        "heatmap",
        "--archive",
        dir.join("archive.csv").to_str().unwrap(),
        "--out",
        rendered.to_str().unwrap(),
    ]);
    assert_eq!(read(&dir.join("heatmap.pgm")), read(&rendered));
}

#[test]
fn empty_archive_renders_an_all_black_heatmap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "zero.cfg",
        "algorithm = cma-mae\ndomain = teleop\nbudget = 0\nseed = 1\n",
    );
    let dir = tmp.path().join("out");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let pgm = read(&dir.join("heatmap.pgm"));
    let header = b"P5\n25 25\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert!(pgm[header.len()..].iter().all(|&b| b == 0), "every pixel must be black");
}

#[test]
fn resuming_an_intermediate_checkpoint_matches_the_straight_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "exp.cfg",
        "algorithm = cma-mae\ndomain = teleop\nbudget = 144\nseed = 3\ncheckpoint.every = 2\n",
    );
    let full = tmp.path().join("full");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", full.to_str().unwrap()]);
    let midway = full.join("checkpoint/iter_000002.json");
    assert!(midway.exists(), "intermediate checkpoint missing");

    let resumed = tmp.path().join("resumed");
    run_ok(&["resume", midway.to_str().unwrap(), "--out", resumed.to_str().unwrap()]);
    for name in ["archive.csv", "stats.csv"] {
        assert_eq!(
            read(&full.join(name)),
            read(&resumed.join(name)),
            "{name} diverged after resume"
        );
    }
}

#[test]
fn dsage_runs_write_dataset_and_surrogate_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "dsage.cfg",
        "algorithm = dsage\ndomain = teleop\nseed = 2\ndsage.outer = 1\n\
         dsage.bootstrap = 15\ndsage.downsample = 8\ndsage.inner_budget = 120\n\
         train.epochs = 3\n",
    );
    let dir = tmp.path().join("out");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    for name in ["manifest", "archive.csv", "stats.csv", "heatmap.pgm", "dataset.csv", "surrogate.txt"]
    {
        assert!(dir.join(name).exists(), "{name} missing from dsage output");
    }
    let dataset = String::from_utf8(read(&dir.join("dataset.csv"))).unwrap();
    assert!(dataset.lines().count() >= 2, "dataset should hold the bootstrap rows");
    let surrogate = String::from_utf8(read(&dir.join("surrogate.txt"))).unwrap();
    assert!(surrogate.starts_with("surrogate-net v1"));

    // Replay from the manifest: same ground-truth archive.
    let d2 = tmp.path().join("replay");
    run_ok(&[
        "run",
        "--config",
        dir.join("manifest").to_str().unwrap(),
        "--out",
        d2.to_str().unwrap(),
    ]);
    assert_eq!(read(&dir.join("archive.csv")), read(&d2.join("archive.csv")));
}
