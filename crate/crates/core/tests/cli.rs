use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_CONFIG: &str = r#"
[scene]
preset = "desk"
subcarriers = 8

[model]
d_k = 8
lstm_hidden = 8
mlp_hidden = 8
"#;

fn cmanet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmanet"))
        .current_dir(dir)
        .env_remove("CMANET_CONFIG_DIR")
        .args(args)
        .output()
        .expect("run cmanet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sha_line(o: &Output) -> String {
    stdout(o).lines().find(|l| l.starts_with("sha256 ")).expect("checksum line").to_string()
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_CONFIG).unwrap();
    dir
}

fn gen(dir: &Path, count: &str, seed: &str, out: &str, workers: &str) -> Output {
    let o = cmanet(
        dir,
        &["--config", "small.toml", "--workers", workers, "gen-data", "--count", count, "--seed", seed, "--out", out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn gen_data_is_deterministic_across_runs_and_workers() {
    let dir = workspace();
    let a = gen(dir.path(), "64", "5", "a.bin", "1");
    let b = gen(dir.path(), "64", "5", "b.bin", "1");
    let c = gen(dir.path(), "64", "5", "c.bin", "3");
    assert_eq!(sha_line(&a), sha_line(&b));
    assert_eq!(sha_line(&a), sha_line(&c));
    let bytes = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(bytes("a.bin"), bytes("c.bin"));
    let d = gen(dir.path(), "64", "6", "d.bin", "1");
    assert_ne!(sha_line(&a), sha_line(&d));
}

#[test]
fn resolved_configuration_is_echoed_with_overrides() {
    let dir = workspace();
    let o = gen(dir.path(), "4", "9", "x.bin", "1");
    let text = stdout(&o);
    let start = text.find("# resolved configuration").unwrap();
    let end = text.find("# end of configuration").unwrap();
    let echoed = &text[start..end];
    assert!(echoed.contains("seed = 9"));
    assert!(echoed.contains("n_subcarriers = 8"));
    assert!(echoed.contains("[train]"));
    assert!(start < text.find("wrote").unwrap());
}

#[test]
fn train_then_evaluate_pipeline() {
    let dir = workspace();
    let p = dir.path();
    gen(p, "120", "1", "train.bin", "1");
    gen(p, "40", "2", "test.bin", "1");
    let o = cmanet(
        p,
        &["--config", "small.toml", "train", "--data", "train.bin", "--out", "run", "--epochs", "2", "--val-every", "1"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(p.join("run/metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().filter(|l| !l.starts_with('#') && !l.starts_with("epoch")).collect();
    assert_eq!(rows.len(), 2, "{metrics}");
    assert!(rows[0].starts_with("1,") && rows[1].starts_with("2,"));
    assert!(p.join("run/checkpoint.cmck").exists());

    let o = cmanet(p, &["eval", "--checkpoint", "run/checkpoint.cmck", "--data", "test.bin", "--out", "report.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 40);
    assert_eq!(report["errors_m"].as_array().unwrap().len(), 40);
    assert!(report["median_m"].as_f64().unwrap() > 0.0);

    let o = cmanet(
        p,
        &["curve", "--checkpoint", "run/checkpoint.cmck", "--data", "test.bin", "--stride", "3", "--out", "curve.csv"],
    );
    assert!(o.status.success());
    let curve = std::fs::read_to_string(p.join("curve.csv")).unwrap();
    let ks: Vec<&str> = curve.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["3", "6", "8"]);

    let o = cmanet(
        p,
        &["hotspot", "--checkpoint", "run/checkpoint.cmck", "--data", "test.bin", "--grid", "100", "--out", "grid.csv"],
    );
    assert!(o.status.success());
    let grid = std::fs::read_to_string(p.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert!(grid.starts_with("y\\x,50,150"));
}

#[test]
fn config_directory_from_environment() {
    let dir = workspace();
    let conf = dir.path().join("conf");
    std::fs::create_dir(&conf).unwrap();
    std::fs::write(conf.join("cmanet.toml"), "[scene]\nsubcarriers = 4\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cmanet"))
        .current_dir(dir.path())
        .env("CMANET_CONFIG_DIR", &conf)
        .args(["gen-data", "--count", "2", "--out", "x.bin"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("n_subcarriers = 4"));
}

#[test]
fn gradcheck_passes_on_the_tiny_model() {
    let dir = workspace();
    let o = cmanet(dir.path(), &["gradcheck", "--tiny"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().find(|l| l.starts_with("max relative error")).unwrap().to_string();
    let rel: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(rel < 1e-4, "{line}");
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = workspace();
    let p = dir.path();
    gen(p, "8", "1", "d.bin", "1");
    let code = |args: &[&str]| {
        let o = cmanet(p, args);
        let err = String::from_utf8_lossy(&o.stderr).into_owned();
        (o.status.code(), err)
    };

    let (c, _) = code(&["train", "--no-such-flag"]);
    assert_eq!(c, Some(2));

    let (c, err) = code(&["eval", "--checkpoint", "missing.cmck", "--data", "d.bin", "--out", "r.json"]);
    assert_eq!(c, Some(3));
    assert_eq!(err.trim().lines().count(), 1, "{err}");

    std::fs::write(p.join("bad.toml"), "seed = 1\n[train]\nseed = 2\n").unwrap();
    let (c, _) = code(&["--config", "bad.toml", "gen-data", "--count", "2", "--out", "x.bin"]);
    assert_eq!(c, Some(4));
    let (c, _) = code(&["train", "--data", "d.bin", "--out", "run", "--epochs", "0"]);
    assert_eq!(c, Some(4));

    std::fs::write(p.join("bad.cmck"), b"not a checkpoint").unwrap();
    let (c, err) = code(&["eval", "--checkpoint", "bad.cmck", "--data", "d.bin", "--out", "r.json"]);
    assert_eq!(c, Some(5));
    assert!(err.contains("magic"), "{err}");

    // a checkpoint whose shape disagrees with the dataset
    let o = cmanet(
        p,
        &["--config", "small.toml", "train", "--data", "d.bin", "--out", "run", "--epochs", "1", "--val-samples", "2"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(p.join("other.toml"), "[scene]\nsubcarriers = 4\n").unwrap();
    let o = cmanet(p, &["--config", "other.toml", "gen-data", "--count", "2", "--out", "other.bin"]);
    assert!(o.status.success());
    let (c, _) = code(&["eval", "--checkpoint", "run/checkpoint.cmck", "--data", "other.bin", "--out", "r.json"]);
    assert_eq!(c, Some(4));
}

#[test]
fn help_lists_defaults() {
    let dir = workspace();
    let o = cmanet(dir.path(), &["train", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("[default: 1]"));
    assert!(text.contains("else 140"));
    assert!(text.contains("CMANET_CONFIG_DIR"));
}
