use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aliformer"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TINY: &[&str] = &[
    "--d-x",
    "8",
    "--n-layers",
    "1",
    "--n-heads",
    "2",
    "--epochs",
    "2",
    "--batch-size",
    "16",
];

fn synth(dir: &Path) {
    ok(
        dir,
        &[
            "--seed",
            "3",
            "data",
            "synth",
            "--out",
            "set",
            "--series",
            "20",
            "--history-len",
            "12",
            "--horizon",
            "3",
        ],
    );
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn synth_validate_stats() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    assert!(dir.path().join("set/data.csv").exists());
    let v = ok(
        dir.path(),
        &["--config", "set/config.toml", "data", "validate"],
    );
    assert!(v.contains("20 series"), "{v}");
    let s = ok(
        dir.path(),
        &["--config", "set/config.toml", "data", "stats"],
    );
    assert!(s.contains("price") && s.contains("ord"), "{s}");
}

#[test]
fn train_evaluate_whatif_attn_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let cfg = ["--config", "set/config.toml"];
    let out = ok(d, &with(&with(&cfg, &["train", "--out", "m.ckpt"]), TINY));
    assert!(out.contains("best epoch"), "{out}");

    let e1 = ok(
        d,
        &with(
            &cfg,
            &["evaluate", "--checkpoint", "m.ckpt", "--json", "r.json"],
        ),
    );
    let e2 = ok(d, &with(&cfg, &["evaluate", "--checkpoint", "m.ckpt"]));
    assert_eq!(e1, e2);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert!(report["avg_mse"].as_f64().unwrap() >= 0.0);

    ok(
        d,
        &with(
            &cfg,
            &[
                "whatif",
                "--checkpoint",
                "m.ckpt",
                "--series",
                "syn00000",
                "--column",
                "price",
                "--scale",
                "0.8",
                "--start",
                "13",
                "--end",
                "15",
                "--out",
                "wi",
            ],
        ),
    );
    let csv = std::fs::read_to_string(d.join("wi/fig6_whatif.csv")).unwrap();
    assert!(csv.starts_with("scenario,step,target,value"), "{csv}");
    assert!(csv.contains("baseline") && csv.contains("price x0.8"));

    ok(
        d,
        &with(
            &cfg,
            &[
                "attn-stats",
                "--checkpoint",
                "m.ckpt",
                "--bins",
                "10",
                "--out",
                "attn",
            ],
        ),
    );
    let prop = std::fs::read_to_string(d.join("attn/fig7_proportion.csv")).unwrap();
    assert_eq!(prop.lines().count(), 2, "header + one layer: {prop}");
}

#[test]
fn f32_and_reruns_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let cfg = ["--config", "set/config.toml", "--precision", "f32"];
    ok(d, &with(&with(&cfg, &["train", "--out", "a.ckpt"]), TINY));
    ok(d, &with(&with(&cfg, &["train", "--out", "b.ckpt"]), TINY));
    assert_eq!(
        std::fs::read(d.join("a.ckpt")).unwrap(),
        std::fs::read(d.join("b.ckpt")).unwrap()
    );
}

#[test]
fn sweep_and_ablate_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let cfg = ["--config", "set/config.toml"];
    ok(
        d,
        &with(
            &with(
                &cfg,
                &["sweep", "--param", "p2", "--values", "0,0.5", "--out", "sw"],
            ),
            TINY,
        ),
    );
    let sw = std::fs::read_to_string(d.join("sw/fig5_sensitivity.csv")).unwrap();
    assert_eq!(sw.lines().count(), 3, "{sw}");
    let table = ok(d, &with(&with(&cfg, &["ablate", "--out", "ab"]), TINY));
    assert!(
        table.contains("wo/future") && table.contains("wo/AliAttention"),
        "{table}"
    );
    assert!(d.join("ab/table2_ablation.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    // config error: bad split ratios
    let out = run(
        d,
        &[
            "--config",
            "set/config.toml",
            "train",
            "--out",
            "m.ckpt",
            "--split-ratios",
            "0.5,0.5,0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    // config error: unknown key in config file
    std::fs::write(d.join("bad.toml"), "[model]\nwidth = 3\n").unwrap();
    assert_eq!(
        run(d, &["--config", "bad.toml", "data", "validate"])
            .status
            .code(),
        Some(2)
    );
    // data error: missing file
    let out = run(
        d,
        &[
            "--config",
            "set/config.toml",
            "data",
            "validate",
            "--data",
            "nope.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    // data error: checkpoint is garbage
    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    let out = run(
        d,
        &[
            "--config",
            "set/config.toml",
            "evaluate",
            "--checkpoint",
            "junk.ckpt",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    // numeric failure: divergence
    let out = run(
        d,
        &with(
            &[
                "--config",
                "set/config.toml",
                "train",
                "--out",
                "m.ckpt",
                "--lr",
                "1e200",
                "--clip-norm",
                "0",
            ],
            TINY,
        ),
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
