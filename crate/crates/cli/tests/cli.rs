use std::path::Path;
use std::process::{Command, Output};

use irisforge::toydata::{load_manifest, MANIFEST_FILE};
use irisforge_cli::SNAPSHOT_FILE;

fn irisforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irisforge")).args(args).env_remove("IRISFORGE_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_toy(out: &Path, ids: &str, seed: &str) -> Output {
    irisforge(&["make-toy", "--ids", ids, "--styles", "3", "--size", "64", "--seed", seed, "--out", s(out)])
}

#[test]
fn make_toy_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let r = make_toy(&out, "3", "1");
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let m = load_manifest(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.len(), m.identities().len(), m.seed), (9, 3, 1));
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(SNAPSHOT_FILE)).unwrap()).unwrap();
    assert_eq!(snap["seed"], 1);
    assert_eq!(snap["ids"], 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&irisforge(&["make-toy", "--seed", "1", "--out", d, "--bogus"])), 1);
    assert_eq!(code(&irisforge(&["no-such-command"])), 1);
    assert_eq!(code(&irisforge(&[])), 1);
    assert_eq!(code(&irisforge(&["--help"])), 0);
    assert_eq!(code(&irisforge(&["make-toy", "--out", d])), 1);
    assert_eq!(code(&irisforge(&["make-toy", "--seed", "x", "--out", d])), 1);
    let missing = dir.path().join("missing.bin");
    let r = irisforge(&["generate", "--checkpoint", s(&missing), "--source", s(&missing), "--seed", "1", "--out", d]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.bin"));
    assert_eq!(code(&irisforge(&["--threads", "0", "make-toy", "--seed", "1", "--out", d])), 1);
    let r = Command::new(env!("CARGO_BIN_EXE_irisforge"))
        .args(["make-toy", "--seed", "1", "--out", d])
        .env("IRISFORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&r), 1);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let cfg = dir.path().join("cfg.json");
    let body = serde_json::json!({ "seed": 5, "ids": 4, "styles": 2, "out": out });
    std::fs::write(&cfg, body.to_string()).unwrap();
    assert_eq!(code(&irisforge(&["make-toy", "--config", s(&cfg), "--ids", "2"])), 0);
    let m = load_manifest(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.identities().len(), m.len(), m.seed), (2, 4, 5));

    std::fs::write(&cfg, r#"{ "seed": 5, "out": "x", "colour": 1 }"#).unwrap();
    assert_eq!(code(&irisforge(&["make-toy", "--config", s(&cfg)])), 1);
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(code(&irisforge(&["make-toy", "--config", s(&cfg)])), 1);
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(code(&irisforge(&["make-toy", "--config", s(&cfg)])), 1);
}

#[test]
fn runs_reproduce_from_their_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    assert_eq!(code(&make_toy(&first, "2", "9")), 0);
    let second = dir.path().join("b");
    let snap = first.join(SNAPSHOT_FILE);
    assert_eq!(code(&irisforge(&["--threads", "1", "make-toy", "--config", s(&snap), "--out", s(&second)])), 0);
    let (a, b) =
        (load_manifest(&first.join(MANIFEST_FILE)).unwrap(), load_manifest(&second.join(MANIFEST_FILE)).unwrap());
    assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(std::fs::read(a.resolve(x)).unwrap(), std::fs::read(b.resolve(y)).unwrap());
    }
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let ok = |r: Output| assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    ok(irisforge(&["make-toy", "--ids", "4", "--styles", "4", "--seed", "1", "--out", s(&p("toy"))]));
    let toy = p("toy").join(MANIFEST_FILE);
    ok(irisforge(&[
        "pretrain-classifier",
        "--manifest",
        s(&toy),
        "--steps",
        "10",
        "--seed",
        "1",
        "--out",
        s(&p("pre")),
    ]));
    assert!(p("pre/pretrained.bin").exists() && p("pre/classifier_report.json").exists());

    let pre = p("pre/pretrained.bin");
    let bad = irisforge(&[
        "train",
        "--manifest",
        s(&toy),
        "--checkpoint",
        s(&pre),
        "--batch-size",
        "0",
        "--seed",
        "2",
        "--out",
        s(&p("bad")),
    ]);
    assert_eq!(code(&bad), 1);
    ok(irisforge(&[
        "train",
        "--manifest",
        s(&toy),
        "--checkpoint",
        s(&pre),
        "--steps",
        "4",
        "--batch-size",
        "4",
        "--checkpoint-every",
        "2",
        "--seed",
        "2",
        "--out",
        s(&p("run")),
    ]));
    for f in ["checkpoint.bin", "checkpoint_step000002.bin", "loss_log.csv", "train_config.json", SNAPSHOT_FILE] {
        assert!(p("run").join(f).exists(), "{f}");
    }
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("run").join(SNAPSHOT_FILE)).unwrap()).unwrap();
    assert_eq!(snap["train"]["seed"], 2);
    assert_eq!(snap["train"]["steps"], 4);

    let ckpt = p("run/checkpoint.bin");
    ok(irisforge(&[
        "generate",
        "--checkpoint",
        s(&ckpt),
        "--source",
        s(&toy),
        "--ids",
        "3",
        "--styles",
        "2",
        "--seed",
        "3",
        "--out",
        s(&p("synth")),
    ]));
    let synth = p("synth").join(MANIFEST_FILE);
    assert_eq!(load_manifest(&synth).unwrap().len(), 6);

    ok(irisforge(&["eval-quality", "--manifest", s(&synth), "--label", "synth", "--seed", "0", "--out", s(&p("q"))]));
    for f in ["quality.csv", "hist_synth.csv", "quality_summary.json", SNAPSHOT_FILE] {
        assert!(p("q").join(f).exists(), "{f}");
    }
    ok(irisforge(&[
        "eval-uniqueness",
        "--real",
        s(&toy),
        "--synth",
        s(&synth),
        "--pair-budget",
        "50",
        "--seed",
        "0",
        "--out",
        s(&p("u")),
    ]));
    assert!(p("u/uniqueness_summary.json").exists() && p("u/scores_genuine_real.csv").exists());

    ok(irisforge(&[
        "eval-utility",
        "--real",
        s(&toy),
        "--synth",
        s(&synth),
        "--steps",
        "3",
        "--seed",
        "0",
        "--out",
        s(&p("t")),
    ]));
    for f in ["roc_real_only.csv", "roc_real_plus_synth.csv", "utility_report.json"] {
        assert!(p("t").join(f).exists(), "{f}");
    }
    assert_eq!(code(&irisforge(&["eval-utility", "--synth", s(&synth), "--seed", "0", "--out", s(&p("t2"))])), 1);
}
