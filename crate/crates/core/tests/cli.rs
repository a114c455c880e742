use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use s2vt::data::{read_captions, SyntheticManifest};

fn s2vt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2vt")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = s2vt(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", name];
    args.extend_from_slice(extra);
    ok(&args, dir);
    dir.join(name)
}

/// A small corpus plus a briefly trained checkpoint.
fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let c = synth(dir, "c", &["--seed", "3", "--samples", "40"]);
    ok(
        &[
            "train", "--features", "c/features.bin", "--captions", "c/captions.tsv", "--split", "c/split.tsv",
            "--epochs", "2", "--hidden-dim", "8", "--embed-dim", "4", "--out", "m.ckpt", "--seed", "1",
        ],
        dir,
    );
    (c, dir.join("m.ckpt"))
}

#[test]
fn synth_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = synth(d, "a", &["--seed", "7", "--samples", "120"]);
    let b = synth(d, "b", &["--seed", "7", "--samples", "120"]);
    for f in ["features.bin", "captions.tsv", "split.tsv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = s2vt(&["synth", "--samples", "0", "--out", "z"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
    assert!(!d.join("z").exists());
}

#[test]
fn synth_default_split_sizes_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = synth(d, "c", &[]);
    let m: SyntheticManifest = serde_json::from_str(&fs::read_to_string(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!((m.samples, m.train, m.val, m.test), (500, 400, 50, 50));
    let stats: serde_json::Value = serde_json::from_str(&ok(
        &["stats", "--features", "c/features.bin", "--captions", "c/captions.tsv", "--split", "c/split.tsv", "--json"],
        d,
    ))
    .unwrap();
    assert_eq!(stats["sentences"], m.sentences);
    assert_eq!(stats["tokens"], m.tokens);
    assert_eq!(stats["vocab"], m.vocab);
    assert_eq!(stats["samples"], m.samples);
    assert_eq!(stats["mean_frames"].as_f64().unwrap(), m.mean_frames);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "seed = 5\n[synthetic]\nn_samples = 30\nfeature_dim = 4\n").unwrap();
    ok(&["synth", "--config", "run.toml", "--out", "a"], d);
    ok(&["synth", "--config", "run.toml", "--samples", "20", "--out", "b"], d);
    let count = |p: &str| read_captions(&d.join(p).join("captions.tsv")).unwrap().len();
    assert_eq!((count("a"), count("b")), (30, 20));

    fs::write(d.join("bad.toml"), "[train]\nlearning_rate = 7.0\n").unwrap();
    let out = s2vt(&["train", "--config", "bad.toml", "--out", "m.ckpt"], d);
    assert_eq!(out.status.code(), Some(2));
    fs::write(d.join("typo.toml"), "[train]\nepochz = 1\n").unwrap();
    assert_eq!(s2vt(&["synth", "--config", "typo.toml", "--out", "t"], d).status.code(), Some(2));
}

#[test]
fn train_log_resume_and_shuffle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (_, ckpt) = trained(d);
    let common = ["--features", "c/features.bin", "--captions", "c/captions.tsv", "--split", "c/split.tsv"];

    let mut args = vec!["train", "--checkpoint", "m.ckpt", "--epochs", "0", "--out", "r.ckpt"];
    args.extend_from_slice(&common);
    ok(&args, d);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(d.join("r.ckpt")).unwrap());

    let base = ["train", "--epochs", "2", "--hidden-dim", "8", "--embed-dim", "4", "--seed", "1", "--log", "log.txt"];
    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--out", "again.ckpt"]);
    let stdout = ok(&args, d);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(d.join("again.ckpt")).unwrap());
    let log = fs::read_to_string(d.join("log.txt")).unwrap();
    assert_eq!(log, stdout);
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2\t"));

    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--out", "shuf.ckpt", "--shuffle-frames"]);
    ok(&args, d);
    assert_ne!(fs::read(&ckpt).unwrap(), fs::read(d.join("shuf.ckpt")).unwrap());
}

#[test]
fn caption_and_fuse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    ok(&["caption", "--checkpoint", "m.ckpt", "--features", "c/features.bin", "--out", "cap.tsv"], d);
    let caps = read_captions(&d.join("cap.tsv")).unwrap();
    assert_eq!(caps.len(), 40);
    ok(
        &["fuse", "--checkpoint", "m.ckpt", "--checkpoint-b", "m.ckpt", "--features", "c/features.bin", "--alpha", "1.0", "--out", "fuse.tsv"],
        d,
    );
    assert_eq!(fs::read(d.join("cap.tsv")).unwrap(), fs::read(d.join("fuse.tsv")).unwrap());

    ok(&["caption", "--checkpoint", "m.ckpt", "--features", "c/features.bin", "--split", "c/split.tsv", "--subset", "test", "--out", "t.tsv"], d);
    assert_eq!(read_captions(&d.join("t.tsv")).unwrap().len(), 4);

    let out = s2vt(&["caption", "--checkpoint", "m.ckpt", "--features", "missing.bin"], d);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.bin"));

    // A second model over a corpus with a different vocabulary.
    synth(d, "other", &["--samples", "10", "--event-types", "2"]);
    ok(
        &["train", "--features", "other/features.bin", "--captions", "other/captions.tsv", "--epochs", "0",
          "--hidden-dim", "8", "--embed-dim", "4", "--out", "o.ckpt"],
        d,
    );
    let out = s2vt(&["fuse", "--checkpoint", "m.ckpt", "--checkpoint-b", "o.ckpt", "--features", "c/features.bin"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary mismatch"));
}

#[test]
fn evaluate_identical_file_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = synth(d, "c", &["--samples", "30"]);
    let report: serde_json::Value = serde_json::from_str(&ok(
        &["evaluate", "--captions", "c/captions.tsv", "--references", "c/captions.tsv", "--train-captions", "c/captions.tsv", "--json"],
        d,
    ))
    .unwrap();
    let caps = read_captions(&c.join("captions.tsv")).unwrap();
    let expect: f64 = caps
        .iter()
        .map(|(_, s)| {
            let m = s.split_whitespace().count() as f64;
            1.0 - 0.5 * (1.0 / m).powi(3)
        })
        .sum::<f64>()
        / caps.len() as f64;
    assert!((report["meteor"].as_f64().unwrap() - expect).abs() < 1e-12);
    assert_eq!(report["novelty"][0].as_f64(), Some(1.0));

    ok(&["evaluate", "--captions", "c/captions.tsv", "--references", "c/captions.tsv", "--out", "r.txt"], d);
    assert!(fs::read_to_string(d.join("r.txt")).unwrap().starts_with("meteor\t"));
}

#[test]
fn gradcheck_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--seed", "4"], dir.path());
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert!(rows.len() >= 10);
    assert!(rows.iter().all(|r| r.ends_with("PASS")), "{out}");
}
