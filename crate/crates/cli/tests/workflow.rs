use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use splitseg_cli::manifest::RunManifest;

fn splitseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitseg"))
        .args(args)
        .current_dir(dir)
        .env("SPLITSEG_OUT", dir.join("default-out"))
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = splitseg(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_data(dir: &Path, name: &str, seed: &str) {
    ok(dir, &["generate", "--classes", "3", "--train", "12", "--val", "8", "--seed", seed, "--out", name]);
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&splitseg(dir.path(), &["generate", "--train", "5"])), 2);
    assert_eq!(code(&splitseg(dir.path(), &["evaluate", "--data", "x"])), 2);
    assert_eq!(code(&splitseg(dir.path(), &["no-such-command"])), 2);
}

#[test]
fn bad_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&splitseg(dir.path(), &["generate", "--seed", "1", "--classes", "9"])), 3);
    assert_eq!(code(&splitseg(dir.path(), &["surgery", "--checkpoint", "missing.ckpt"])), 3);
    std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&splitseg(dir.path(), &["surgery", "--checkpoint", "junk.ckpt"])), 3);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"train_samplez": 3}"#).unwrap();
    assert_eq!(code(&splitseg(dir.path(), &["generate", "--seed", "1", "--config", "c.json"])), 2);
}

#[test]
fn generate_is_deterministic_and_counts_match_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["generate", "--classes", "3", "--train", "6", "--val", "10", "--seed", "7", "--out", "a"]);
    ok(dir.path(), &["generate", "--classes", "3", "--train", "6", "--val", "10", "--seed", "7", "--out", "b"]);
    let ma = RunManifest::load(&dir.path().join("a.manifest.json")).unwrap();
    let mb = RunManifest::load(&dir.path().join("b.manifest.json")).unwrap();
    assert_eq!(ma.outputs["dataset"].digest, mb.outputs["dataset"].digest);
    assert_eq!(ma.seed, Some(7));

    // Recount the printed per-class sizes from the annotation file.
    let doc = json(&dir.path().join("a/val/annotations.json"));
    let images = doc["images"].as_array().unwrap();
    let anns = doc["annotations"].as_array().unwrap();
    for (class, name) in [(1u64, "disk"), (2, "rectangle"), (3, "triangle")] {
        let mut ids: Vec<u64> = anns
            .iter()
            .filter(|x| x["category_id"].as_u64() == Some(class))
            .map(|x| x["image_id"].as_u64().unwrap())
            .collect();
        ids.sort();
        ids.dedup();
        let line = a.lines().find(|l| l.trim_start().starts_with(name)).unwrap();
        let printed: usize = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(printed, ids.len(), "{name}");
        assert!(ids.len() <= images.len());
    }
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--classes", "2", "--train", "2", "--val", "2", "--seed", "1"]);
    assert!(dir.path().join("default-out/data/val/annotations.json").is_file());
    assert!(dir.path().join("default-out/data.manifest.json").is_file());
}

#[test]
fn oracle_evaluation_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "data", "5");
    ok(dir.path(), &["evaluate", "--oracle", "--data", "data", "--out", "oracle.json"]);
    let report = json(&dir.path().join("oracle.json"));
    for c in report["classes"].as_array().unwrap() {
        let b = &c["breakdown"];
        for key in ["ap", "ap50", "ap75"] {
            assert_eq!(b[key].as_f64(), Some(1.0), "{key} of {}", c["name"]);
        }
        for key in ["ap_small", "ap_medium", "ap_large"] {
            assert!(b[key].is_null() || b[key].as_f64() == Some(1.0), "{key}");
        }
    }
}

#[test]
fn comparing_a_report_with_itself_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "data", "5");
    ok(dir.path(), &["evaluate", "--oracle", "--data", "data", "--out", "r.json"]);
    let table = ok(dir.path(), &["compare", "--before", "r.json", "--after", "r.json", "--csv", "t.csv", "--plot", "t.svg", "--out", "c.json"]);
    assert!(table.contains("delta +0.000"));
    let cmp = json(&dir.path().join("c.json"));
    assert_eq!(cmp["mean_delta"].as_f64(), Some(0.0));
    for c in cmp["classes"].as_array().unwrap() {
        for d in c["delta"].as_array().unwrap() {
            assert!(d.is_null() || d.as_f64() == Some(0.0));
        }
    }
    assert!(std::fs::read_to_string(dir.path().join("t.svg")).unwrap().starts_with("<svg"));
    assert!(std::fs::read_to_string(dir.path().join("t.csv")).unwrap().lines().count() > 3);
}

#[test]
fn reports_on_different_data_are_incomparable() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "d1", "5");
    tiny_data(dir.path(), "d2", "6");
    ok(dir.path(), &["evaluate", "--oracle", "--data", "d1", "--out", "r1.json"]);
    ok(dir.path(), &["evaluate", "--oracle", "--data", "d2", "--out", "r2.json"]);
    assert_eq!(code(&splitseg(dir.path(), &["compare", "--before", "r1.json", "--after", "r2.json"])), 5);
}

#[test]
fn exploding_learning_rate_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "data", "5");
    let out = splitseg(dir.path(), &["train-baseline", "--data", "data", "--epochs", "1", "--lr", "1e9", "--no-val"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn baseline_checkpoint_is_rejected_by_train_heads() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "data", "5");
    ok(dir.path(), &["train-baseline", "--data", "data", "--epochs", "1", "--batch-size", "4", "--no-val", "--out", "b.ckpt"]);
    assert_eq!(code(&splitseg(dir.path(), &["train-heads", "--checkpoint", "b.ckpt", "--data", "data"])), 3);
}

#[test]
fn full_workflow_composes_and_every_step_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_data(d, "data", "11");
    ok(d, &["train-baseline", "--data", "data", "--epochs", "1", "--batch-size", "4", "--out", "base.ckpt"]);
    ok(d, &["surgery", "--checkpoint", "base.ckpt", "--init", "slice", "--out", "split.ckpt"]);
    ok(d, &["train-heads", "--checkpoint", "split.ckpt", "--data", "data", "--epochs", "1", "--mode", "parallel", "--jobs", "2", "--out", "heads.ckpt"]);
    ok(d, &["evaluate", "--checkpoint", "base.ckpt", "--data", "data", "--out", "before.json"]);
    ok(d, &["evaluate", "--checkpoint", "heads.ckpt", "--data", "data", "--out", "after.json"]);
    ok(d, &["compare", "--before", "before.json", "--after", "after.json", "--plot", "chart.svg", "--out", "cmp.json"]);
    assert!(d.join("base.ckpt.log.jsonl").is_file());
    assert!(d.join("after.json.misrouting.json").is_file());

    for m in ["data", "base.ckpt", "split.ckpt", "heads.ckpt", "before.json", "after.json", "cmp.json"] {
        let manifest = d.join(format!("{m}.manifest.json"));
        let scratch = d.join(format!("replay-{m}"));
        let out = ok(d, &["rerun", "--manifest", manifest.to_str().unwrap(), "--scratch", scratch.to_str().unwrap()]);
        assert!(out.contains("reproduced"), "{m}: {out}");
    }
}

#[test]
fn rerun_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    tiny_data(dir.path(), "data", "5");
    ok(dir.path(), &["evaluate", "--oracle", "--data", "data", "--out", "r.json"]);
    let ann = dir.path().join("data/val/annotations.json");
    let mut text = std::fs::read_to_string(&ann).unwrap();
    text.push(' ');
    std::fs::write(&ann, text).unwrap();
    assert_eq!(code(&splitseg(dir.path(), &["rerun", "--manifest", "r.json.manifest.json"])), 3);
}

#[test]
fn sequential_and_parallel_heads_match_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_data(d, "data", "3");
    ok(d, &["train-baseline", "--data", "data", "--epochs", "1", "--batch-size", "4", "--no-val", "--out", "b.ckpt"]);
    ok(d, &["surgery", "--checkpoint", "b.ckpt", "--out", "s.ckpt"]);
    ok(d, &["train-heads", "--checkpoint", "s.ckpt", "--data", "data", "--epochs", "1", "--mode", "sequential", "--out", "seq.ckpt"]);
    ok(d, &["train-heads", "--checkpoint", "s.ckpt", "--data", "data", "--epochs", "1", "--mode", "parallel", "--out", "par.ckpt"]);
    assert_eq!(std::fs::read(d.join("seq.ckpt")).unwrap(), std::fs::read(d.join("par.ckpt")).unwrap());
}
