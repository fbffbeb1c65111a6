use std::process::Command;

fn glyphspot(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_glyphspot"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn count(dir: &std::path::Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn synth_writes_pages_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = glyphspot(
        dir.path(),
        &["synth", "--pages", "5", "--seed", "7", "--out", "corpus/"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let corpus = dir.path().join("corpus");
    assert_eq!(count(&corpus, "png"), 5);
    assert_eq!(count(&corpus, "json"), 5);
}

#[test]
fn usage_error_exits_2_with_synopsis() {
    let dir = tempfile::tempdir().unwrap();
    let out = glyphspot(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = glyphspot(dir.path(), &["train", "knn"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = glyphspot(
        dir.path(),
        &["eval", "--model", "missing.gsm", "--manifest", "missing.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn extract_then_eval_prints_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = glyphspot(dir.path(), args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["synth", "--pages", "4", "--out", "c"]);
    run(&["extract", "--pages", "c", "--out", "k", "--labels-from-truth"]);
    run(&[
        "train",
        "encoder",
        "--manifest",
        "k/manifest.jsonl",
        "--out",
        "m/e.gsm",
        "--epochs",
        "2",
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&run(&["eval", "--model", "m/e.gsm", "--manifest", "k/manifest.jsonl"])).unwrap();
    assert_eq!(v["kind"], "encoder");
    let acc = v["metrics"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    for key in ["tp", "fp", "tn", "fn"] {
        assert!(v["metrics"]["confusion"][key].is_u64(), "{key}");
    }
    let csv = std::fs::read_to_string(dir.path().join("m/e.gsm.epochs.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,train_loss,train_accuracy"));
    assert_eq!(csv.lines().count(), 3);
}
