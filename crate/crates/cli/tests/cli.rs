use std::path::Path;
use std::process::{Command, Output};

fn urltran(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urltran")).args(args).current_dir(cwd).output().unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("not a JSON error line: {text:?}"))
}

#[test]
fn evaluate_prints_tpr_and_auroc() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.tsv"), "a\t1\t0.9\nb\t0\t0.2\nc\t1\t0.4\nd\t0\t0.6\n").unwrap();
    let out = urltran(&["evaluate", "--predictions", "p.tsv", "--fpr", "0.0001", "--report", "r.json"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("auroc\t0.75"), "{stdout}");
    assert!(stdout.contains("tpr_at_fpr\t0.0001\t0.5"), "{stdout}");
    assert!(stdout.contains("threshold_0.5") && stdout.contains("threshold_at_fpr"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["auroc"], 0.75);
}

#[test]
fn attack_is_deterministic_and_leaves_input_alone() {
    let dir = tempfile::tempdir().unwrap();
    let data = "https://www.bankofamerica.com/login?a=1&b=2&c=3\t0\nhttp://paypal.com/x?y=1&z=2\t1\n".repeat(20);
    std::fs::write(dir.path().join("d.tsv"), &data).unwrap();
    for out in ["a.tsv", "b.tsv"] {
        let r = urltran(&["attack", "--input", "d.tsv", "--seed", "7", "--out", out], dir.path());
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = std::fs::read(dir.path().join("a.tsv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.tsv")).unwrap());
    assert!(a.len() > data.len());
    assert_eq!(std::fs::read_to_string(dir.path().join("d.tsv")).unwrap(), data);
    let r = urltran(&["attack", "--input", "d.tsv", "--seed", "8", "--out", "c.tsv"], dir.path());
    assert!(r.status.success());
    assert_ne!(a, std::fs::read(dir.path().join("c.tsv")).unwrap());
}

#[test]
fn small_pipeline_through_individual_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for i in 0..40 {
        if i % 2 == 0 {
            rows.push_str(&format!("http://secure-login{i}.verify.xyz/update.php?id={i}\t1\n"));
        } else {
            rows.push_str(&format!("https://www.news{i}.com/story/{i}\t0\n"));
        }
    }
    std::fs::write(dir.path().join("d.tsv"), rows).unwrap();
    let steps: [&[&str]; 4] = [
        &["train-tokenizer", "--input", "d.tsv", "--out", "v.json", "--vocab-size", "320"],
        &["pretrain", "--data", "d.tsv", "--vocab", "v.json", "--out", "pre.ckpt.json", "--seed", "1", "--epochs", "1"],
        &[
            "finetune", "--checkpoint", "pre.ckpt.json", "--train", "d.tsv", "--valid", "d.tsv", "--vocab", "v.json",
            "--out", "ft.ckpt.json", "--seed", "2", "--epochs", "2",
        ],
        &["score", "--checkpoint", "ft.ckpt.json", "--vocab", "v.json", "--input", "d.tsv", "--out", "p.tsv"],
    ];
    for args in steps {
        let r = urltran(args, dir.path());
        assert!(r.status.success(), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["pre.ckpt.bin", "pre.ckpt.steps.tsv", "pre.ckpt.epochs.jsonl", "ft.ckpt.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let preds = std::fs::read_to_string(dir.path().join("p.tsv")).unwrap();
    assert_eq!(preds.lines().count(), 40);
}

#[test]
fn errors_are_single_json_lines_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let r = urltran(&["evaluate", "--bogus"], dir.path());
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_line(&r)["error"], "usage");

    let r = urltran(&["evaluate", "--predictions", "missing.tsv"], dir.path());
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(error_line(&r)["error"], "missing_file");

    std::fs::write(dir.path().join("bad.tsv"), "only-one-field\n").unwrap();
    let r = urltran(&["evaluate", "--predictions", "bad.tsv"], dir.path());
    assert_eq!(r.status.code(), Some(4));

    std::fs::write(dir.path().join("p.tsv"), "a\t1\t0.9\nb\t0\t0.2\n").unwrap();
    let r = urltran(&["evaluate", "--predictions", "p.tsv", "--fpr", "2"], dir.path());
    assert_eq!(r.status.code(), Some(5));
    assert_eq!(error_line(&r)["error"], "invalid_argument");

    let r = urltran(&["demo"], dir.path());
    assert_eq!(r.status.code(), Some(5), "{}", String::from_utf8_lossy(&r.stderr));

    let r = urltran(&["attack", "--input", "p.tsv", "--seed", "1", "--out", "p.tsv"], dir.path());
    assert_eq!(r.status.code(), Some(5));
}

#[test]
fn bundled_presets_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.json", "bert.json", "roberta.json", "custvoc.json"] {
        urltran::config::RunConfig::load(root.join(name), Some(1)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
