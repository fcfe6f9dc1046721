mod common;

use std::fs;

use amarec::dataset::{write_split, IdIndex, InteractionMatrix, PrepInfo, SplitDataset, SplitFractions};
use common::{amarec, ok, run, stderr, write_ratings};

fn prepared() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("ratings.dat");
    write_ratings(&raw, 80, 3);
    let data = tmp.path().join("data");
    ok(&["prep", "--input", raw.to_str().unwrap(), "--data-dir", data.to_str().unwrap()]);
    tmp
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["prep", "--input", "/no/such/ratings.dat", "--data-dir", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/no/such/ratings.dat"));
}

#[test]
fn threshold_above_scale_is_an_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("ratings.dat");
    write_ratings(&raw, 10, 1);
    let out = run(&[
        "prep",
        "--input",
        raw.to_str().unwrap(),
        "--data-dir",
        tmp.path().join("d").to_str().unwrap(),
        "--set",
        "threshold=5",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("empty dataset"), "{}", stderr(&out));
}

#[test]
fn invalid_config_fails_before_training() {
    let tmp = prepared();
    let dir = tmp.path().join("data");
    let out = run(&["train", "--data-dir", dir.to_str().unwrap(), "--preset", "ml1m-ama", "--set", "d=0"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("configuration error"));
    assert!(!dir.join("model.bin").exists());
    assert!(!dir.join("embeddings.bin").exists());
}

#[test]
fn presets_resolve_to_table_values() {
    let out = ok(&["config", "--preset", "ml1m-ama"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in ["h = 40", "alpha = 1", "lambda = 0.00001", "epochs = 300", "gamma = 10", "rho = 0.3", "d = 3", "kappa = 3"] {
        assert!(text.lines().any(|l| l == line), "missing {line:?} in\n{text}");
    }
    let out = ok(&["config", "--preset", "amazon-music-ama"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for line in ["h = 200", "alpha = 10", "lambda = 0.0001", "rho = 0.4", "d = 5"] {
        assert!(text.lines().any(|l| l == line), "missing {line:?}");
    }
    assert!(!run(&["config", "--preset", "nope"]).status.success());
}

#[test]
fn config_file_then_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("run.conf");
    fs::write(&file, "# mine\nd = 4\nepochs = 7\n").unwrap();
    let out = ok(&["config", "--preset", "ml1m-ama", "--config", file.to_str().unwrap(), "--set", "epochs=9"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("d = 4\n") && text.contains("epochs = 9\n") && text.contains("h = 40\n"));
}

#[test]
fn help_documents_every_key() {
    let out = ok(&["train", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for doc in amarec::config::KEYS {
        assert!(text.contains(doc.key), "{} missing from help", doc.key);
        if let Some(sym) = doc.symbol {
            assert!(text.contains(&format!("[{sym}]")), "{sym} missing from help");
        }
    }
    assert!(text.contains("--threads") && text.contains("AMAREC_DATA_DIR"));
}

#[test]
fn evaluate_reports_table_columns() {
    let tmp = prepared();
    let dir = tmp.path().join("data");
    let out = ok(&["evaluate", "--data-dir", dir.to_str().unwrap(), "--baseline", "pop", "--ks", "5,10,20"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cols = report["columns"].as_array().unwrap();
    assert_eq!(cols.len(), 11);
    assert_eq!(report["metrics"].as_object().unwrap().len(), 11);
    assert_eq!(report["model"], "POP");
    assert_eq!(report["split"], "test");

    let bad = run(&["evaluate", "--data-dir", dir.to_str().unwrap(), "--baseline", "pop", "--split", "holdout"]);
    assert!(!bad.status.success());
}

#[test]
fn data_dir_comes_from_the_environment() {
    let tmp = prepared();
    let dir = tmp.path().join("data");
    let out = amarec()
        .env("AMAREC_DATA_DIR", &dir)
        .args(["evaluate", "--baseline", "pop", "--split", "validation"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!run(&["evaluate", "--baseline", "pop"]).status.success());
}

#[test]
fn train_evaluate_explain_round_trip() {
    let tmp = prepared();
    let dir = tmp.path().join("data");
    let d = dir.to_str().unwrap();
    ok(&["train", "--data-dir", d, "--preset", "ml1m-ama", "--set", "h=6", "--set", "epochs=3", "--set", "checkpoint_every=2"]);
    assert!(dir.join("model.bin").exists() && dir.join("model.json").exists());
    assert!(dir.join("model.epoch-0002.bin").exists());
    let log = fs::read_to_string(dir.join("model.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let out = ok(&["evaluate", "--data-dir", d]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["model"], "AMA");
    assert_eq!(report["model_hash"].as_str().unwrap().len(), 64);

    let out = ok(&["explain", "--data-dir", d, "--histogram", "-k", "10"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let out = ok(&["explain", "--data-dir", d, "--modes", "-n", "4"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 3 * 4);

    let dot = tmp.path().join("u.dot");
    let out = ok(&["explain", "--data-dir", d, "--user", "1", "--dot", dot.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["recommendations"].as_array().unwrap().len(), 10);
    assert!(fs::read_to_string(dot).unwrap().starts_with("digraph"));

    assert!(!run(&["explain", "--data-dir", d, "--user", "no-such-user"]).status.success());
    assert!(!run(&["explain", "--data-dir", d]).status.success());
}

#[test]
fn explaining_a_user_without_history_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    let rows = |r: &[&[usize]]| InteractionMatrix::from_rows(4, r.iter().map(|x| x.to_vec())).unwrap();
    let data = SplitDataset {
        train: rows(&[&[0, 1], &[2, 3], &[]]),
        validation: rows(&[&[2], &[0], &[]]),
        test: rows(&[&[3], &[1], &[0]]),
        users: IdIndex::sorted(["a", "b", "c"]),
        items: IdIndex::sorted(["w", "x", "y", "z"]),
    };
    let prep = PrepInfo {
        source: "handmade".into(),
        format: "movielens-dat".into(),
        threshold: 3.0,
        fractions: SplitFractions::default(),
    };
    write_split(&dir, &data, prep).unwrap();
    let d = dir.to_str().unwrap();
    ok(&["train", "--data-dir", d, "--set", "h=2", "--set", "d=2", "--set", "kappa=1", "--set", "epochs=2"]);
    ok(&["explain", "--data-dir", d, "--user", "a"]);
    let out = run(&["explain", "--data-dir", d, "--user", "c"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no observed interactions"));
}

#[test]
fn nce_flag_is_reserved() {
    let out = run(&["config", "--set", "nce=true"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nce"));
}
