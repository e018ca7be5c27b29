use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn stratum(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stratum"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn suite(dir: &Path, acc: &str) -> PathBuf {
    let out = dir.join("suite");
    let (code, err) = stratum(&[
        "synth",
        "--acc",
        acc,
        "--n",
        "300",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    out
}

#[test]
fn synth_writes_one_file_per_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    for f in ["M1.csv", "M2.csv", "M3.csv", "labels.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let text = fs::read_to_string(dir.join("M2.csv")).unwrap();
    assert!(text.starts_with("id,prob\n0,"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn majority_vote_with_even_k_is_a_constraint_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7");
    let out = tmp.path().join("maj.csv");
    let (code, err) = stratum(&[
        "combine",
        "--method",
        "maj",
        "--preds",
        p(&dir.join("M1.csv")),
        "--preds",
        p(&dir.join("M2.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(!out.exists());
}

#[test]
fn theta_outside_range_is_a_constraint_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    for theta in ["0.5", "1.0", "0.2"] {
        let (code, err) = stratum(&[
            "combine",
            "--method",
            "hybrid",
            "--hybrid-base",
            "M3",
            "--hybrid-aux",
            "M1",
            "--theta",
            theta,
            "--preds",
            p(&dir.join("M1.csv")),
            "--preds",
            p(&dir.join("M3.csv")),
            "--out",
            p(&tmp.path().join("h.csv")),
        ]);
        assert_eq!(code, 3, "theta {theta}: {err}");
    }
}

#[test]
fn negative_weight_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8");
    let w = tmp.path().join("w.json");
    fs::write(
        &w,
        r#"{"model_names":["M1"],"weights":[-1.0],"b":0.5,"t":0.5,"train_config":null,"clipped_any":false}"#,
    )
    .unwrap();
    let (code, err) = stratum(&[
        "combine",
        "--method",
        "nn",
        "--weights",
        p(&w),
        "--preds",
        p(&dir.join("M1.csv")),
        "--out",
        p(&tmp.path().join("o.csv")),
    ]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn validation_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "id,prob\na,0.3\nb,1.5\n").unwrap();
    let out = tmp.path().join("o.csv");
    let (code, err) = stratum(&[
        "combine",
        "--method",
        "sum",
        "--preds",
        p(&bad),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.csv:3"), "{err}");
    assert!(!out.exists());

    let missing = tmp.path().join("missing.csv");
    let (code, _) = stratum(&[
        "combine",
        "--method",
        "sum",
        "--preds",
        p(&missing),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 4);

    let (code, _) = stratum(&[
        "combine",
        "--method",
        "median",
        "--preds",
        p(&bad),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 2);
    let (code, _) = stratum(&["train-nn"]);
    assert_eq!(code, 2);
    let (code, _) = stratum(&["--version"]);
    assert_eq!(code, 0);
}

#[test]
fn failed_write_leaves_existing_file_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    let out = tmp.path().join("combined.csv");
    fs::write(&out, "previous").unwrap();
    let (code, _) = stratum(&[
        "combine",
        "--method",
        "maj",
        "--preds",
        p(&dir.join("M1.csv")),
        "--preds",
        p(&dir.join("M2.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 3);
    assert_eq!(fs::read_to_string(&out).unwrap(), "previous");
    let leftovers = fs::read_dir(tmp.path()).unwrap().count();
    assert_eq!(leftovers, 2, "temporary files left behind");
}

#[test]
fn train_combine_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    let labels = dir.join("labels.csv");
    let preds: Vec<String> = (1..=3)
        .map(|i| p(&dir.join(format!("M{i}.csv"))).to_string())
        .collect();
    let w = tmp.path().join("w.json");
    let mut args = vec![
        "train-nn",
        "--labels",
        p(&labels),
        "--epochs",
        "50",
        "--out",
        p(&w),
    ];
    for x in &preds {
        args.extend(["--preds", x]);
    }
    assert_eq!(stratum(&args).0, 0);
    let json = fs::read_to_string(&w).unwrap();
    assert!(json.contains("\"l2\": 0.039"), "{json}");

    let combined = tmp.path().join("nn.csv");
    let mut args = vec![
        "combine",
        "--method",
        "nn",
        "--weights",
        p(&w),
        "--out",
        p(&combined),
    ];
    for x in &preds {
        args.extend(["--preds", x]);
    }
    assert_eq!(stratum(&args).0, 0);

    let table = tmp.path().join("eval.tsv");
    let (code, err) = stratum(&[
        "eval",
        "--combined",
        p(&combined),
        "--labels",
        p(&labels),
        "--out",
        p(&table),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&table).unwrap();
    assert!(
        text.starts_with("name\tkind\taccuracy\nnn\tcombined\t"),
        "{text}"
    );

    let bound = tmp.path().join("bound.tsv");
    let mut args = vec![
        "check-bound",
        "--weights",
        p(&w),
        "--labels",
        p(&labels),
        "--out",
        p(&bound),
    ];
    for x in &preds {
        args.extend(["--preds", x]);
    }
    assert_eq!(stratum(&args).0, 0);
    assert!(fs::read_to_string(&bound)
        .unwrap()
        .starts_with("W\tlower\tupper"));
}

#[test]
fn sweep_grid_has_49_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    let out = tmp.path().join("sweep.tsv");
    let (code, err) = stratum(&[
        "sweep-theta",
        "--hybrid-base",
        "M3",
        "--hybrid-aux",
        "M1,M2",
        "--grid",
        "0.51:0.99:0.01",
        "--preds",
        p(&dir.join("M1.csv")),
        "--preds",
        p(&dir.join("M2.csv")),
        "--preds",
        p(&dir.join("M3.csv")),
        "--labels",
        p(&dir.join("labels.csv")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(err.contains("best theta"));
}

#[test]
fn rule_cv_has_zero_stdev() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = suite(tmp.path(), "0.8,0.7,0.9");
    let out = tmp.path().join("cv.tsv");
    let mut args = vec!["cv", "--method", "sum", "--folds", "5", "--out", p(&out)];
    let labels = dir.join("labels.csv");
    let preds: Vec<String> = (1..=3)
        .map(|i| p(&dir.join(format!("M{i}.csv"))).to_string())
        .collect();
    for x in &preds {
        args.extend(["--train-preds", x, "--test-preds", x]);
    }
    args.extend(["--train-labels", p(&labels), "--test-labels", p(&labels)]);
    let (code, err) = stratum(&args);
    assert_eq!(code, 0, "{err}");
    let (summary, _) = stratum::eval::parse_report(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(summary.runs, 5);
    assert_eq!(summary.stdev, 0.0);
}
