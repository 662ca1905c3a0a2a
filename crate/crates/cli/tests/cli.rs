use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nepsent::synthetic::{generate, write, SyntheticSpec};
use serde_json::Value;

fn nepsent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nepsent"))
        .args(args)
        .env_remove("NEPSENT_RESOURCES")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small synthetic corpus and a fast config for it; returns the config path.
fn setup(dir: &Path, docs_per_class: usize, extra: &str) -> PathBuf {
    setup_with(
        dir,
        &SyntheticSpec {
            docs_per_class,
            embedding_dim: 16,
            seed: 3,
            ..Default::default()
        },
        extra,
    )
}

fn setup_with(dir: &Path, spec: &SyntheticSpec, extra: &str) -> PathBuf {
    let data = generate(spec).unwrap();
    write(&data, dir).unwrap();
    let config = format!(
        "dataset = \"tweets.csv\"\n\
         embeddings = \"embeddings.txt\"\n\
         embedding_dim = 16\n\
         bow_size = 20\n\
         n_folds = 2\n\
         seed = 11\n\
         output = \"out\"\n\
         {extra}\n\
         [train]\n\
         learning_rate = 0.001\n\
         epochs = 6\n\
         joint_epochs = 1\n"
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&read(path)).unwrap()
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 5, "");
    let out = nepsent(&["evaluate", "--config", cfg.to_str().unwrap(), "--dataset", "/nonexistent/tweets.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 5, "colour = \"blue\"");
    let out = nepsent(&["featurize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    assert_eq!(code(&nepsent(&["evaluate", "--fusion", "median"])), 2);
    assert_eq!(code(&nepsent(&["launch"])), 2);
}

#[test]
fn unknown_label_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 5, "");
    let csv = dir.path().join("tweets.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("नमस्ते,happy\n");
    std::fs::write(&csv, text).unwrap();
    let out = nepsent(&["featurize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("happy"));
}

#[test]
fn diverging_training_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 10, "");
    let out = nepsent(&["train", "--config", cfg.to_str().unwrap(), "--learning-rate", "1e300", "--epochs", "2"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn staged_commands_match_single_shot_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 20, "");
    let cfg = cfg.to_str().unwrap();
    for cmd in ["featurize", "train", "evaluate"] {
        let out = nepsent(&[cmd, "--config", cfg, "--output", dir.path().join("staged").to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = nepsent(&["evaluate", "--config", cfg, "--output", dir.path().join("single").to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let staged = dir.path().join("staged");
    let single = dir.path().join("single");
    let mut files = vec!["splits.json".to_string(), "report.json".into(), "folds.csv".into()];
    for fold in ["fold_00", "fold_01"] {
        for f in ["feature_model.json", "train.bin", "test.bin", "metrics.json", "predictions.csv", "training_log.json"] {
            files.push(format!("{fold}/{f}"));
        }
        for k in 1..=4 {
            files.push(format!("{fold}/model/channel_{k}.bin"));
        }
        files.push(format!("{fold}/model/manifest.json"));
    }
    let mut a = json(&staged.join("manifest.json"));
    let mut b = json(&single.join("manifest.json"));
    a["config"]["output"] = Value::Null;
    b["config"]["output"] = Value::Null;
    assert_eq!(a, b);
    for f in &files {
        assert!(read(&staged.join(f)) == read(&single.join(f)), "{f} differs");
    }
}

#[test]
fn evaluate_learns_the_synthetic_corpus_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), 60, "");
    let out = nepsent(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accuracy"), "{stdout}");

    let out_dir = dir.path().join("out");
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["n_folds"], 2);
    let metrics = report["metrics"].as_array().unwrap();
    let acc = metrics.iter().find(|m| m["name"] == "accuracy").unwrap();
    assert!(acc["mean"].as_f64().unwrap() >= 0.9, "{acc}");
    let manifest = json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["folds"].as_array().unwrap().len(), 2);

    // Predict with fold 0 on raw tweets, then on an empty file.
    let tweets: Vec<String> = std::fs::read_to_string(dir.path().join("tweets.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .take(5)
        .map(|l| l.rsplit_once(',').unwrap().0.trim_matches('"').to_string())
        .collect();
    let input = dir.path().join("input.txt");
    std::fs::write(&input, tweets.join("\n") + "\n").unwrap();
    let preds = dir.path().join("preds.tsv");
    let fold = out_dir.join("fold_00");
    let args = |i: &Path| {
        vec![
            "predict".to_string(),
            "--config".into(),
            cfg.to_str().unwrap().into(),
            "--model".into(),
            fold.to_str().unwrap().into(),
            "--input".into(),
            i.to_str().unwrap().into(),
            "--predictions".into(),
            preds.to_str().unwrap().into(),
        ]
    };
    let a = args(&input);
    let out = nepsent(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 5);
    for line in text.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4);
        assert!(["negative", "neutral", "positive"].contains(&cols[0]));
        let sum: f64 = cols[1..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let a = args(&empty);
    let out = nepsent(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&preds).is_empty());
}

fn baseline_accuracy(out_dir: &Path, block: &str, kind: &str) -> f64 {
    let report = json(&out_dir.join("baselines").join(block).join(kind).join("report.json"));
    assert_eq!(report["n_folds"], 2);
    let metrics = report["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), 13);
    for m in metrics {
        for key in ["name", "mean", "std", "ci_low", "ci_high", "values"] {
            assert!(m.get(key).is_some(), "{kind}: missing {key}");
        }
    }
    metrics.iter().find(|m| m["name"] == "accuracy").unwrap()["mean"].as_f64().unwrap()
}

#[test]
fn hybrid_baselines_are_no_worse_than_ds() {
    let dir = tempfile::tempdir().unwrap();
    // Large cue pools: most test cues never occur in training, so word-level
    // class statistics miss them while their vectors still point at the class.
    let spec = SyntheticSpec {
        docs_per_class: 60,
        embedding_dim: 16,
        cues_per_class: 400,
        seed: 3,
        ..Default::default()
    };
    let cfg = setup_with(dir.path(), &spec, "");
    for block in ["ds", "hybrid"] {
        let out = nepsent(&["compare-baselines", "--features", block, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let summary = json(&dir.path().join("out/baselines").join(block).join("summary.json"));
        assert_eq!(summary.as_array().unwrap().len(), 3);
    }
    let out_dir = dir.path().join("out");
    let best = |block| {
        ["gaussian_nb", "knn", "logistic_regression"]
            .into_iter()
            .map(|k| baseline_accuracy(&out_dir, block, k))
            .fold(f64::MIN, f64::max)
    };
    let (ds, hybrid) = (best("ds"), best("hybrid"));
    assert!(hybrid >= ds, "hybrid {hybrid} < ds {ds}");
}

#[test]
fn synthesize_writes_a_runnable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = nepsent(&["synthesize", "--dir", dir.path().to_str().unwrap(), "--docs-per-class", "8", "--dim", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = dir.path().join("config.toml");
    let out = nepsent(&["featurize", "--config", cfg.to_str().unwrap(), "--n-folds", "2", "--bow-size", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("output/fold_01/train.bin").is_file());
}
