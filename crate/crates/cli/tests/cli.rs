use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dimabsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimabsa"))
        .args(args)
        .current_dir(dir)
        .env_remove("DIMABSA_CACHE_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) {
    let o = dimabsa(dir, &["synth", "--seed", "3", "--n", "60", "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validate_reports_locators_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let ok = dimabsa(
        tmp.path(),
        &["validate", "data/train.json", "--subtask", "asr"],
    );
    assert!(ok.status.success());
    assert!(
        stdout(&ok).contains("48/48 record(s) valid"),
        "{}",
        stdout(&ok)
    );

    fs::write(
        tmp.path().join("bad.jsonl"),
        "{\"ID\": \"x\", \"Text\": \"soup\", \"Aspect_VA\": [{\"Aspect\": \"soup\", \"VA\": \"9.50#5.00\"}]}\n",
    )
    .unwrap();
    let bad = dimabsa(tmp.path(), &["validate", "bad.jsonl", "--subtask", "asr"]);
    assert!(!bad.status.success());
    assert!(stdout(&bad).contains("line 1"), "{}", stdout(&bad));
}

#[test]
fn seed_is_required_for_stochastic_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dimabsa(tmp.path(), &["synth", "--out", "data"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"), "{}", stderr(&o));
}

#[test]
fn train_predict_eval_round() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    fs::write(
        tmp.path().join("run.toml"),
        "seed = 5\n[train]\nlearning_rate = 0.003\nmax_epochs = 9\n",
    )
    .unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "train",
            "--config",
            "run.toml",
            "--train",
            "data/train.json",
            "--dev",
            "data/dev.json",
            "--epochs",
            "2",
            "--out",
            "model",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let history = fs::read_to_string(tmp.path().join("model/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("model/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["extra"]["effective_train_config"]["max_epochs"], 2);
    assert_eq!(
        manifest["extra"]["effective_train_config"]["learning_rate"],
        0.003
    );

    let o = dimabsa(
        tmp.path(),
        &[
            "predict",
            "--checkpoint",
            "model/checkpoint.json",
            "--test",
            "data/dev.json",
            "--out",
            "pred",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dimabsa(
        tmp.path(),
        &[
            "eval",
            "--subtask",
            "asr",
            "--pred",
            "pred/predictions.json",
            "--gold",
            "data/dev.json",
            "--out",
            "scores",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("RMSE_VA\tPCC_V\tPCC_A\n"));
    let scores: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("scores/scores.json")).unwrap())
            .unwrap();
    assert!(scores["rmse_va"].as_f64().unwrap() > 0.0, "{scores}");
}

#[test]
fn eval_rejects_id_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = r#"{"ID": "a", "Text": "tea", "Triplet": [{"Aspect": "tea", "Opinion": "NULL", "VA": "6.00#4.00"}]}"#;
    fs::write(tmp.path().join("gold.jsonl"), format!("{gold}\n")).unwrap();
    fs::write(
        tmp.path().join("pred.jsonl"),
        "{\"ID\": \"b\", \"Triplet\": []}\n",
    )
    .unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "eval",
            "--subtask",
            "aste",
            "--pred",
            "pred.jsonl",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("ID mismatch"), "{}", stderr(&o));

    fs::write(
        tmp.path().join("pred.jsonl"),
        "{\"ID\": \"a\", \"Triplet\": []}\n",
    )
    .unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "eval",
            "--subtask",
            "aste",
            "--pred",
            "pred.jsonl",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("0.0000\t0.0000\t0.0000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn generations_with_bad_lines_still_write_output() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = [
        r#"{"ID": "a", "Output": "[{\"Aspect\": \"tea\", \"Opinion\": \"fine\", \"Valence\": 11, \"Arousal\": \"4\"}]"}"#,
        "not json",
        r#"{"ID": "a", "Output": "[]"}"#,
    ];
    fs::write(tmp.path().join("gen.jsonl"), lines.join("\n")).unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "parse-generations",
            "gen.jsonl",
            "--subtask",
            "aste",
            "--jsonl",
            "--out",
            "p",
        ],
    );
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(
        err.contains("line 2") && err.contains("duplicate ID"),
        "{err}"
    );
    let preds = fs::read_to_string(tmp.path().join("p/predictions.jsonl")).unwrap();
    assert_eq!(
        preds.trim(),
        r#"{"ID":"a","Triplet":[{"Aspect":"tea","Opinion":"fine","VA":"9.00#4.00"}]}"#
    );
    let manifest = fs::read_to_string(tmp.path().join("p/manifest.json")).unwrap();
    assert!(manifest.contains("\"hard_errors\": 2"), "{manifest}");
}

#[test]
fn prompts_and_training_prompts() {
    let tmp = tempfile::tempdir().unwrap();
    let train = [
        r#"{"ID": "t1", "Text": "Great tea", "Quadruplet": [{"Aspect": "tea", "Category": "DRINKS#QUALITY", "Opinion": "Great", "VA": "7.50#6.00"}]}"#,
        r#"{"ID": "t2", "Text": "Rude staff", "Quadruplet": [{"Aspect": "staff", "Category": "SERVICE#GENERAL", "Opinion": "Rude", "VA": "2.00#6.50"}]}"#,
    ];
    fs::write(tmp.path().join("train.jsonl"), train.join("\n") + "\n").unwrap();
    fs::write(
        tmp.path().join("test.jsonl"),
        "{\"ID\": \"q\", \"Text\": \"Cold soup\"}\n",
    )
    .unwrap();
    let common = [
        "--subtask",
        "asqp",
        "--lang",
        "ENG",
        "--domain",
        "Restaurant",
        "--train",
        "train.jsonl",
    ];

    let mut args = vec![
        "make-prompts",
        "--test",
        "test.jsonl",
        "--demos",
        "2",
        "--seed",
        "1",
        "--out",
        "zs",
    ];
    args.extend(common);
    let o = dimabsa(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let line: serde_json::Value = serde_json::from_str(
        fs::read_to_string(tmp.path().join("zs/prompts.jsonl"))
            .unwrap()
            .trim(),
    )
    .unwrap();
    let prompt = line["Prompt"].as_str().unwrap();
    assert!(prompt.starts_with("<|im_start|>system\n"));
    assert!(prompt.ends_with("<|im_start|>assistant\n"));
    assert_eq!(prompt.matches("<|im_start|>user\n").count(), 3);

    let mut args = vec![
        "make-prompts",
        "--with-answers",
        "--profile",
        "llama",
        "--out",
        "ft",
    ];
    args.extend(common);
    let o = dimabsa(tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("ft/prompts.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["Prompt"].as_str().unwrap().ends_with(
        "[{\"Aspect\": \"tea\", \"Category\": \"DRINKS#QUALITY\", \"Opinion\": \"Great\", \"Valence\": 7.50, \"Arousal\": 6.00}]<|eot_id|>"
    ));
}

#[test]
fn flatten_and_eda_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = dimabsa(tmp.path(), &["flatten", "data/dev.json", "--out", "flat"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(tmp.path().join("flat/flattened.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 12);

    let o = dimabsa(
        tmp.path(),
        &[
            "eda",
            "--subtask",
            "asr",
            "--train",
            "data/train.json",
            "--dev",
            "data/dev.json",
            "--out",
            "eda",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("review_length"), "{}", stdout(&o));
    for f in [
        "stats.json",
        "psi.tsv",
        "psi.json",
        "psi_heatmap.svg",
        "manifest.json",
    ] {
        assert!(tmp.path().join("eda").join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(tmp.path().join("eda/psi_heatmap.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn adapter_config_round_trip_and_cache_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dimabsa"))
        .arg("adapter-config")
        .current_dir(tmp.path())
        .env("DIMABSA_CACHE_DIR", tmp.path().join("cache"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let written = tmp.path().join("cache/adapter-config/adapter.toml");
    let text = fs::read_to_string(&written).unwrap();
    assert!(text.contains("lora_alpha = 32"));

    fs::write(
        tmp.path().join("mine.toml"),
        text.replace("r = 16", "r = 8"),
    )
    .unwrap();
    let o = dimabsa(
        tmp.path(),
        &["adapter-config", "--from", "mine.toml", "--out", "a"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(tmp.path().join("a/adapter.toml"))
        .unwrap()
        .contains("r = 8"));

    fs::write(
        tmp.path().join("broken.toml"),
        text.replace("r = 16", "r = 0"),
    )
    .unwrap();
    let o = dimabsa(
        tmp.path(),
        &["adapter-config", "--from", "broken.toml", "--out", "b"],
    );
    assert!(!o.status.success());
}

#[test]
fn one_malformed_record_keeps_the_others() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = [
        r#"{"ID": "a", "Text": "tea", "Aspect_VA": [{"Aspect": "tea", "VA": "6.00#4.00"}]}"#,
        r#"{"ID": "b", "Text": "soup", "Aspect_VA": [{"Aspect": "soup", "VA": "6.00"#,
        r#"{"ID": "c", "Text": "bread", "Aspect_VA": [{"Aspect": "bread", "VA": "2.00#4.00"}]}"#,
    ];
    fs::write(tmp.path().join("mixed.jsonl"), lines.join("\n")).unwrap();
    let o = dimabsa(tmp.path(), &["validate", "mixed.jsonl", "--subtask", "asr"]);
    assert!(!o.status.success());
    let out = stdout(&o);
    assert!(
        out.contains("[line 2]") && out.contains("2/3 record(s) valid"),
        "{out}"
    );
}

#[test]
fn gold_scored_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let gold = r#"[{"ID": "q1", "Text": "Food and coffee are great", "Quadruplet": [{"Aspect": "Food", "Category": "FOOD#QUALITY", "Opinion": "great", "VA": "7.67#7.83"}, {"Aspect": "coffee", "Category": "DRINKS#QUALITY", "Opinion": "great", "VA": "7.67#8.00"}]}]"#;
    fs::write(tmp.path().join("gold.json"), gold).unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "eval",
            "--subtask",
            "asqp",
            "--pred",
            "gold.json",
            "--gold",
            "gold.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("1.0000\t1.0000\t1.0000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn two_review_fixture_matches_hand_score() {
    let tmp = tempfile::tempdir().unwrap();
    // r1: one match at weight 1 - 0.66/16 plus an extra prediction; r2: one
    // unmatched gold tuple
    let gold = [
        r#"{"ID": "r1", "Text": "great tea", "Triplet": [{"Aspect": "tea", "Opinion": "great", "VA": "7.00#7.00"}]}"#,
        r#"{"ID": "r2", "Text": "slow staff", "Triplet": [{"Aspect": "staff", "Opinion": "slow", "VA": "3.00#6.00"}]}"#,
    ];
    let pred = [
        r#"{"ID": "r1", "Triplet": [{"Aspect": "tea", "Opinion": "great", "VA": "7.33#7.33"}, {"Aspect": "Tea", "Opinion": "great", "VA": "7.00#7.00"}]}"#,
        r#"{"ID": "r2", "Triplet": []}"#,
    ];
    fs::write(tmp.path().join("gold.jsonl"), gold.join("\n")).unwrap();
    fs::write(tmp.path().join("pred.jsonl"), pred.join("\n")).unwrap();
    let o = dimabsa(
        tmp.path(),
        &[
            "eval",
            "--subtask",
            "aste",
            "--pred",
            "pred.jsonl",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // cP = cR = 0.95875 / 2
    assert!(
        stdout(&o).contains("0.4794\t0.4794\t0.4794"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn train_against_itself_shows_no_drift() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = dimabsa(
        tmp.path(),
        &[
            "eda",
            "--subtask",
            "asr",
            "--train",
            "data/train.json",
            "--dev",
            "data/train.json",
            "--out",
            "eda",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("eda/psi.json")).unwrap())
            .unwrap();
    let reports = reports.as_array().unwrap();
    assert!(!reports.is_empty());
    for r in reports {
        assert_eq!(r["value"], 0.0, "{r}");
        assert_eq!(r["level"], "none", "{r}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let o = dimabsa(
        tmp.path(),
        &["synth", "--seed", "3", "--n", "60", "--out", "again"],
    );
    assert!(o.status.success());
    for f in ["train.json", "dev.json"] {
        assert_eq!(
            fs::read(tmp.path().join("data").join(f)).unwrap(),
            fs::read(tmp.path().join("again").join(f)).unwrap()
        );
    }
    for run in ["m1", "m2"] {
        let o = dimabsa(
            tmp.path(),
            &[
                "train",
                "--seed",
                "4",
                "--lr",
                "0.003",
                "--epochs",
                "2",
                "--train",
                "data/train.json",
                "--dev",
                "data/dev.json",
                "--out",
                run,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["checkpoint.json", "history.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("m1").join(f)).unwrap(),
            fs::read(tmp.path().join("m2").join(f)).unwrap()
        );
    }
}
