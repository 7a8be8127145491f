use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn corrner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrner"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    let o = corrner(&["--help"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("Usage"));
    for sub in ["synth", "index", "train", "tag", "calibrate", "eval", "sweep", "pipeline"] {
        assert!(out.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&corrner(&["calibrate", "--help"])), 0);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = corrner(&["evl"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("eval"), "{}", stderr(&o));
    assert_eq!(code(&corrner(&[])), 1);
    assert_eq!(code(&corrner(&["eval", "--gold"])), 1);
    assert_eq!(code(&corrner(&["--threads", "0", "index", "query", "--index", "x", "--text", "y"])), 1);
}

#[test]
fn eval_length_mismatch_names_the_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.conll");
    let pred = dir.path().join("pred.conll");
    fs::write(&gold, "吉\tB-PROV\n林\tE-PROV\n\n白\tB-CITY\n城\tE-CITY\n\n").unwrap();
    fs::write(&pred, "吉\tB-PROV\n林\tE-PROV\n\n白\tS-CITY\n\n").unwrap();
    let o = corrner(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sentence 1"), "{}", stderr(&o));

    fs::write(&pred, "吉\tB-PROV\n林\tE-PROV\n\n").unwrap();
    let o = corrner(&["eval", "--gold", p(&gold), "--pred", p(&pred)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sentence 1"), "{}", stderr(&o));
}

#[test]
fn eval_report_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.conll");
    let pred = dir.path().join("pred.conll");
    let report = dir.path().join("report.json");
    fs::write(&gold, "吉\tB-CITY\n林\tE-CITY\n省\tO\n白\tB-PROV\n城\tE-PROV\n\n").unwrap();
    fs::write(&pred, "吉\tB-CITY\n林\tE-CITY\n省\tO\n白\tB-CITY\n城\tE-CITY\n\n").unwrap();
    let o = corrner(&["eval", "--gold", p(&gold), "--pred", p(&pred), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["micro"]["f1"], 0.5);
    assert!((r["macro"]["f1"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(r["provenance"]["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("report.json.meta.json").exists());
}

#[test]
fn bad_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(&cfg, r#"{"seed": 1, "no_such_key": 2}"#).unwrap();
    let o = corrner(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_key"), "{}", stderr(&o));

    let o = corrner(&["index", "query", "--index", p(&dir.path().join("missing")), "--text", "吉林"]);
    assert_eq!(code(&o), 2);

    let gold = dir.path().join("gold.conll");
    fs::write(&gold, "吉 B-PROV\n").unwrap();
    let o = corrner(&["eval", "--gold", p(&gold), "--pred", p(&gold)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn index_build_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let pool = dir.path().join("pool.txt");
    fs::write(&pool, "吉林省白城市\n吉林省\n镇赉县火车站\n").unwrap();
    let idx = dir.path().join("idx");
    let o = corrner(&["index", "build", "--pool", p(&pool), "--out", p(&idx)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(idx.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["doc_count"], 3);
    assert!(meta["provenance"]["config_hash"].is_string());
    let o = corrner(&["index", "query", "--index", p(&idx), "--k", "2", "--text", "白城"]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["hits"].as_array().unwrap().len(), 1);
    assert_eq!(r["hits"][0]["doc_id"], 0);
}

fn mtime(path: &Path) -> std::time::SystemTime {
    fs::metadata(path).unwrap().modified().unwrap()
}

#[test]
fn pipeline_end_to_end_and_skip_when_done() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("full.json");
    fs::write(
        &cfg,
        r#"{
            "gen": {"sizes": [20, 40, 80, 160, 400], "n_train": 200, "n_dev": 50, "n_test": 80, "n_unlabeled": 3000},
            "train": {"epochs": 4, "learning_rate": 0.05},
            "vote": {"k": 20}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = corrner(&["--threads", "1", "pipeline", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for m in ["baseline", "entity-voting", "correlator"] {
        assert!(stdout.contains(m), "{stdout}");
        let r: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("reports").join(format!("{m}.json"))).unwrap()).unwrap();
        assert!(r["micro"]["f1"].as_f64().unwrap() > 0.3, "{m}: {}", r["micro"]);
    }
    // every written file has a stamp with the tool version
    let artifacts = [
        "data/train.conll",
        "data/pool.txt",
        "data/manifest.json",
        "index/postings.bin",
        "model.json",
        "model.log.json",
        "model.correlator.json",
        "pred/baseline.conll",
        "pred/entity-voting.conll",
        "pred/entity-voting.trace.jsonl",
        "pred/correlator.conll",
        "summary.json",
    ];
    for a in artifacts {
        let meta = out.join(format!("{a}.meta.json"));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&meta).unwrap()).unwrap();
        assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"), "{a}");
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64, "{a}");
    }
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert!(model["provenance"]["config_hash"].is_string());

    let model_time = mtime(&out.join("model.json"));
    let pred_time = mtime(&out.join("pred/correlator.conll"));
    let o = corrner(&["pipeline", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("skipping"), "{}", stderr(&o));
    assert_eq!(mtime(&out.join("model.json")), model_time);
    assert_eq!(mtime(&out.join("pred/correlator.conll")), pred_time);

    // standalone steps on the pipeline's artifacts
    let tagged = dir.path().join("again.conll");
    let o = corrner(&[
        "tag",
        "--model",
        p(&out.join("model.json")),
        "--in",
        p(&out.join("data/test.conll")),
        "--out",
        p(&tagged),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&tagged).unwrap(), fs::read(out.join("pred/baseline.conll")).unwrap());
    let o = corrner(&[
        "tag",
        "--model",
        p(&out.join("model.correlator.json")),
        "--in",
        p(&out.join("data/test.conll")),
        "--out",
        p(&tagged),
    ]);
    assert_eq!(code(&o), 1, "correlator model without --index");

    let o = corrner(&[
        "--force",
        "--log-level",
        "info",
        "train",
        "--train",
        p(&out.join("data/train.conll")),
        "--dev",
        p(&out.join("data/dev.conll")),
        "--config",
        p(&out.join("config/train.json")),
        "--out",
        p(&out.join("model.json")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!stderr(&o).contains("skipping"));
    assert!(mtime(&out.join("model.json")) > model_time);
}

#[test]
fn sweep_writes_per_seed_values() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen.json");
    fs::write(
        &gen,
        r#"{"sizes": [20, 40, 80, 160, 400], "n_train": 120, "n_dev": 40, "n_test": 60, "n_unlabeled": 2000}"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&corrner(&["synth", "--config", p(&gen), "--out", p(&data)])), 0);
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"values": [0.0, 4.0], "experiment": {"seeds": [1, 2], "methods": ["baseline", "correlator"],
            "train": {"epochs": 3, "learning_rate": 0.05}}}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep.json.out");
    let o = corrner(&["sweep", "--axis", "samples", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["axis"], "samples");
    let points = r["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    let zero = &points[0]["summary"];
    assert_eq!(zero["baseline"]["per_seed"], zero["correlator"]["per_seed"]);
    assert_eq!(zero["correlator"]["per_seed"].as_array().unwrap().len(), 2);
    assert!(r["provenance"]["tool_version"].is_string());

    let o = corrner(&["sweep", "--axis", "k", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 1, "k axis without values");
}
