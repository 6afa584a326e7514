use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedrec_core::{Checkpoint, EmbeddingTable};

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/two_communities.tsv")
}

fn fedrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Small run arguments over the bundled data.
fn quick(out: &Path) -> Vec<String> {
    [
        "--data.path",
        data().to_str().unwrap(),
        "--model.dim",
        "8",
        "--train.max_rounds",
        "3",
        "--pretrain.epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec()
}

fn run_ok(args: &[String]) -> Output {
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = fedrec(&argv);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn checkpoint(dir: &Path) -> Checkpoint {
    EmbeddingTable::read_checkpoint(&dir.join(fedrec_cli::CHECKPOINT_FILE)).unwrap()
}

#[test]
fn missing_data_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedrec(&["--out", dir.path().to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data.path"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "model.dimension = 4\n").unwrap();
    let o = fedrec(&["--config", cfg.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.dimension"));
}

#[test]
fn unreadable_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedrec(&[
        "--data.path",
        "/nonexistent/x.tsv",
        "--out",
        dir.path().to_str().unwrap(),
        "train",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn written_config_reloads_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&with(quick(&a), &["--train.eta", "0.25", "--seed", "7", "pretrain"]));
    let dumped = a.join(fedrec_cli::CONFIG_FILE);
    run_ok(&[
        "--config".into(),
        dumped.to_str().unwrap().into(),
        "--out".into(),
        b.to_str().unwrap().into(),
        "pretrain".into(),
    ]);
    let text = fs::read_to_string(&dumped).unwrap();
    let text_b = fs::read_to_string(b.join(fedrec_cli::CONFIG_FILE)).unwrap();
    assert!(text.contains("train.eta = 0.25"));
    assert!(text.contains("train.seed = 7"));
    // Only the output directory differs, and it is not a config key.
    assert_eq!(text, text_b);
    assert_eq!(checkpoint(&a).table, checkpoint(&b).table);
}

#[test]
fn zero_epoch_pretrain_is_the_initial_table() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero");
    let one = dir.path().join("one");
    run_ok(&with(quick(&zero), &["--pretrain.epochs", "0", "pretrain"]));
    run_ok(&with(quick(&one), &["pretrain"]));
    let cz = checkpoint(&zero);
    let co = checkpoint(&one);
    assert!(cz.is_pretrained());
    assert_eq!(cz.flag("epochs"), Some("0"));
    assert_ne!(cz.table, co.table);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(one.join(fedrec_cli::PRETRAIN_FILE)).unwrap()).unwrap();
    assert_eq!(summary["losses"].as_array().unwrap().len(), 2);
}

#[test]
fn evaluate_reports_both_cutoffs_for_both_phases() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    let ev = dir.path().join("ev");
    run_ok(&with(quick(&pre), &["pretrain"]));
    let ck = pre.join(fedrec_cli::CHECKPOINT_FILE);
    run_ok(&with(quick(&ev), &["evaluate", "--checkpoint", ck.to_str().unwrap()]));
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(ev.join(fedrec_cli::RESULTS_FILE)).unwrap()).unwrap();
    let keys: Vec<(String, u64)> = rows
        .iter()
        .map(|r| (r["phase"].as_str().unwrap().to_string(), r["k"].as_u64().unwrap()))
        .collect();
    let want: Vec<(String, u64)> = ["validation", "test"]
        .iter()
        .flat_map(|p| [10, 20].map(|k| (p.to_string(), k)))
        .collect();
    assert_eq!(keys, want);
    for r in &rows {
        let (recall, ndcg) = (r["recall"].as_f64().unwrap(), r["ndcg"].as_f64().unwrap());
        assert!((0.0..=1.0).contains(&recall) && ndcg <= recall);
        assert_eq!(r["n_users"], 200);
    }
}

#[test]
fn simulate_writes_every_output_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&with(quick(&a), &["simulate"]));
    run_ok(&with(quick(&b), &["--threads", "2", "simulate"]));
    for f in [
        fedrec_cli::ROUNDS_FILE,
        fedrec_cli::CHECKPOINT_FILE,
        fedrec_cli::RESULTS_FILE,
        fedrec_cli::CLUSTERS_FILE,
        fedrec_cli::PRETRAIN_FILE,
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rounds = fs::read_to_string(a.join(fedrec_cli::ROUNDS_FILE)).unwrap();
    let lines: Vec<serde_json::Value> = rounds.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l["k"] == 4 && l.get("wall_time").is_none()));
    assert!(lines[2]["val_ndcg"].is_f64());
    assert_eq!(checkpoint(&a).flag("rounds"), Some("3"));
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join(fedrec_cli::RESULTS_FILE)).unwrap()).unwrap();
    // Defaults: clip 0.1, Laplace scale 0.2.
    assert_eq!(results[0]["privacy_budget"], 1.0);
}

#[test]
fn no_clustering_uses_a_single_cluster() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&with(quick(dir.path()), &["--ablation.no_clustering", "true", "train"]));
    let rounds = fs::read_to_string(dir.path().join(fedrec_cli::ROUNDS_FILE)).unwrap();
    for l in rounds.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["k"], 1);
    }
    let csv = fs::read_to_string(dir.path().join(fedrec_cli::CLUSTERS_FILE)).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn timing_adds_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&with(
        quick(dir.path()),
        &["--output.timing", "true", "--pretrain.epochs", "0", "train"],
    ));
    let rounds = fs::read_to_string(dir.path().join(fedrec_cli::ROUNDS_FILE)).unwrap();
    let first: serde_json::Value = serde_json::from_str(rounds.lines().next().unwrap()).unwrap();
    assert!(first["wall_time"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gen_synthetic_writes_the_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.tsv");
    let o = fedrec(&["gen-synthetic", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(&path).unwrap(), fs::read(data()).unwrap());
}

#[test]
fn pretrain_loss_trends_down() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["0", "1", "2"] {
        let out = dir.path().join(seed);
        run_ok(&with(
            quick(&out),
            &[
                "--model.dim",
                "64",
                "--pretrain.epochs",
                "5",
                "--pretrain.eta",
                "0.003",
                "--seed",
                seed,
                "pretrain",
            ],
        ));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(fedrec_cli::PRETRAIN_FILE)).unwrap()).unwrap();
        let losses: Vec<f64> = summary["losses"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(losses.len(), 6);
        let drops = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(drops >= 4, "seed {seed}: {losses:?}");
    }
}

#[test]
fn perfect_checkpoint_has_full_recall() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("d.tsv");
    let mut text = String::new();
    for u in 0..4 {
        for t in 0..5 {
            text.push_str(&format!("{u}\t{}\t{t}\n", (u + t) % 8));
        }
    }
    fs::write(&tsv, &text).unwrap();
    let split = fedrec_core::leave_one_out_split(&fedrec_core::data::parse_interactions(&text, &tsv).unwrap()).unwrap();
    let n = split.n_items;
    let one_hot = |i: usize| (0..n).map(|j| f64::from(u8::from(i == j))).collect::<Vec<f64>>();
    let users: Vec<Vec<f64>> = (0..split.n_users)
        .map(|u| {
            one_hot(split.validation[u])
                .iter()
                .zip(one_hot(split.test[u]))
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect();
    let items: Vec<Vec<f64>> = (0..n).map(one_hot).collect();
    let ck = dir.path().join("perfect.txt");
    EmbeddingTable::from_rows(&users, &items)
        .unwrap()
        .write_checkpoint(&ck, &[])
        .unwrap();

    let out = dir.path().join("ev");
    let args = [
        "--data.path",
        tsv.to_str().unwrap(),
        "--model.dim",
        &n.to_string(),
        "--model.layers",
        "0",
        "--graph.neighbor_expansion",
        "false",
        "--eval.cutoffs",
        "2,10",
        "--out",
        out.to_str().unwrap(),
        "evaluate",
        "--checkpoint",
        ck.to_str().unwrap(),
    ]
    .map(String::from);
    run_ok(&args);
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join(fedrec_cli::RESULTS_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["recall"] == 1.0));
}
