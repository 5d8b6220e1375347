use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};
use superman::cli::*;
use superman::interpret::NoiseKind;
use superman::signal_graphs::read_dataset;
use superman::superman::Ablation;
use superman::synth::{IrregularParams, SynthKind, SynthSpec};
use superman::training::TrainConfig;
use superman::treemetric::WeightedPath;
use superman::Error;

fn small_config() -> RunConfig {
    let spec = SynthSpec {
        kind: SynthKind::IrregularSignal,
        irregular: IrregularParams { n_samples: 200, seed: 3, ..IrregularParams::default() },
    };
    let mut c = RunConfig::new(DatasetSource::Synthetic(spec));
    c.train = TrainConfig { epochs: 2, hidden: 8, ..TrainConfig::default() };
    c.seeds = vec![0];
    c
}

/// Every file in `dir` except the manifest is listed with a matching hash.
fn assert_manifest_complete(dir: &Path, manifest: &Manifest) {
    let mut on_disk: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for a in &manifest.artifacts {
        let bytes = std::fs::read(dir.join(&a.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), a.sha256, "{}", a.path);
    }
    let on_disk: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(&on_disk, manifest);
}

#[test]
fn train_with_no_seeds_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.seeds.clear();
    let err = cmd_train(&c, dir.path()).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn train_eval_explain_robustness_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let train_dir = root.path().join("train");
    let (manifest, report) = cmd_train(&small_config(), &train_dir).unwrap();
    assert_manifest_complete(&train_dir, &manifest);
    assert_eq!(report.seeds, vec![0]);
    assert_eq!(manifest.config_sha256, manifest.artifact("run_config.json").unwrap().sha256);
    assert!(manifest.warnings.iter().any(|w| w.contains("hidden")));

    let checkpoint = train_dir.join("checkpoint_seed0.json");
    let test_set = train_dir.join("test_raw.json");
    let eval_dir = root.path().join("eval");
    let (m, eval) =
        cmd_eval(&EvalArgs { checkpoint: checkpoint.clone(), dataset: test_set.clone(), out: Some(eval_dir.clone()) })
            .unwrap();
    assert_manifest_complete(&eval_dir, &m);
    assert_eq!(eval.samples, read_dataset(&test_set).unwrap().len());
    // Re-evaluating the raw test split reproduces the training-time test metrics.
    assert_eq!(eval.metrics, report.per_seed[0]);
    let reliability = std::fs::read_to_string(eval_dir.join("reliability.csv")).unwrap();
    assert_eq!(reliability.lines().count(), 11);

    let explain_dir = root.path().join("explain");
    let m = cmd_explain(&ExplainArgs {
        checkpoint: checkpoint.clone(),
        dataset: test_set.clone(),
        targets: vec!["value".into()],
        levels: vec![-1.0, 0.0, 1.0],
        out: Some(explain_dir.clone()),
    })
    .unwrap();
    assert_manifest_complete(&explain_dir, &m);
    assert!(m.artifact("pca_value.csv").is_some());
    assert!(m.artifact("contributions.csv").is_some());

    let bad = cmd_explain(&ExplainArgs {
        checkpoint: checkpoint.clone(),
        dataset: test_set.clone(),
        targets: vec!["nope".into()],
        levels: vec![0.0],
        out: Some(root.path().join("bad")),
    });
    assert!(matches!(bad, Err(Error::InvalidConfig(_))));

    let rob_dir = root.path().join("robustness");
    let m = cmd_robustness(&RobustnessArgs {
        checkpoint,
        dataset: test_set,
        kind: NoiseKind::Temporal,
        levels: vec![0.0, 0.5],
        seeds: vec![0, 1],
        out: Some(rob_dir.clone()),
    })
    .unwrap();
    assert_manifest_complete(&rob_dir, &m);
    let csv = std::fs::read_to_string(rob_dir.join("robustness_temporal.csv")).unwrap();
    let zero_row = csv.lines().nth(1).unwrap();
    assert!(zero_row.starts_with("0,0,0,0,0"), "{zero_row}");
}

#[test]
fn xor_bench_feature_grouped_row_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let args = XorBenchArgs {
        task: XorTask::Feature,
        grouped: Some(true),
        seeds: 3,
        max_steps: 2000,
        out: Some(dir.path().into()),
    };
    let (m, summary, trials) = cmd_xor_bench(&args).unwrap();
    assert_manifest_complete(dir.path(), &m);
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].configuration, "grouped");
    assert_eq!(summary[0].max_best_accuracy, 1.0);
    assert_eq!(summary[0].solved, 3);
    assert!(trials.iter().all(|t| t.final_accuracy == 1.0));
}

#[test]
fn treemetric_reconstructs_an_emitted_path_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = WeightedPath::new(vec![2, 0, 3, 1], vec![1.5, 0.25, 4.0]).unwrap();
    let csv_path = dir.path().join("d.csv");
    path.distance_matrix().write_csv(std::fs::File::create(&csv_path).unwrap()).unwrap();
    let out = dir.path().join("out");
    let (m, verdict) = cmd_treemetric(&TreemetricArgs {
        matrix: csv_path.clone(),
        mode: TreeMode::Reconstruct,
        abs_tol: None,
        out: Some(out.clone()),
    })
    .unwrap();
    assert_manifest_complete(&out, &m);
    assert!(verdict.four_point);
    assert_eq!(verdict.roundtrip_ok, Some(true));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("path.json")).unwrap()).unwrap();
    let order: Vec<u64> = serde_json::from_value(json["order"].clone()).unwrap();
    assert!(order == [2, 0, 3, 1] || order == [1, 3, 0, 2]);
}

#[test]
fn treemetric_check_reports_square_violation() {
    let dir = tempfile::tempdir().unwrap();
    let r2 = 2f64.sqrt();
    let csv_path = dir.path().join("square.csv");
    std::fs::write(&csv_path, format!("0,1,{r2},1\n1,0,1,{r2}\n{r2},1,0,1\n1,{r2},1,0\n")).unwrap();
    let (_, verdict) = cmd_treemetric(&TreemetricArgs {
        matrix: csv_path.clone(),
        mode: TreeMode::Check,
        abs_tol: None,
        out: Some(dir.path().join("check")),
    })
    .unwrap();
    assert!(!verdict.four_point);
    assert_eq!(verdict.violation, Some([0, 1, 2, 3]));
    let err = cmd_treemetric(&TreemetricArgs {
        matrix: csv_path,
        mode: TreeMode::Reconstruct,
        abs_tol: None,
        out: Some(dir.path().join("rec")),
    })
    .unwrap_err();
    assert!(matches!(err, Error::NotAPathMetric(_)));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn ingest_writes_dataset_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("m.csv");
    std::fs::write(
        &csv_path,
        "entity_id,signal_type,timestamp,value,label\n\
         p1,CRP,0,5.0,1\np1,CRP,3,7.5,1\np1,Hb,1,12.0,1\n\
         p2,CRP,2,1.0,0\n",
    )
    .unwrap();
    let out = dir.path().join("ingest");
    let m = cmd_ingest(&IngestArgs { csv: csv_path, schema: None, out: Some(out.clone()) }).unwrap();
    assert_manifest_complete(&out, &m);
    let data = read_dataset(&out.join("dataset.json")).unwrap();
    assert_eq!(data.len(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entities"], 2);
    assert_eq!(summary["graphs"], 3);
    assert_eq!(summary["nodes"], 4);
}

#[test]
fn ablate_always_includes_the_reference_row() {
    let dir = tempfile::tempdir().unwrap();
    let (m, rows) = cmd_ablate(&small_config(), &[Ablation::Rho1, Ablation::Gnan], dir.path()).unwrap();
    assert_manifest_complete(dir.path(), &m);
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["none", "rho1", "gnan"]);
    assert_eq!(rows[0].auprc_drop_points, 0.0);
}

#[test]
fn run_config_json_roundtrips() {
    let c = small_config();
    let json = serde_json::to_string(&c).unwrap();
    let back: RunConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, c);
    let minimal: RunConfig = serde_json::from_str(r#"{"dataset": {"path": "d.json"}}"#).unwrap();
    assert_eq!(minimal.seeds, vec![0, 1, 2]);
    assert_eq!(minimal.ablation, Ablation::None);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_superman"))
}

#[test]
fn binary_exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let bad_flag = bin().args(["train", "--ablation", "bogus", "--config", "x.json"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));

    let missing = bin()
        .args(["eval", "--checkpoint", "/nonexistent/ck.json", "--dataset", "d.json"])
        .env(OUT_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));

    let cfg = dir.path().join("zero.json");
    let mut c = small_config();
    c.seeds.clear();
    std::fs::write(&cfg, serde_json::to_string(&c).unwrap()).unwrap();
    let zero = bin().args(["train", "--config", cfg.to_str().unwrap()]).env(OUT_ENV, dir.path()).output().unwrap();
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn binary_writes_under_the_output_root_env() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("d.csv");
    WeightedPath::new(vec![0, 1, 2], vec![1.0, 2.0])
        .unwrap()
        .distance_matrix()
        .write_csv(std::fs::File::create(&matrix).unwrap())
        .unwrap();
    let out = bin()
        .args(["treemetric", "--matrix", matrix.to_str().unwrap(), "--mode", "reconstruct"])
        .env(OUT_ENV, dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("treemetric").join("path.json").exists());
    assert!(dir.path().join("treemetric").join("manifest.json").exists());
}
