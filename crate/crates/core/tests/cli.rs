use std::path::{Path, PathBuf};

use cookstate::cli::{build_report, main_with_args, report_csv};
use cookstate::svm::read_features;
use cookstate::trainer::read_metrics;

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut full = vec!["cookstate", "--output-dir", out.to_str().unwrap()];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn toy(dir: &Path, per_class: &str) -> PathBuf {
    assert_eq!(run(dir, &["toy-corpus", "--per-class", per_class, "--side", "8"]), 0);
    dir.join("toy/manifest.csv")
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn augment_counts_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(tmp.path(), "1");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let args = ["augment", "--manifest", manifest.to_str().unwrap(), "--per-image", "3"];
    assert_eq!(run(&a, &args), 0);
    assert_eq!(run(&b, &args), 0);
    let files = tree_bytes(&a.join("augmented"));
    assert_eq!(files.len(), 11 * 3 + 1);
    let rows = std::fs::read_to_string(a.join("augmented/manifest.csv")).unwrap();
    assert_eq!(rows.lines().count(), 34);
    assert_eq!(files, tree_bytes(&b.join("augmented")));
}

#[test]
fn train_extract_svm_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(tmp.path(), "5");
    let run_dir = tmp.path().join("run");
    let m = manifest.to_str().unwrap();
    let code = run(&run_dir, &["train", "--manifest", m, "--phase1-epochs", "2", "--phase2-epochs", "1", "--side", "8"]);
    assert_eq!(code, 0);
    let history = read_metrics(&run_dir.join("metrics.csv")).unwrap();
    assert_eq!(history.len(), 3);
    assert!(std::fs::read_to_string(run_dir.join("curves.svg")).unwrap().starts_with("<svg"));

    let ckpt = run_dir.join("model.ckpt");
    let split = run_dir.join("split_manifest.csv");
    let (c, s) = (ckpt.to_str().unwrap(), split.to_str().unwrap());
    for split_name in ["train", "val"] {
        assert_eq!(run(&run_dir, &["extract", "--checkpoint", c, "--manifest", s, "--split", split_name]), 0);
    }
    let first = std::fs::read(run_dir.join("features_train.feat")).unwrap();
    assert_eq!(run(&run_dir, &["extract", "--checkpoint", c, "--manifest", s, "--split", "train"]), 0);
    assert_eq!(first, std::fs::read(run_dir.join("features_train.feat")).unwrap());
    let feats = read_features(&run_dir.join("features_train.feat")).unwrap();
    let manifest_rows = cookstate::dataset::load_manifest(&split).unwrap();
    let train_labels: Vec<usize> = manifest_rows
        .split(cookstate::dataset::Split::Train)
        .map(|s| s.label.id())
        .collect();
    assert_eq!(feats.rows(), train_labels.len());
    assert_eq!(feats.cols(), 16 * 2 * 2);
    assert_eq!(feats.labels(), &train_labels[..]);
    let raw_args = ["extract", "--checkpoint", c, "--manifest", s, "--layer", "0", "--out", "raw.feat"];
    assert_eq!(run(&run_dir, &raw_args), 0);
    assert_eq!(read_features(&run_dir.join("raw.feat")).unwrap().cols(), 3 * 8 * 8);
    assert_eq!(run(&run_dir, &["extract", "--checkpoint", c, "--manifest", s, "--layer", "99"]), 2);

    let tf = run_dir.join("features_train.feat");
    let vf = run_dir.join("features_val.feat");
    let svm_args = ["svm", "--train-features", tf.to_str().unwrap(), "--val-features", vf.to_str().unwrap(), "--kernel", "rbf", "--gamma", "0.5"];
    assert_eq!(run(&run_dir, &svm_args), 0);
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run_dir.join("svm_rbf.json")).unwrap()).unwrap();
    assert_eq!(model["kernel"]["gamma"], 0.5);
    let bench = std::fs::read(run_dir.join("kernel_benchmark.csv")).unwrap();
    assert_eq!(run(&run_dir, &svm_args), 0);
    assert_eq!(bench, std::fs::read(run_dir.join("kernel_benchmark.csv")).unwrap());

    assert_eq!(run(&run_dir, &["evaluate", "--checkpoint", c, "--manifest", s, "--split", "test"]), 0);
    assert!(run_dir.join("evaluation_test.csv").exists());

    let metrics = run_dir.join("metrics.csv");
    let bench = run_dir.join("kernel_benchmark.csv");
    let rep = tmp.path().join("rep");
    let r1 = format!("cnn={}", metrics.display());
    let r2 = format!("cnn+svm={}", bench.display());
    assert_eq!(run(&rep, &["report", "--run", &r1, "--run", &r2]), 0);
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("model,accuracy,loss,epochs,source"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn training_data_error_leaves_no_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("bad.csv");
    std::fs::write(&manifest, "path,label,split\nmissing.png,whole,train\nother.png,whole,val\n").unwrap();
    let out = tmp.path().join("out");
    let code = run(&out, &["train", "--manifest", manifest.to_str().unwrap(), "--phase1-epochs", "1", "--phase2-epochs", "0"]);
    assert_ne!(code, 0);
    assert!(!out.join("model.ckpt").exists());

    std::fs::write(&manifest, "path,label,split\na.png,not-a-state,train\n").unwrap();
    assert_eq!(run(&out, &["train", "--manifest", manifest.to_str().unwrap()]), 3);
    assert!(!out.join("model.ckpt").exists());
}

#[test]
fn gan_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy(tmp.path(), "2");
    let m = manifest.to_str().unwrap();
    let gan = tmp.path().join("gan");
    assert_eq!(run(&gan, &["gan-train", "--manifest", m, "--domain-x", "nonsense", "--domain-y", "sliced"]), 3);
    assert_eq!(run(&gan, &["gan-train", "--manifest", m, "--domain-x", "whole", "--domain-y", "sliced", "--steps", "3", "--side", "16"]), 0);
    let losses = std::fs::read_to_string(gan.join("gan_losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);
    let out = tmp.path().join("gen");
    let g = gan.to_str().unwrap();
    assert_eq!(run(&out, &["gan-generate", "--generators", g, "--manifest", m, "--source-label", "whole", "--target-label", "sliced"]), 0);
    let fragment = std::fs::read_to_string(out.join("synthetic/manifest.csv")).unwrap();
    assert_eq!(fragment.lines().count(), 3);
    assert!(fragment.lines().skip(1).all(|l| l.starts_with("synthetic_") && l.contains(",sliced,")));
}

#[test]
fn report_sorts_and_reports_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (i, acc) in [0.7, 0.2, 0.9, 0.5, 0.81].iter().enumerate() {
        let p = tmp.path().join(format!("m{i}.csv"));
        std::fs::write(&p, format!("phase,epoch,train_loss,train_acc,val_loss,val_acc\n1,1,1.0,0.5,1.5,{acc:.6}\n")).unwrap();
        runs.push(format!("model{i}={}", p.display()));
    }
    let rows = build_report(&runs).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[0].accuracy <= w[1].accuracy));
    assert_eq!(report_csv(&rows).lines().nth(1).unwrap(), "model1,0.200000,1.500000,1,final epoch validation");

    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.csv");
    let code = run(&out, &["report", "--run", &format!("x={}", missing.display())]);
    assert_ne!(code, 0);
    let err = build_report(&[format!("x={}", missing.display())]).unwrap_err();
    assert!(err.to_string().contains("nope.csv"));
}

#[test]
fn usage_errors_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["train"]), 2);
    assert_eq!(run(tmp.path(), &["svm", "--kernel", "cubic", "--train-features", "a", "--val-features", "b"]), 2);
    use clap::CommandFactory;
    let mut cmd = cookstate::cli::Cli::command();
    cmd.build();
    let help = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
    for needle in ["[default: 0.001]", "[default: 70]", "[default: 40]", "[default: 5]", "[default: 42]"] {
        assert!(help.contains(needle), "train help lacks {needle}");
    }
    let help = cmd.find_subcommand_mut("augment").unwrap().render_long_help().to_string();
    for needle in ["[default: 45]", "[default: 0.2]"] {
        assert!(help.contains(needle), "augment help lacks {needle}");
    }
}
