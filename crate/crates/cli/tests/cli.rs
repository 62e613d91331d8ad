//! End-to-end checks of the `glimpse` binary: exit codes, golden CSV
//! headers, manifest emission, and determinism of small runs.

use std::path::Path;
use std::process::{Command, Output};

fn glimpse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glimpse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn glimpse_in(dir: &Path, envs: &[(&str, &str)], args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_glimpse"));
    cmd.current_dir(dir).args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = glimpse(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_file_is_usage_error_on_stderr() {
    let out = glimpse(&["train", "--config", "/nonexistent/conf.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nonexistent"), "stderr: {stderr}");
}

#[test]
fn bad_token_count_is_usage_error() {
    let out = glimpse(&["oracle", "--tokens", "9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_writes_pinned_schema_and_chance_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = glimpse(&[
        "oracle",
        "--tokens",
        "6",
        "--episodes",
        "2000",
        "--seq-len",
        "10",
        "--seed",
        "3",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(&dir.path().join("o/oracle_curve.csv"));
    assert!(csv.starts_with("timestep,oracle_acc,cache_acc\n"));
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let acc: f64 = first[1].parse().unwrap();
    let p = 1.0 / 26.0;
    let sigma = (p * (1.0 - p) / 2000f64).sqrt();
    assert!((acc - p).abs() < 4.0 * sigma, "t=1 oracle accuracy {acc}");
    assert!(dir.path().join("o/oracle_curve.svg").exists());
    assert!(read(&dir.path().join("o/manifest.txt")).contains("command = oracle"));
}

#[test]
fn train_eval_probe_intervene_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("t");
    let out = glimpse(&[
        "train",
        "--preset",
        "tiny",
        "--seed",
        "5",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = read(&train_dir.join("train_log.csv"));
    assert!(log.starts_with("batch,loss,acc_last20\n"));
    let ckpt = train_dir.join("model.glck");
    let bytes = std::fs::read(&ckpt).unwrap();
    assert_eq!(&bytes[0..4], b"GLCK");
    assert!(read(&train_dir.join("manifest.txt")).contains("preset = tiny"));
    assert!(train_dir.join("train_loss.svg").exists());

    // determinism: identical rerun gives identical log bytes
    let rerun = dir.path().join("t2");
    let out = glimpse(&[
        "train",
        "--preset",
        "tiny",
        "--seed",
        "5",
        "--out",
        rerun.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(log, read(&rerun.join("train_log.csv")));

    // eval
    let eval_dir = dir.path().join("e");
    let out = glimpse(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "40",
        "--seq-len",
        "8",
        "--out",
        eval_dir.to_str().unwrap(),
        "--dump-scenes",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = read(&eval_dir.join("eval_curve.csv"));
    assert!(curve.starts_with("timestep,accuracy,ci_low,ci_high\n"));
    assert_eq!(curve.lines().count(), 9);
    let scenes_dump = read(&eval_dir.join("scenes.txt"));
    assert!(scenes_dump.starts_with("SCENE seed="));
    assert_eq!(scenes_dump.matches("SCENE ").count(), 40);

    // probe (small protocol)
    let probe_dir = dir.path().join("p");
    let out = glimpse(&[
        "probe",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "25",
        "--seq-len",
        "16",
        "--window",
        "5:12",
        "--out",
        probe_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(&probe_dir.join("probe_report.csv"));
    assert!(report
        .starts_with("layer,target,offset,congruent,timestep,accuracy,baseline,ci_low,ci_high\n"));
    assert!(report.contains("embed,label,t,"));
    assert!(report.contains(",tuple,t:t1,false,"));
    assert!(probe_dir.join("probe_summary.csv").exists());
    assert!(probe_dir.join("probe_decoding.svg").exists());
    assert!(probe_dir.join("probe_binding.svg").exists());

    // interventions
    let w_dir = dir.path().join("w");
    let out = glimpse(&[
        "intervene",
        "withheld",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "30",
        "--warmup",
        "20",
        "--out",
        w_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let w = read(&w_dir.join("withheld.csv"));
    assert!(w.starts_with(
        "scenes,model_acc,model_ci_low,model_ci_high,oracle_acc,cache_acc,target_previsited\n"
    ));

    let r_dir = dir.path().join("r");
    let out = glimpse(&[
        "intervene",
        "replace",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "20",
        "--switch",
        "6",
        "--horizon",
        "30",
        "--out",
        r_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read(&r_dir.join("replace.csv"));
    assert!(r.starts_with(
        "timestep,changed_acc,unchanged_acc,err_original,err_other,ci_low,ci_high\n"
    ));
    assert_eq!(r.lines().count(), 31);

    let a_dir = dir.path().join("a");
    let out = glimpse(&[
        "intervene",
        "add",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "20",
        "--switch",
        "6",
        "--horizon",
        "30",
        "--out",
        a_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&a_dir.join("add.csv")).starts_with("timestep,new_acc,old_acc,ci_low,ci_high\n"));

    let o_dir = dir.path().join("od");
    let out = glimpse(&[
        "intervene",
        "ood",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenes",
        "20",
        "--horizon",
        "25",
        "--out",
        o_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&o_dir.join("ood.csv")).starts_with(
        "timestep,k_acc,k_ci_low,k_ci_high,control_acc,control_ci_low,control_ci_high\n"
    ));

    // plot over a produced CSV
    let plot_path = dir.path().join("curve.svg");
    let out = glimpse(&[
        "plot",
        "--csv",
        eval_dir.join("eval_curve.csv").to_str().unwrap(),
        "--out",
        plot_path.to_str().unwrap(),
        "--x",
        "timestep",
        "--y",
        "accuracy",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&plot_path).starts_with("<svg"));
}

#[test]
fn glimpse_out_env_var_overrides_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = glimpse_in(
        dir.path(),
        &[("GLIMPSE_OUT", dir.path().to_str().unwrap())],
        &[
            "oracle",
            "--episodes",
            "50",
            "--seq-len",
            "5",
            "--out",
            "nested/oracle",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nested/oracle/oracle_curve.csv").exists());
}

#[test]
fn config_file_sets_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "preset = tiny\nseed = 9\ntotal_batches = 4\n# comment\n",
    )
    .unwrap();
    let out_dir = dir.path().join("t");
    let out = glimpse(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "10", // overrides the file
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read(&out_dir.join("manifest.txt"));
    assert!(manifest.contains("seed = 10"));
    assert!(manifest.contains("total_batches = 4"));
}
