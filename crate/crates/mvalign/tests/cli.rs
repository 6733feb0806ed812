//! The staged subcommands compose into the same result as a single
//! experiment run, exit codes follow the documented contract, and all
//! randomness flows from the config seeds.

use std::path::Path;
use std::process::{Command, Output};

fn mvalign(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvalign"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn experiment_config_json() -> String {
    serde_json::json!({
        "dataset": {"source": "toy", "toy": {
            "n_points": 30, "shared_dims": 2, "private_dims_per_view": 0,
            "output_dim": 20, "mapping": "linear", "noise_sd": 0.1, "seed": 7
        }},
        "n_init": 8,
        "anchor_strategy": "random",
        "anchor_seed": 7,
        "model": {
            "q_latent_dim": 6,
            "optimizer": {"max_iters": 200},
            "inference": {"restarts": 3},
            "seed": 7
        },
        "method": "nonmyopic"
    })
    .to_string()
}

#[test]
fn staged_pipeline_reproduces_the_experiment_tau() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(&root.join("exp.json"), &experiment_config_json());

    // Single-shot experiment.
    let out = mvalign(
        &["experiment", "--config", "exp.json", "--out", "exp_out"],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("exp_out/report.json")).unwrap())
            .unwrap();
    let tau_experiment = report["kendall_tau"].as_f64().unwrap();

    // Staged: train and align against the bundle the experiment wrote.
    let out = mvalign(
        &[
            "train",
            "--data",
            "exp_out/dataset",
            "--config",
            "exp.json",
            "--out",
            "stage_out",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = mvalign(
        &[
            "align",
            "--data",
            "exp_out/dataset",
            "--checkpoint",
            "stage_out/checkpoint.json",
            "--method",
            "nonmyopic",
            "--config",
            "exp.json",
            "--out",
            "stage_out",
        ],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = mvalign(&["eval", "--alignment", "stage_out/alignment.json"], root);
    assert!(out.status.success());
    let tau_staged: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert_eq!(tau_staged, tau_experiment);

    // Same config twice: identical reports except timings and paths.
    let out = mvalign(
        &["experiment", "--config", "exp.json", "--out", "exp_out2"],
        root,
    );
    assert!(out.status.success());
    let strip = |path: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v.as_object_mut().unwrap().remove("artifacts");
        v
    };
    assert_eq!(
        strip(&root.join("exp_out/report.json")),
        strip(&root.join("exp_out2/report.json"))
    );
}

#[test]
fn gen_writes_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(
        &root.join("toy.json"),
        &serde_json::json!({
            "n_points": 25, "shared_dims": 2, "private_dims_per_view": 1,
            "output_dim": 10, "mapping": "linear", "noise_sd": 0.1, "seed": 3
        })
        .to_string(),
    );
    let out = mvalign(&["gen", "--config", "toy.json", "--out", "bundle"], root);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("bundle/view1.csv").exists());
    assert!(root.join("bundle/view2.csv").exists());
    assert!(root.join("bundle/meta.json").exists());

    // Same seed twice produces byte-identical views.
    let out = mvalign(&["gen", "--config", "toy.json", "--out", "bundle2"], root);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(root.join("bundle/view1.csv")).unwrap(),
        std::fs::read(root.join("bundle2/view1.csv")).unwrap()
    );
}

#[test]
fn eval_identity_and_reversal() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let record = serde_json::json!({
        "schema_version": 1, "method": "nonmyopic",
        "permutation": [0, 1, 2, 3], "total_cost": 0.0
    });
    write(&root.join("identity.json"), &record.to_string());
    let out = mvalign(&["eval", "--alignment", "identity.json"], root);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");

    let record = serde_json::json!({
        "schema_version": 1, "method": "nonmyopic",
        "permutation": [3, 2, 1, 0], "total_cost": 0.0
    });
    write(&root.join("reversal.json"), &record.to_string());
    let out = mvalign(&["eval", "--alignment", "reversal.json"], root);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1");

    // Against an explicit truth equal to the alignment: tau 0.
    write(&root.join("truth.json"), "[3,2,1,0]");
    let out = mvalign(
        &[
            "eval",
            "--alignment",
            "reversal.json",
            "--truth",
            "truth.json",
        ],
        root,
    );
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
}

#[test]
fn curve_subcommand_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(
        &root.join("curve.json"),
        &serde_json::json!({
            "toy": {
                "n_points": 12, "shared_dims": 2, "private_dims_per_view": 0,
                "output_dim": 8, "mapping": "linear", "noise_sd": 0.1, "seed": 4
            },
            "swap_levels": [0, 2],
            "model": {
                "q_latent_dim": 3, "inducing": 8, "inits": 1,
                "optimizer": {"max_iters": 60}
            },
            "seed": 4
        })
        .to_string(),
    );
    let out = mvalign(
        &["curve", "--config", "curve.json", "--out", "curve_out"],
        root,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(root.join("curve_out/curve.csv")).unwrap();
    assert!(csv.starts_with("kendall_tau,free_energy\n"));
    assert_eq!(csv.lines().count(), 3); // header + 2 levels
    assert!(root.join("curve_out/summary.json").exists());

    // Identical CSV across runs with the same seed.
    let out = mvalign(
        &["curve", "--config", "curve.json", "--out", "curve_out2"],
        root,
    );
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(root.join("curve_out/curve.csv")).unwrap(),
        std::fs::read(root.join("curve_out2/curve.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // n_init >= n
    let mut bad: serde_json::Value = serde_json::from_str(&experiment_config_json()).unwrap();
    bad["n_init"] = serde_json::json!(30);
    write(&root.join("bad.json"), &bad.to_string());
    let out = mvalign(
        &["experiment", "--config", "bad.json", "--out", "out"],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!root.join("out/report.json").exists());

    // Missing config file.
    let out = mvalign(
        &["experiment", "--config", "nothere.json", "--out", "out"],
        root,
    );
    assert_eq!(out.status.code(), Some(2));

    // Missing upstream artifact names the file.
    let out = mvalign(
        &[
            "align",
            "--data",
            "nodir",
            "--checkpoint",
            "no_ckpt.json",
            "--out",
            "out",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("view1.csv") || stderr.contains("no_ckpt"),
        "{stderr}"
    );
}

#[test]
fn numeric_failure_exits_3_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // Inference with a zero-iteration optimizer never converges, which is a
    // numeric failure at the align stage.
    let mut cfg: serde_json::Value = serde_json::from_str(&experiment_config_json()).unwrap();
    cfg["model"]["inference"] = serde_json::json!({
        "restarts": 1,
        "optimizer": {"max_iters": 0}
    });
    write(&root.join("exp.json"), &cfg.to_string());
    let out = mvalign(
        &["experiment", "--config", "exp.json", "--out", "out"],
        root,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // The partial report records the completed stages and the error.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["partial"], serde_json::json!(true));
    assert!(report["error"].as_str().unwrap().contains("converge"));
    assert!(report["final_free_energy"].as_f64().is_some());
    assert!(root.join("out/checkpoint.json").exists());
}

#[test]
fn seed_flag_overrides_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(&root.join("exp.json"), &experiment_config_json());
    for (out_dir, seed) in [("a", "11"), ("b", "11"), ("c", "12")] {
        let out = mvalign(
            &[
                "experiment",
                "--config",
                "exp.json",
                "--seed",
                seed,
                "--out",
                out_dir,
            ],
            root,
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let report = |d: &str| -> serde_json::Value {
        let mut v = serde_json::from_str::<serde_json::Value>(
            &std::fs::read_to_string(root.join(d).join("report.json")).unwrap(),
        )
        .unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v.as_object_mut().unwrap().remove("artifacts");
        v
    };
    assert_eq!(report("a"), report("b"));
    // A different seed produces different data (and hence a different fit).
    assert_ne!(
        std::fs::read(root.join("a/dataset/view1.csv")).unwrap(),
        std::fs::read(root.join("c/dataset/view1.csv")).unwrap()
    );
    assert_ne!(
        report("a")["final_free_energy"],
        report("c")["final_free_energy"]
    );
}
