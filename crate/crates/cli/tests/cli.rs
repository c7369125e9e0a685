//! End-to-end checks of the command-line surface: flag parsing, file
//! emission, and the documented exit codes.

use std::path::Path;
use std::process::Command;

fn uqrecon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uqrecon"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    // a drastically reduced configuration so CLI tests stay fast
    let cfg = serde_json::json!({
        "version": 1,
        "master_seed": 11,
        "runs": 1,
        "test_samples": 2,
        "out_root": null,
        "denoise": {
            "image_size": 32, "corpus_size": 20, "corpus_seed": 5,
            "noise_sigma": 0.098, "channels": 6, "conv_layers": 4, "dropout_rate": 0.1,
            "train": {"epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "inn": {"beta": 0.001, "interval_layers": 2, "epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "mcdrop": {"passes": 4},
            "probout": {"epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "attack": {"lambda": 0.5, "max_iterations": 8, "optimizer": "lbfgs", "patch_size": null},
            "ood": {"salt_pepper_amount": 0.1}
        },
        "ct": {
            "image_size": 32, "corpus_size": 20, "corpus_seed": 6,
            "num_angles": 45, "missing_wedge": [75.0, 105.0], "fbp_window": [-0.25, 1.05],
            "base_channels": 4, "dropout_rate": 0.5,
            "train": {"epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "inn": {"beta": 0.0001, "interval_layers": 2, "epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "mcdrop": {"passes": 4},
            "probout": {"epochs": 1, "learning_rate": 0.001, "batch_size": 8},
            "attack": {"lambda": 0.0, "max_iterations": 8, "optimizer": "lbfgs", "patch_size": null},
            "ood": {"silhouette_intensity": 1.0, "silhouette_area": 0.05}
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn gen_data_then_train_then_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("out");

    let status = uqrecon()
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("corpus/denoise/manifest.json").exists());
    assert!(out.join("corpus/ct/manifest.json").exists());

    for sub in ["train", "train-inn", "train-probout"] {
        let status = uqrecon()
            .args([sub, "--task", "denoise", "--run", "0", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{sub} failed");
    }
    assert!(out.join("runs/run_0/denoise/baseline.ckpt").exists());
    assert!(out.join("runs/run_0/denoise/inn.ckpt").exists());
    assert!(out.join("runs/run_0/denoise/probout.ckpt").exists());

    let status = uqrecon()
        .args([
            "score",
            "--task",
            "denoise",
            "--experiment",
            "artdetect",
            "--run",
            "0",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("runs/run_0/denoise/artdetect/records.csv").exists());
}

#[test]
fn missing_checkpoint_is_a_config_error_naming_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("out");

    let output = uqrecon()
        .args([
            "score",
            "--task",
            "ct",
            "--experiment",
            "advdetect",
            "--run",
            "0",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("uqrecon train"), "stderr: {stderr}");
}

#[test]
fn render_subcommand_writes_a_png_and_rejects_bad_windows() {
    let dir = tempfile::tempdir().unwrap();
    let tensor_path = dir.path().join("t.ht");
    let t = uqrecon::tensor::Tensor::new(vec![8, 8], (0..64).map(|i| i as f64 / 63.0).collect())
        .unwrap();
    uqrecon::checkpoint::save_tensor(&tensor_path, &t).unwrap();

    let png = dir.path().join("t.png");
    let status = uqrecon()
        .args(["render", "--lo", "0", "--hi", "1", "--input"])
        .arg(&tensor_path)
        .arg("--out")
        .arg(&png)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(png.exists());

    // lo >= hi is a config error -> exit code 2
    let status = uqrecon()
        .args(["render", "--lo", "1", "--hi", "1", "--input"])
        .arg(&tensor_path)
        .arg("--out")
        .arg(&png)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn ood_subcommand_validates_mode_task_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("out");
    // salt & pepper is a denoising-noise replacement; CT must be rejected
    let output = uqrecon()
        .args([
            "ood",
            "--task",
            "ct",
            "--mode",
            "saltpepper",
            "--seed",
            "3",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(out.join("ood"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
