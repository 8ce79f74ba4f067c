use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trailerness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trailerness"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path) {
    let out = trailerness(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--episodes",
        "8",
        "--frames",
        "640",
        "--shots",
        "10",
        "--no-frames",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_grid_prints_every_subset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    assert!(data.join("manifest.json").is_file());
    let out = trailerness(&[
        "grid",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
        "--streams",
        "visual-clip,textual-clip",
        "--seeds",
        "0",
        "--epochs",
        "2",
        "--d-k",
        "8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("visual-clip+textual-clip ")));
    assert!(dir.path().join("run/grid/summary.json").is_file());
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        serde_json::json!({
            "manifest": data.join("manifest.json"),
            "output_dir": dir.path().join("run"),
            "streams": ["textual-clip"],
            "model": "mlp",
            "seeds": [0, 1],
        })
        .to_string(),
    )
    .unwrap();
    let config = config.to_str().unwrap();
    for stage in ["labels", "train", "predict", "fuse", "eval"] {
        let out = trailerness(&[stage, "--config", config, "--epochs", "2"]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(dir.path().join("run/eval/summary.txt").is_file());
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = trailerness(&["labels", "--manifest", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let out = trailerness(&["grid", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    let out = trailerness(&["train", "--model", "svm"]);
    assert_eq!(out.status.code(), Some(2));

    let data = dir.path().join("data");
    synth(&data);
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"seeds": []}"#).unwrap();
    let out = trailerness(&[
        "labels",
        "--config",
        config.to_str().unwrap(),
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(&config, r#"{"sedes": [0]}"#).unwrap();
    let out = trailerness(&["labels", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(6));
}
