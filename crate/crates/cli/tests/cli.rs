use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snapsci(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snapsci"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SCI_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["--seed", "3", "simulate", "--out", "sim"];
    args.extend_from_slice(extra);
    ok(&snapsci(&args, dir));
}

#[test]
fn simulate_then_reconstruct_gap_tv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &[]);
    for f in ["truth.bin", "truth.json", "masks.bin", "masks.json", "measurement.bin", "measurement.json", "simulate.json"] {
        assert!(dir.join("sim").join(f).exists(), "{f}");
    }
    let out = snapsci(
        &[
            "reconstruct", "--solver", "gap_tv", "--measurement", "sim/measurement.bin", "--masks", "sim/masks.bin",
            "--truth", "sim/truth.bin", "--out", "rec",
        ],
        dir,
    );
    ok(&out);
    let run = json(&dir.join("rec/run.json"));
    let psnr = run["report"]["psnr_db"].as_f64().unwrap();
    assert!(psnr >= 25.0, "psnr {psnr}");
    let digest = run["config_digest"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert_eq!(run["report"]["psnr_aggregation"], "per-frame mean");
    let trace = std::fs::read_to_string(dir.join("rec/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,sigma,fidelity,primal_q,primal_x,psnr_if_truth_given"));
    assert_eq!(trace.lines().count(), 26);
    assert_eq!(std::fs::read_dir(dir.join("rec/frames")).unwrap().count(), 8);

    // Same settings, different output directory: same digest.
    ok(&snapsci(
        &["reconstruct", "--solver", "gap_tv", "--measurement", "sim/measurement.bin", "--masks", "sim/masks.bin",
            "--truth", "sim/truth.bin", "--out", "rec2"],
        dir,
    ));
    assert_eq!(json(&dir.join("rec2/run.json"))["config_digest"], digest);

    let eval = snapsci(&["evaluate", "--recon", "rec/recon.bin", "--truth", "sim/truth.bin", "--out", "eval.json"], dir);
    ok(&eval);
    let e = json(&dir.join("eval.json"));
    assert!((e["report"]["psnr_db"].as_f64().unwrap() - psnr).abs() < 1e-4, "recon.bin is float32");
}

#[test]
fn missing_masks_is_a_coded_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &["--height", "16", "--width", "16", "--B", "2"]);
    let out = snapsci(&["reconstruct", "--measurement", "sim/measurement.bin", "--masks", "nope/masks.bin"], dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[E_MISSING_MASKS]"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = snapsci(&["reconstruct", "--measurement", "sim/measurement.bin"], dir);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_MISSING_MASKS]"));
}

#[test]
fn sweep_writes_one_trace_per_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &["--height", "32", "--width", "32", "--B", "4"]);
    let out = snapsci(
        &[
            "sweep", "--measurement", "sim/measurement.bin", "--masks", "sim/masks.bin", "--truth", "sim/truth.bin",
            "--schedules", "a,b", "--out", "sw",
        ],
        dir,
    );
    ok(&out);
    let traces: Vec<_> = std::fs::read_dir(dir.join("sw"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("trace_"))
        .collect();
    assert_eq!(traces.len(), 2, "{traces:?}");
    let run = json(&dir.join("sw/run.json"));
    assert_eq!(run["runs"].as_array().unwrap().len(), 2);
    let combined = std::fs::read_to_string(dir.join("sw/psnr_vs_iter.csv")).unwrap();
    assert!(combined.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_snapsci"))
        .args(["simulate", "--height", "8", "--width", "8", "--B", "2"])
        .current_dir(tmp.path())
        .env("SCI_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    ok(&out);
    assert!(tmp.path().join("from_env/measurement.bin").exists());
}

#[test]
fn colour_pipeline_with_trained_demosaicer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &["--kind", "color_orbits", "--height", "16", "--width", "16", "--B", "2"]);
    ok(&snapsci(
        &[
            "train-demosaic", "--synthetic", "2", "--size", "16", "--steps", "2", "--batch", "2", "--patch", "8",
            "--out", "dd.bin",
        ],
        dir,
    ));
    assert!(dir.join("dd.json").exists());
    ok(&snapsci(
        &[
            "reconstruct", "--demosaicer", "ddnet", "--ddnet-checkpoint", "dd.bin", "--measurement",
            "sim/measurement.bin", "--masks", "sim/masks.bin", "--truth", "sim/truth.bin", "--schedule", "b",
            "--out", "rec",
        ],
        dir,
    ));
    let run = json(&dir.join("rec/run.json"));
    assert_eq!(run["config"]["demosaicer"], "ddnet");
    assert!(run["report"]["psnr_db"].as_f64().unwrap() > 10.0);
}

#[test]
fn benchmark_on_synthetic_suite_is_non_official() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&snapsci(&["benchmark", "--solver", "gap_tv", "--scenes", "2", "--size", "16", "--B", "2", "--out", "bench"], dir));
    let csv = std::fs::read_to_string(dir.join("bench/benchmark.csv")).unwrap();
    assert!(csv.starts_with("scene,solver,psnr_db,ssim,seconds,iterations,official"));
    assert_eq!(json(&dir.join("bench/run.json"))["report"]["official"], false);
}
