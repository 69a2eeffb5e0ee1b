use std::path::Path;
use std::process::{Command, Output};

use bitvo::frame::{EdgeBitmap, FeatureFrame};
use bitvo::io::{read_dataset, write_dataset};

fn bitvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitvo")).args(args).output().expect("spawn bitvo")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(out: &Output) -> Vec<(String, String)> {
    stdout(out)
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

fn value(out: &Output, key: &str) -> String {
    report(out).into_iter().find(|(k, _)| k == key).map(|(_, v)| v).unwrap_or_default()
}

#[test]
fn one_second_simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for tag in ["a", "b"] {
        let out = bitvo(&[
            "simulate",
            "--duration",
            "1",
            "--seed",
            "5",
            "--out",
            &path(dir.path(), &format!("{tag}.bin")),
            "--gt",
            &path(dir.path(), &format!("{tag}.txt")),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert_eq!(value(&out, "frames"), "300");
        let density: f64 = value(&out, "edge_density_mean").parse().unwrap();
        assert!((0.0..=0.25).contains(&density));
    }
    let (header, frames) = read_dataset(&dir.path().join("a.bin")).unwrap();
    assert_eq!((header.frame_count, header.fps, frames.len()), (300, 300, 300));
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_eq!(read("a.txt"), read("b.txt"));
    assert_eq!(String::from_utf8(read("a.txt")).unwrap().lines().count(), 300);
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "noise.p_corner_drop = 0.1\nnoise.flicker = 3\n").unwrap();
    let out = bitvo(&[
        "simulate",
        "--config",
        &cfg.to_string_lossy(),
        "--out",
        &path(dir.path(), "d.bin"),
        "--gt",
        &path(dir.path(), "gt.txt"),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("noise.flicker"), "{}", stderr(&out));
}

#[test]
fn empty_frames_fail_initialization_with_distinct_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.bin");
    let frames: Vec<FeatureFrame> = (0..50)
        .map(|i| FeatureFrame {
            timestamp_ns: i * 3_333_333,
            corners: Vec::new(),
            edges: EdgeBitmap::new(),
        })
        .collect();
    write_dataset(&data, 300, &frames).unwrap();
    let out = bitvo(&["run", "--dataset", &data.to_string_lossy(), "--out", &path(dir.path(), "est.txt")]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("initialization failed"));
}

#[test]
fn truncated_dataset_names_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let frames = vec![FeatureFrame {
        timestamp_ns: 0,
        corners: Vec::new(),
        edges: EdgeBitmap::new(),
    }];
    write_dataset(&data, 300, &frames).unwrap();
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..100]).unwrap();
    let out = bitvo(&["run", "--dataset", &data.to_string_lossy(), "--out", &path(dir.path(), "est.txt")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("byte offset 100"), "{}", stderr(&out));
}

#[test]
fn circle_run_writes_one_pose_per_frame_after_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let (data, gt, est) = (path(dir.path(), "c.bin"), path(dir.path(), "gt.txt"), path(dir.path(), "est.txt"));
    let sim = bitvo(&["simulate", "--duration", "3", "--out", &data, "--gt", &gt]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    let run = bitvo(&["run", "--dataset", &data, "--out", &est]);
    assert!(run.status.success(), "{}", stderr(&run));
    let keys: Vec<String> = report(&run).into_iter().map(|(k, _)| k).collect();
    for key in ["frames", "mean_ms", "median_ms", "keyframes", "map_points", "tracking_lost"] {
        assert!(keys.iter().any(|k| k == key), "missing {key}");
    }
    let frames: usize = value(&run, "frames").parse().unwrap();
    let init: usize = value(&run, "initialized_at_frame").parse().unwrap();
    let lines = std::fs::read_to_string(&est).unwrap().lines().count();
    assert_eq!(frames, 900);
    assert_eq!(lines, frames - init);

    let plot = bitvo(&["plot", "--est", &est, "--gt", &gt, "--out", &path(dir.path(), "p.csv")]);
    assert!(plot.status.success(), "{}", stderr(&plot));
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..7], ["t", "x_est", "y_est", "z_est", "x_gt", "y_gt", "z_gt"]);
    assert_eq!(csv.lines().count(), lines + 1);
}

#[test]
fn eval_of_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gt = path(dir.path(), "gt.txt");
    let sim = bitvo(&["simulate", "--duration", "1", "--out", &path(dir.path(), "d.bin"), "--gt", &gt]);
    assert!(sim.status.success());
    let out = bitvo(&["eval", "--est", &gt, "--gt", &gt, "--sequence", "circle"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let keys: Vec<String> = report(&out).into_iter().map(|(k, _)| k).collect();
    assert_eq!(keys, ["sequence", "length_m", "rmse_m", "median_m"]);
    assert_eq!(value(&out, "sequence"), "circle");
    assert_eq!(value(&out, "rmse_m"), "0.000");
    assert_eq!(value(&out, "median_m"), "0.000");
}

#[test]
fn missing_file_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "nope.txt");
    let out = bitvo(&["eval", "--est", &missing, "--gt", &missing]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains(&missing), "{}", stderr(&out));
}
