use std::fs;
use std::process::{Command, Output};

use jdi_core::pipeline::{load_image, CSV_HEADER};

fn jdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdi")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn experiment_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<String> = (0..2).map(|i| dir.path().join(format!("run{i}.csv")).display().to_string()).collect();
    for p in &paths {
        let out = jdi(&["experiment", "--size", "48", "--seed", "7", "--out-csv", p, "variances=0.02,0.05"]);
        assert_ok(&out);
    }
    let a = fs::read(&paths[0]).unwrap();
    let b = fs::read(&paths[1]).unwrap();
    assert_eq!(a, b);

    let other = jdi(&["experiment", "--size", "48", "--seed", "8", "variances=0.02,0.05"]);
    assert_ok(&other);
    assert_ne!(stdout(&other).as_bytes(), a.as_slice());
}

#[test]
fn experiment_csv_schema() {
    let out = jdi(&["experiment", "--size", "40", "variances=0.03", "denoiser=gaussian"]);
    assert_ok(&out);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "portrait");
        assert_eq!(fields[1], "rotation:20");
        assert_eq!(fields[2], "gaussian");
        assert_eq!(fields[4], "0.03");
        let psnr = fields[5];
        assert_eq!(psnr.split('.').nth(1).unwrap().len(), 6, "six decimals in {psnr}");
        assert_eq!(fields[6], "0");
    }
    assert_eq!(lines[1].split(',').nth(3), Some("joint"));
    assert_eq!(lines[2].split(',').nth(3), Some("sequential"));
}

#[test]
fn config_file_with_homography() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# warp test\ntransform=homography h=\"1,0.2,0;0.1,1,0;0,0,1\"\nimage=peppers\ndenoiser=bilateral\nvariances=0.04\nmode=joint\n",
    )
    .unwrap();
    let out = jdi(&["experiment", "--size", "40", "--config", cfg.to_str().unwrap()]);
    assert_ok(&out);
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("peppers,homography:1 0.2 0;0.1 1 0;0 0 1,bilateral,joint,0.04,"), "{row}");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn joint_and_sequential_write_images() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["joint", "sequential"] {
        let path = dir.path().join(format!("{mode}.pgm"));
        let out = jdi(&[mode, "--size", "40", "--noise", "0.02", "--out-image", path.to_str().unwrap()]);
        assert_ok(&out);
        let text = stdout(&out);
        let psnr: f64 = text.lines().find_map(|l| l.strip_prefix("psnr_db=")).expect("psnr line").parse().unwrap();
        assert!(psnr > 10.0 && psnr < 60.0, "{mode}: {psnr}");
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (40, 40));
    }
}

#[test]
fn denoise_and_interpolate_roundtrip_pgm_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    let plain = dir.path().join("interp.pgm");
    let out = jdi(&["interpolate", "--size", "30", "angle=0", "--out-image", input.to_str().unwrap()]);
    assert_ok(&out);
    let out =
        jdi(&["interpolate", "--input", input.to_str().unwrap(), "angle=0", "--out-image", plain.to_str().unwrap()]);
    assert_ok(&out);
    // a zero-degree rotation reproduces the input exactly
    assert_eq!(fs::read(&input).unwrap(), fs::read(&plain).unwrap());

    let den = dir.path().join("den.pgm");
    let out =
        jdi(&["denoise", "--input", input.to_str().unwrap(), "--noise", "0.01", "--out-image", den.to_str().unwrap()]);
    assert_ok(&out);
    assert!(stdout(&out).contains("0 failed patches"));
    assert_eq!(load_image(&den).unwrap().width(), 30);
}

#[test]
fn inspect_graph_prints_edge_lists() {
    let out = jdi(&["inspect-graph", "--size", "40", "--patch", "0"]);
    assert_ok(&out);
    let text = stdout(&out);
    let mut self_loops = 0;
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f.len(), 3, "{line}");
        let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let _: f64 = f[2].parse().unwrap();
        assert!(i <= j);
        self_loops += usize::from(i == j);
    }
    assert!(text.lines().count() > self_loops);

    let out = jdi(&["inspect-graph", "--size", "40", "--graph", "interpolator", "--patch", "0"]);
    assert_ok(&out);
    assert!(stdout(&out).lines().count() > 0);
}

#[test]
fn bad_settings_exit_with_usage_code() {
    let out = jdi(&["experiment", "--size", "20", "bogus_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = jdi(&["experiment", "--size", "20", "not-a-pair"]);
    assert_eq!(out.status.code(), Some(2));

    let out = jdi(&["joint", "--input", "/nonexistent/file.pgm"]);
    assert_eq!(out.status.code(), Some(1));
}
