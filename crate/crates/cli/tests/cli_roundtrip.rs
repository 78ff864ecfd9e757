//! End-to-end exercises of the `ronet` binary: every subcommand, exit codes,
//! and the decompose/restore round trips.

mod common;

use std::process::Command;

use common::{ronet_bin, synthetic_image, write_pngs};
use ronet_cli::commands::decompose;
use ronet_cli::imageio::{load_image, save_image};

fn run_ok(args: &[&str]) {
    let out = Command::new(ronet_bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "`ronet {}` failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_flag_exits_2() {
    let out = Command::new(ronet_bin())
        .args(["decompose", "--nonsense"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(ronet_bin())
        .args([
            "decompose",
            "--input",
            "/definitely/not/here.png",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("here.png"));
}

#[test]
fn decompose_svd_reconstructs_within_sidecar_bound() {
    let dir = tempfile::tempdir().unwrap();
    let img = synthetic_image(5, 3, 48, 40);
    let input = dir.path().join("img.png");
    save_image(&img, &input).unwrap();
    let out_dir = dir.path().join("parts");
    run_ok(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--levels",
        "3",
        "--method",
        "svd",
    ]);
    let (rebuilt, bound) = decompose::reconstruct_from_dir(&out_dir).unwrap();
    // The PNG-loaded input is itself quantized; compare against that.
    let quantized_input = load_image(&input).unwrap();
    let worst = rebuilt
        .data()
        .iter()
        .zip(quantized_input.data())
        .map(|(&a, &b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    assert!(
        worst <= bound + 1e-6,
        "reconstruction error {worst} exceeds sidecar bound {bound}"
    );
}

#[test]
fn degrade_writes_pairs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input_dir = dir.path().join("clean");
    std::fs::create_dir_all(&input_dir).unwrap();
    write_pngs(
        &input_dir,
        &[
            ("a".into(), synthetic_image(1, 3, 33, 31)),
            ("b".into(), synthetic_image(2, 3, 40, 40)),
        ],
    );
    let out_dir = dir.path().join("paired");
    run_ok(&[
        "degrade",
        "--input",
        input_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--kind",
        "bicubic",
        "--scale",
        "4",
        "--seed",
        "3",
    ]);
    // hr cropped to divisible size, lr a quarter of it
    let hr = load_image(&out_dir.join("hr/a.png")).unwrap();
    let lr = load_image(&out_dir.join("lr/a.png")).unwrap();
    assert_eq!(hr.shape(), &[1, 3, 32, 28]);
    assert_eq!(lr.shape(), &[1, 3, 8, 7]);
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = degrade"));
    assert!(manifest.contains("image.a.png"));
    assert!(manifest.contains("image.b.png"));
}

#[test]
fn evaluate_identical_images_reports_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = vec![
        ("x".to_string(), synthetic_image(7, 3, 24, 24)),
        ("y".to_string(), synthetic_image(8, 3, 24, 24)),
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    write_pngs(&a, &imgs);
    write_pngs(&b, &imgs);
    let report_dir = dir.path().join("report");
    run_ok(&[
        "evaluate",
        "--restored",
        a.to_str().unwrap(),
        "--truth",
        b.to_str().unwrap(),
        "--protocol",
        "plain",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(report_dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "image_id,protocol,psnr,ssim");
    for line in lines {
        if line.starts_with("mean") {
            assert!(line.contains("identical"));
        } else {
            assert!(line.contains(",identical,"), "line: {line}");
        }
    }
}

#[test]
fn full_desk_scale_pipeline_smoke() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    std::fs::create_dir_all(&clean_dir).unwrap();
    let images: Vec<(String, ronet_core::Tensor<f32>)> = (0..4)
        .map(|i| (format!("img{i}"), synthetic_image(100 + i, 1, 40, 40)))
        .collect();
    write_pngs(&clean_dir, &images);

    // degrade: denoising pairs
    let paired = dir.path().join("paired");
    run_ok(&[
        "degrade",
        "--input",
        clean_dir.to_str().unwrap(),
        "--out",
        paired.to_str().unwrap(),
        "--kind",
        "awgn",
        "--sigma",
        "25",
        "--seed",
        "11",
    ]);

    // tiny config shared by both trainings
    let config_path = dir.path().join("run.cfg");
    std::fs::write(
        &config_path,
        "task = denoise-gray\nseed = 5\nupdates = 3\nbatch_size = 2\npatch_size = 16\n\
         levels = 1\nlr = 1e-3\nlr_schedule = constant\nrop_wide = 8\nrop_narrow = 4\n\
         rec_halved = true\n",
    )
    .unwrap();

    let rodec_dir = dir.path().join("rodec");
    run_ok(&[
        "train-rodec",
        "--config",
        config_path.to_str().unwrap(),
        "--images",
        paired.join("hr").to_str().unwrap(),
        "--out",
        rodec_dir.to_str().unwrap(),
    ]);
    assert!(rodec_dir.join("rodec.ckpt").exists());
    let loss_csv = std::fs::read_to_string(rodec_dir.join("loss.csv")).unwrap();
    assert!(loss_csv.starts_with("step,loss,lr,wall_ms"));
    assert_eq!(loss_csv.lines().count(), 4); // header + 3 steps
    let manifest = std::fs::read_to_string(rodec_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("weights_sha256 = "));
    assert!(manifest.contains("task = denoise-gray"));
    assert!(manifest.contains("model_variant = UROD-G"));

    let ronet_dir = dir.path().join("ronet");
    run_ok(&[
        "train-ronet",
        "--config",
        config_path.to_str().unwrap(),
        "--source",
        paired.join("lr").to_str().unwrap(),
        "--target",
        paired.join("hr").to_str().unwrap(),
        "--dec",
        rodec_dir.join("rodec.ckpt").to_str().unwrap(),
        "--out",
        ronet_dir.to_str().unwrap(),
    ]);
    assert!(ronet_dir.join("ronet.ckpt").exists());

    let restored_dir = dir.path().join("restored");
    run_ok(&[
        "restore",
        "--source",
        paired.join("lr").to_str().unwrap(),
        "--dec",
        rodec_dir.join("rodec.ckpt").to_str().unwrap(),
        "--rec",
        ronet_dir.join("ronet.ckpt").to_str().unwrap(),
        "--out",
        restored_dir.to_str().unwrap(),
    ]);
    for i in 0..4 {
        assert!(restored_dir.join(format!("img{i}.png")).exists());
    }

    let report_dir = dir.path().join("report");
    run_ok(&[
        "evaluate",
        "--restored",
        restored_dir.to_str().unwrap(),
        "--truth",
        paired.join("hr").to_str().unwrap(),
        "--protocol",
        "plain",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(report_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6); // header + 4 images + mean
    assert!(started.elapsed().as_secs() < 120, "pipeline smoke too slow");
}

#[test]
fn rerun_from_same_config_reproduces_weights_hash() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    std::fs::create_dir_all(&clean_dir).unwrap();
    write_pngs(
        &clean_dir,
        &[
            ("a".into(), synthetic_image(201, 1, 32, 32)),
            ("b".into(), synthetic_image(202, 1, 32, 32)),
        ],
    );
    let config_path = dir.path().join("run.cfg");
    std::fs::write(
        &config_path,
        "task = denoise-gray\nseed = 9\nupdates = 4\nbatch_size = 2\npatch_size = 16\n\
         levels = 1\nrop_wide = 8\nrop_narrow = 4\n",
    )
    .unwrap();

    let mut hashes = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("run{run}"));
        run_ok(&[
            "train-rodec",
            "--config",
            config_path.to_str().unwrap(),
            "--images",
            clean_dir.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        let hash = manifest
            .lines()
            .find(|l| l.starts_with("weights_sha256"))
            .unwrap()
            .to_string();
        let bytes = std::fs::read(out_dir.join("rodec.ckpt")).unwrap();
        hashes.push((hash, bytes));
    }
    assert_eq!(
        hashes[0].0, hashes[1].0,
        "manifest hashes differ across reruns"
    );
    assert_eq!(
        hashes[0].1, hashes[1].1,
        "checkpoint bytes differ across reruns"
    );
}
