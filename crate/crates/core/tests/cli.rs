//! Command-line behaviour: exit codes and the files each subcommand writes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn posegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posegan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(path: &Path, data: &Path, out: &Path, iters: [usize; 3]) {
    let text = format!(
        "# tiny run\nimage_size = 32\nbatch_size = 2\nbase_width = 4\nstage1_iters = {}\nstage2_iters = {}\nstage3_iters = {}\nconv_window = 1\nsample_every = 0\ndata_dir = {}\nout_dir = {}\n",
        iters[0],
        iters[1],
        iters[2],
        data.display(),
        out.display()
    );
    fs::write(path, text).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&posegan(&[])), 1);
    assert_eq!(code(&posegan(&["bogus"])), 1);
    assert_eq!(code(&posegan(&["train"])), 1);
    assert_eq!(code(&posegan(&["make-data", "--n-train", "x", "--n-test", "1", "--seed", "1", "--out", "d"])), 1);
    assert_eq!(code(&posegan(&["ablate", "--config", "c.cfg", "--variants", "full,nonsense"])), 1);
    assert_eq!(code(&posegan(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let out = dir.path().join("o.ppm");
    let r = posegan(&["generate", "--checkpoint", s(&missing), "--source", "a", "--pose", "b", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.ckpt"));
    assert!(!out.exists());
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "image_size = nope\n").unwrap();
    assert_eq!(code(&posegan(&["train", "--config", s(&cfg)])), 2);
    assert_eq!(code(&posegan(&["train", "--config", s(&dir.path().join("absent.cfg"))])), 2);
}

#[test]
fn make_data_train_evaluate_generate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let r = posegan(&["make-data", "--n-train", "3", "--n-test", "2", "--seed", "4", "--out", s(&data), "--size", "32"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for split in ["train", "test"] {
        assert!(data.join(split).join("manifest.txt").is_file());
    }
    let again = dir.path().join("again");
    posegan(&["make-data", "--n-train", "3", "--n-test", "2", "--seed", "4", "--out", s(&again), "--size", "32"]);
    assert_eq!(
        fs::read(data.join("train/manifest.txt")).unwrap(),
        fs::read(again.join("train/manifest.txt")).unwrap()
    );

    let cfg = dir.path().join("run.cfg");
    let run = dir.path().join("run");
    write_config(&cfg, &data, &run, [1, 1, 1]);
    let r = posegan(&["train", "--config", s(&cfg), "--seed", "3"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let ckpt = run.join("final.ckpt");
    assert!(ckpt.is_file());
    let csv = fs::read_to_string(run.join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,l1,ce,cor,perc,style,wass,total");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));

    let eval = dir.path().join("eval.csv");
    let r = posegan(&["evaluate", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&eval)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(&eval).unwrap();
    assert!(text.starts_with("id,psnr,perceptual_distance\n"));
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().last().unwrap().starts_with("mean,"));

    let img = dir.path().join("gen.ppm");
    let r = posegan(&[
        "generate", "--checkpoint", s(&ckpt), "--source", "train_00000", "--pose", "test_00001", "--out", s(&img),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(fs::read(&img).unwrap().starts_with(b"P6"));
    assert!(fs::read(dir.path().join("gen_parse.pgm")).unwrap().starts_with(b"P5"));
    let r = posegan(&["generate", "--checkpoint", s(&ckpt), "--source", "nobody", "--pose", "train_00000", "--out", s(&img)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn zero_iterations_and_empty_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&posegan(&["make-data", "--n-train", "2", "--n-test", "0", "--seed", "1", "--out", s(&data), "--size", "32"])), 0);
    let cfg = dir.path().join("zero.cfg");
    let run = dir.path().join("run");
    write_config(&cfg, &data, &run, [0, 0, 0]);
    assert_eq!(code(&posegan(&["train", "--config", s(&cfg)])), 0);
    assert_eq!(fs::read_to_string(run.join("loss.csv")).unwrap(), "iter,l1,ce,cor,perc,style,wass,total\n");
    let ckpts: Vec<_> = fs::read_dir(&run)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ckpt"))
        .collect();
    assert_eq!(ckpts.len(), 1);
    let eval = dir.path().join("eval.csv");
    let r = posegan(&["evaluate", "--checkpoint", s(&run.join("final.ckpt")), "--data", s(&data), "--out", s(&eval)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(fs::read_to_string(&eval).unwrap(), "id,psnr,perceptual_distance\n");
}

#[test]
fn ablate_writes_table_for_requested_variants() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&posegan(&["make-data", "--n-train", "2", "--n-test", "1", "--seed", "2", "--out", s(&data), "--size", "32"])), 0);
    let cfg = dir.path().join("abl.cfg");
    let out = dir.path().join("abl");
    write_config(&cfg, &data, &out, [1, 2, 0]);
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str("ablation_seeds = 0\n");
    fs::write(&cfg, text).unwrap();
    let r = posegan(&["ablate", "--config", s(&cfg), "--variants", "full,no-fft"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "variant,iterations,converged_runs,perceptual_distance,psnr");
    assert!(rows[1].starts_with("full,") && rows[2].starts_with("no-fft,"));
    assert_eq!(rows.len(), 3);
    assert!(out.join("ablation_runs.csv").is_file());
}
