mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use contrastive_seq2seq::corpus::write_jsonl;

fn cseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cseq")).args(args).output().unwrap()
}

fn write_corpus(dir: &Path) -> String {
    let path = dir.join("train.jsonl");
    write_jsonl(&path, &common::tiny_corpus()).unwrap();
    path.display().to_string()
}

#[test]
fn rouge_of_identical_files_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("a.txt");
    fs::write(&f, "red fox runs fast\nblue whale swims deep\n").unwrap();
    let out = cseq(&["rouge", f.to_str().unwrap(), f.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("1.0000"), "{stdout}");
}

#[test]
fn rouge_line_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    fs::write(&a, "one\ntwo\n").unwrap();
    fs::write(&b, "one\n").unwrap();
    let out = cseq(&["rouge", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_of_range_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("train_path = {corpus}\nalpha = 1.5\n")).unwrap();
    let out = cseq(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "temperature = 0.5\n").unwrap();
    let out = cseq(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("temperature"));
}

#[test]
fn eval_without_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("test_path = {corpus}\n")).unwrap();
    let out = cseq(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cseq(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cseq(&["ablate", "--grid", "depth"]).status.code(), Some(2));
}

#[test]
fn train_then_eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path());
    let out_dir = dir.path().join("run");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("train_path = {corpus}\ntest_path = {corpus}\nepochs = 2\n")).unwrap();
    let o = out_dir.to_str().unwrap();
    let c = cfg.to_str().unwrap();
    assert!(cseq(&["train", "--config", c, "--out", o]).status.success());
    let loss = fs::read_to_string(out_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,batch,L,L_cl,L_gen"));
    assert_eq!(loss.lines().count(), 1 + 2 * 2);

    let ckpt = out_dir.join("model.ckpt");
    fs::write(&cfg, format!("train_path = {corpus}\ntest_path = {corpus}\ncheckpoint = {}\n", ckpt.display())).unwrap();
    let eval = cseq(&["eval", "--config", c, "--out", o]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let scores = fs::read_to_string(out_dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 4);
    assert_eq!(fs::read_to_string(out_dir.join("predictions.txt")).unwrap().lines().count(), 8);
}
