use std::fs;
use std::path::Path;

use noiselock::cli::{main_with_args, EXIT_CONFIG, EXIT_FAILED, EXIT_OK};

const SWEEP: &str = "\
experiment = sweep_theta
seed = 5

[sweep]
points = 8
point_duration = 0.004
";

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["noiselock", "run"];
    argv.extend_from_slice(args);
    argv.push("--out");
    let out = dir.to_string_lossy().into_owned();
    argv.push(&out);
    main_with_args(argv)
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn sweep_run_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &[&cfg]), EXIT_OK);
    for f in ["config.txt", "summary.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict = pass"), "{summary}");
    assert!(summary.contains("seed = 5"), "{summary}");
    let csvs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert!(csvs > 0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&a, &[&cfg]), EXIT_OK);
    assert_eq!(run(&b, &[&cfg]), EXIT_OK);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let (x, y) = (fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap());
        if n == "config.txt" {
            let differing: Vec<_> = String::from_utf8(x)
                .unwrap()
                .lines()
                .zip(String::from_utf8(y).unwrap().lines())
                .filter(|(l, r)| l != r)
                .map(|(l, _)| l.to_owned())
                .collect();
            assert!(differing.iter().all(|l| l.starts_with("output_dir")), "{differing:?}");
            continue;
        }
        assert_eq!(x, y, "{n:?}");
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &[&cfg, "--seed", "77"]), EXIT_OK);
    let written = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.lines().any(|l| l == "seed = 77"), "{written}");
}

#[test]
fn failed_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SWEEP}\n[tolerances]\nzero_crossing = 1e-12\n");
    let cfg = write_config(tmp.path(), &text);
    assert_eq!(run(&tmp.path().join("out"), &[&cfg]), EXIT_FAILED);
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[plant]\nloss_lambda = 1.5\n");
    assert_eq!(run(&out, &[&cfg]), EXIT_CONFIG);
    assert_eq!(run(&out, &["no-such-preset"]), EXIT_CONFIG);
    assert_eq!(run(&out, &["fig2", "--scale=-1"]), EXIT_CONFIG);
    assert!(!out.exists());
    assert_eq!(main_with_args(["noiselock", "frobnicate"]), EXIT_CONFIG);
}
