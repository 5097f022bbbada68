use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpcompose"))
}

fn write_csv(dir: &Path, rows: usize, dates: bool) -> PathBuf {
    let mut s = String::from("time,value\n");
    for i in 0..rows {
        let t = i as f64;
        let y = 0.05 * t + (t / 2.0).sin() + 0.1 * (1.7 * t).cos();
        if dates {
            let d = chrono_like_date(i);
            s.push_str(&format!("{d},{y}\n"));
        } else {
            s.push_str(&format!("{t},{y}\n"));
        }
    }
    let path = dir.join("series.csv");
    std::fs::write(&path, s).unwrap();
    path
}

/// `2015-01-01` plus `i` days, for `i < 59`.
fn chrono_like_date(i: usize) -> String {
    let (m, d) = if i < 31 { (1, i + 1) } else { (2, i - 30) };
    format!("2015-{m:02}-{d:02}")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn report(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "report",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--seed",
        "3",
        "--restarts",
        "2",
        "--max-iters",
        "150",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn fixed_kernel_report_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), 40, false);
    let out = dir.path().join("out");
    let res = report(&input, &out, &["--kernel", "SE * LIN", "--test-count", "5"]);
    assert!(res.status.success());
    for f in ["kernel.txt", "description.txt", "program.stan", "data.json", "predictions.csv", "plot.svg", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!out.join("trace.jsonl").exists());
    let desc = std::fs::read_to_string(out.join("description.txt")).unwrap();
    assert_eq!(desc.trim_end(), "a smooth function with linearly (LIN) increasing amplitude");

    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert_eq!(circles, 40);

    let preds = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("time,mean,lower,upper"));
    assert_eq!(lines.count(), 40);

    let run_json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["seed"], 3);
    assert_eq!(run_json["config"]["kernel"], "SE * LIN");
    assert_eq!(run_json["config"]["split"]["count"], 5);
}

#[test]
fn intervals_bracket_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), 30, true);
    let out = dir.path().join("out");
    let res = report(&input, &out, &["--kernel", "SE + LIN", "--test-count", "4", "--latent-only"]);
    assert!(res.status.success());
    let preds = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    for line in preds.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[1] - v[2] >= 0.0 && v[3] - v[1] >= 0.0, "{line}");
    }
    // dates became day offsets
    assert!(preds.lines().nth(2).unwrap().starts_with("1,"));
}

#[test]
fn search_mode_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), 30, false);
    let out = dir.path().join("out");
    let res = run(&[
        "fit", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "1",
        "--max-depth", "2", "--restarts", "1", "--max-iters", "80", "--operators", "+,*",
        "--base-kernels", "SE,LIN,PER",
    ]);
    assert!(res.status.success());
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 3);
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["kernel"].is_string());
    }
    let kernel = std::fs::read_to_string(out.join("kernel.txt")).unwrap();
    gpcompose::parse(kernel.trim()).unwrap();
}

#[test]
fn compile_then_sample() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), 20, false);
    let out = dir.path().join("out");
    let res = run(&[
        "compile", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "0",
        "--kernel", "SE[lengthscale=2]", "--no-fit", "--test-count", "3",
    ]);
    assert!(res.status.success());
    let data: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("data.json")).unwrap()).unwrap();
    assert_eq!((data["N1"].as_u64(), data["N2"].as_u64()), (Some(17), Some(3)));
    let res = run(&[
        "sample", "--program", out.join("program.stan").to_str().unwrap(), "--data",
        out.join("data.json").to_str().unwrap(), "--draws", "50", "--seed", "9", "--output", out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let draws = std::fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().next(), Some("draw,y2[1],y2[2],y2[3]"));
    assert_eq!(draws.lines().count(), 51);
}

#[test]
fn errors_are_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_csv(dir.path(), 20, false);
    let out = dir.path().join("out");
    let res = run(&["report", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "0", "--value-column", "close"]);
    assert!(!res.status.success());
    let stderr = String::from_utf8(res.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(v["message"].as_str().unwrap().contains("missing column `close`"));

    let res = run(&["compile", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "0", "--kernel", "SE +"]);
    assert!(!res.status.success());
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(res.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "syntax");

    let res = run(&["report", "--bogus"]);
    assert_eq!(res.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(res.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "usage");
}
