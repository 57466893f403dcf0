use std::path::Path;
use std::process::{Command, Output};

use tvalm::io::{load_image, save_image};
use tvalm::report::{RunReport, CSV_HEADER};
use tvalm::Image;

fn tvalm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvalm"))
        .args(args)
        .env("TVALM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn denoise_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report, csv) = (
        dir.path().join("u.pgm"),
        dir.path().join("r.json"),
        dir.path().join("h.csv"),
    );
    let o = tvalm(&[
        "denoise",
        "--size",
        "24",
        "--tv",
        "aniso",
        "--tol",
        "1e-5",
        "--seed",
        "3",
        "--out",
        path_str(&out),
        "--report",
        path_str(&report),
        "--csv",
        path_str(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("degraded PSNR"));
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.lines().nth(1).unwrap().contains("res(λ)"));

    let restored = load_image(&out).unwrap();
    assert_eq!((restored.shape().rows(), restored.shape().cols()), (24, 24));

    let rep = RunReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!((rep.seed, rep.rows, rep.input.as_str()), (3, 24, "phantom"));
    let summary = rep.summary.unwrap();
    assert!(summary.err <= 1e-5);

    let csv = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), rep.records.len() + 1);
}

#[test]
fn noiseless_input_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    let clean = Image::from_fn(tvalm::GridShape::square(12), |i, j| {
        ((i * 12 + j) % 7) as f64 / 6.0
    });
    save_image(&input, &clean).unwrap();
    let out = dir.path().join("out.pgm");
    let o = tvalm(&[
        "denoise",
        "--input",
        path_str(&input),
        "--noise",
        "0",
        "--alpha",
        "1e-12",
        "--tol",
        "1e-10",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row = stdout.lines().last().unwrap();
    assert!(row.contains("| 99.00 |"), "{row}");
    assert_eq!(load_image(&out).unwrap(), load_image(&input).unwrap());
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let o = tvalm(&["denoise", "--size", "8", "--alpha=-1"]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["kind"].is_string());
    assert!(err["error"]["message"].as_str().unwrap().contains("alpha"));

    let o = tvalm(&["denoise", "--input", "/nonexistent/x.pgm"]);
    assert!(!o.status.success());
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn deblur_improves_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = tvalm(&[
        "deblur",
        "--size",
        "32",
        "--blur-len",
        "5",
        "--tol",
        "1e-5",
        "--report",
        path_str(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let degraded: f64 = stdout.split_whitespace().nth(2).unwrap().parse().unwrap();
    let rep = RunReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep.summary.unwrap().psnr.unwrap() > degraded);
}

#[test]
fn no_timing_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = tvalm(&[
            "denoise",
            "--size",
            "16",
            "--solver",
            "pt",
            "--no-timing",
            "--csv",
            path_str(&p),
        ]);
        assert!(o.status.success());
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn bench_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (md, csv) = (dir.path().join("t.md"), dir.path().join("t.csv"));
    let o = tvalm(&[
        "bench",
        "--size",
        "16",
        "--solvers",
        "pdp,pt",
        "--variants",
        "aniso",
        "--tols",
        "1e-4,1e-6",
        "--md",
        path_str(&md),
        "--csv",
        path_str(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(&md).unwrap();
    assert_eq!(table, String::from_utf8(o.stdout).unwrap());
    assert_eq!(table.lines().count(), 2 + 4);
    assert!(table.contains("ALM-PDP") && table.contains("ALM-PT"));
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
}

#[test]
fn phantom_round_trips_through_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.pgm");
    let o = tvalm(&["phantom", "--size", "20", "--out", path_str(&out)]);
    assert!(o.status.success());
    let img = load_image(&out).unwrap();
    let again = dir.path().join("q.pgm");
    save_image(&again, &img).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}
