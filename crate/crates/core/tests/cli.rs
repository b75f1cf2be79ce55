use std::path::{Path, PathBuf};

use clap::Parser;
use hae::check::{identity_suite, IdentityOptions};
use hae::cli::{check_outcome, run, Cli, Outcome};
use hae::geometry::{radius, Ball};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn hae(args: &[&str]) -> (Outcome, String) {
    let cli = Cli::try_parse_from(std::iter::once("hae").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let outcome = run(cli, &mut out).unwrap();
    (outcome, String::from_utf8(out).unwrap())
}

fn hae_err(args: &[&str]) -> hae::HaeError {
    let cli = Cli::try_parse_from(std::iter::once("hae").chain(args.iter().copied())).unwrap();
    run(cli, &mut Vec::new()).unwrap_err()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

fn config_hash(stdout: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("config_hash "))
        .unwrap()
        .to_string()
}

/// A tiny dataset and a one-step model with a 2-D ball.
struct Fixture {
    dir: TempDir,
    data: PathBuf,
    ckpt: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data.csv");
        let ckpt = dir.path().join("ckpt.json");
        hae(&["gen-data", "--per-class", "6", "--dim", "12", "--out", s(&data)]);
        hae(&[
            "train",
            "--data",
            s(&data),
            "--steps",
            "20",
            "--ball-dim",
            "2",
            "--hidden-dim",
            "8",
            "--layers",
            "2",
            "--out",
            s(&ckpt),
        ]);
        Fixture { dir, data, ckpt }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn model<'a>(&'a self, args: &[&'a str]) -> Vec<&'a str> {
        let mut v = args.to_vec();
        v.extend(["--ckpt", s(&self.ckpt), "--data", s(&self.data)]);
        v
    }
}

#[test]
fn gen_data_row_counts_and_determinism() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let (outcome, stdout) = hae(&["gen-data", "--out", s(&a)]);
    assert_eq!(outcome, Outcome::Success);
    assert!(stdout.contains("2048"), "{stdout}");
    assert_eq!(rows(&a).len(), 2048);
    hae(&["gen-data", "--out", s(&b)]);
    assert_eq!(digest(&a), digest(&b));

    let one = dir.path().join("one.csv");
    hae(&["gen-data", "--per-class", "1", "--out", s(&one)]);
    assert_eq!(rows(&one).len(), 16);
}

#[test]
fn every_command_echoes_its_config() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let (_, first) = hae(&["gen-data", "--per-class", "2", "--out", s(&a)]);
    assert!(first.lines().any(|l| l.starts_with("config {")));
    let (_, again) = hae(&[
        "gen-data",
        "--per-class",
        "2",
        "--out",
        s(&dir.path().join("elsewhere.csv")),
    ]);
    assert_eq!(config_hash(&first), config_hash(&again));
    let (_, other) = hae(&["--seed", "9", "gen-data", "--per-class", "2", "--out", s(&a)]);
    assert_ne!(config_hash(&first), config_hash(&other));
}

#[test]
fn train_writes_a_reproducible_checkpoint() {
    let fx = Fixture::new();
    let one = fx.path("one.json");
    let again = fx.path("again.json");
    let args = |out: &Path| {
        [
            "train",
            "--data",
            s(&fx.data),
            "--steps",
            "1",
            "--ball-dim",
            "2",
            "--hidden-dim",
            "8",
            "--layers",
            "2",
            "--out",
        ]
        .into_iter()
        .map(String::from)
        .chain([s(out).to_string()])
        .collect::<Vec<_>>()
    };
    let a = args(&one);
    hae(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let b = args(&again);
    hae(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(digest(&one), digest(&again));
    let ckpt = hae::train::load_checkpoint(&one).unwrap();
    assert_eq!(ckpt.step, 1);
    ckpt.model().unwrap();
    assert!(one.with_extension("history.csv").exists());
}

#[test]
fn interpolate_with_two_steps_emits_the_endpoints() {
    let fx = Fixture::new();
    let out = fx.path("interp.csv");
    hae(&fx.model(&[
        "edit",
        "interpolate",
        "--src",
        "0",
        "--dst",
        "40",
        "--steps",
        "2",
        "--out",
        s(&out),
    ]));
    let got = rows(&out);
    assert_eq!(got.len(), 2);
    assert_eq!(got[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(got[1][1].parse::<f64>().unwrap(), 1.0);

    let emb = fx.path("emb.csv");
    hae(&fx.model(&["embed", "--out", s(&emb)]));
    let e = hae::plot::read_embeddings(&emb).unwrap();
    for (row, id) in got.iter().zip([0, 40]) {
        let z: Vec<f64> = row[2..4].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(z, e.rows[e.position(id).unwrap()].z);
    }
}

#[test]
fn perturb_at_zero_step_is_a_rescale() {
    let fx = Fixture::new();
    let out = fx.path("perturb.csv");
    hae(&fx.model(&[
        "edit",
        "perturb",
        "--src",
        "3",
        "--radius",
        "2.5",
        "--t",
        "0",
        "--out",
        s(&out),
    ]));
    let got = rows(&out);
    assert_eq!(got.len(), 1);
    let z: Vec<f64> = got[0][2..4].iter().map(|v| v.parse().unwrap()).collect();
    assert!((radius(&Ball::default().point(&z).unwrap()).get() - 2.5).abs() <= 1e-8);
}

#[test]
fn transfer_rows_share_the_edit() {
    let fx = Fixture::new();
    let out = fx.path("transfer.csv");
    hae(&fx.model(&[
        "edit",
        "transfer",
        "--direction-seed",
        "5",
        "--ids",
        "0,7,20",
        "--radius",
        "3",
        "--out",
        s(&out),
    ]));
    let got = rows(&out);
    assert_eq!(got.len(), 3);
    assert_eq!(got.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0", "7", "20"]);
    assert!(got.iter().all(|r| r[1] == got[0][1]));
}

#[test]
fn edits_reject_bad_inputs() {
    let fx = Fixture::new();
    let out = fx.path("bad.csv");
    let missing = hae_err(&fx.model(&["edit", "perturb", "--src", "99999", "--out", s(&out)]));
    assert!(missing.to_string().contains("99999"), "{missing}");
    hae_err(&fx.model(&["edit", "perturb", "--src", "0", "--radius", "99", "--out", s(&out)]));
}

#[test]
fn eval_reports_one_row_per_radius() {
    let fx = Fixture::new();
    let small = ["--sources", "4", "--per-source", "2", "--cross-pairs", "20"];
    let one = fx.path("one.json");
    let mut args = fx.model(&["eval", "--radii", "3.0", "--out", s(&one)]);
    args.extend(small);
    hae(&args);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&one).unwrap()).unwrap();
    for key in [
        "radii",
        "preservation",
        "diversity",
        "radius_structure",
        "seed",
        "config_hash",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["radii"].as_array().unwrap().len(), 1);

    let four = fx.path("four.json");
    let mut args = fx.model(&["eval", "--out", s(&four)]);
    args.extend(small);
    hae(&args);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&four).unwrap()).unwrap();
    let radii: Vec<f64> = doc["radii"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let want = [6.2126, 5.28, 4.35, 3.42];
    assert_eq!(radii.len(), 4);
    for (r, w) in radii.iter().zip(want) {
        assert!((r - w).abs() < 5e-3, "{r} vs {w}");
    }
    assert_eq!(
        std::fs::read_to_string(four.with_extension("csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn plot_draws_the_embedding() {
    let fx = Fixture::new();
    let emb = fx.path("emb.csv");
    let svg = fx.path("plot.svg");
    hae(&fx.model(&["embed", "--out", s(&emb)]));
    hae(&["plot", "--emb", s(&emb), "--geodesic", "0:40", "--out", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("id=\"boundary\""));
    assert_eq!(text.matches("class=\"point\"").count(), rows(&emb).len());
    assert_eq!(text.matches("class=\"geodesic\"").count(), 1);

    let empty = fx.path("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let bare = fx.path("bare.svg");
    hae(&["plot", "--emb", s(&empty), "--out", s(&bare)]);
    let text = std::fs::read_to_string(&bare).unwrap();
    assert!(text.contains("id=\"boundary\"") && !text.contains("class=\"point\""));
}

#[test]
fn plot_refuses_higher_dimensional_codes() {
    let dir = TempDir::new().unwrap();
    let emb = dir.path().join("emb.csv");
    std::fs::write(&emb, "id,class,z0,z1,z2\n0,1,0.1,0.2,0.3\n").unwrap();
    let err = hae_err(&["plot", "--emb", s(&emb), "--out", s(&dir.path().join("p.svg"))]);
    assert!(err.to_string().contains("ball_dim = 2"), "{err}");
}

#[test]
fn check_suites_pass_on_a_correct_build() {
    let (outcome, stdout) = hae(&["check", "--suite", "identities"]);
    assert_eq!(outcome.code(), 0, "{stdout}");
    let (outcome, stdout) = hae(&["check", "--suite", "grads"]);
    assert_eq!(outcome.code(), 0, "{stdout}");
}

fn off_by_a_bit(x: &[f64], y: &[f64], c: f64) -> f64 {
    hae::check::gyro_distance(x, y, c) * 1.001
}

#[test]
fn corrupted_distance_fails_the_check() {
    let opts = IdentityOptions {
        pairs: 200,
        ..IdentityOptions::default()
    };
    let report = identity_suite(&opts, off_by_a_bit);
    let outcome = check_outcome(&report);
    assert_eq!(outcome, Outcome::Failure);
    assert_eq!(outcome.code(), 1);
    assert!(report.to_string().contains("worst offender"));
}
