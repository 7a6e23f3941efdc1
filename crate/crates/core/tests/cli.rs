use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trlrpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trlrpo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("c.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY: &str =
    "env = \"pendulum\"\n[training]\niterations = 2\nepisodes_per_iteration = 1\nhorizon = 20\n";

#[test]
fn run_writes_expected_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let o = trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("returns.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,episode,return");
    assert_eq!(lines.len(), 5);
    assert!(!csv.contains('\r'));
    assert!(lines[1].starts_with("1,0,") && lines[4].starts_with("2,1,"));

    for seed in [1, 2] {
        assert!(out.join(format!("returns_seed{seed}.csv")).exists());
        let diag = fs::read_to_string(out.join(format!("diagnostics_seed{seed}.jsonl"))).unwrap();
        assert_eq!(diag.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(diag.lines().next().unwrap()).unwrap();
        assert!(first["step"]["kl_after"].is_number());
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["param_count"], 241);
    assert_eq!(summary["median_return"].as_array().unwrap().len(), 2);
    assert_eq!(summary["parsimony_holds"], true);
    assert!(out.join("config.toml").exists());
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("run");
    let args = [
        "run",
        "--config",
        &cfg,
        "--seeds",
        "0",
        "--out",
        out.to_str().unwrap(),
    ];
    assert!(trlrpo(&args).status.success());
    let o = trlrpo(&args);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(trlrpo(&forced).status.success());
}

#[test]
fn single_thread_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = trlrpo(&[
            "run",
            "--config",
            &cfg,
            "--seeds",
            "3,4",
            "--threads",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out.join("returns.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn bad_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "env = \"pendulum\"\n\n[critic]\nlearning_rat = 0.1\n",
    );
    let o = trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("c.toml:4:"), "{err}");
    assert!(err.contains("learning_rat"), "{err}");
    assert!(!dir.path().join("o").exists());

    let cfg = write_config(dir.path(), "[trust_region]\nbacktrack_ratio = 1.5\n");
    let o = trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("c.toml:1:"));
}

#[test]
fn divergence_fails_but_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[critic]\nlearning_rate = 10.0\n[training]\niterations = 3\nepisodes_per_iteration = 2\nhorizon = 50\n",
    );
    let out = dir.path().join("run");
    let o = trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--seeds",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    assert!(out.join("returns_seed0.csv").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn aggregate_median_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--seeds",
        "0,1",
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(trlrpo(&[
        "run",
        "--config",
        &cfg,
        "--seeds",
        "2",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let out = dir.path().join("median.csv");
    let o = trlrpo(&[
        "aggregate",
        "--runs",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "episode,q25,median,q75,n_seeds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",3"));

    let long = write_config(
        dir.path(),
        &TINY.replace("iterations = 2", "iterations = 3"),
    );
    let c = dir.path().join("c");
    assert!(trlrpo(&[
        "run",
        "--config",
        &long,
        "--seeds",
        "5",
        "--out",
        c.to_str().unwrap()
    ])
    .status
    .success());
    let o = trlrpo(&[
        "aggregate",
        "--runs",
        a.to_str().unwrap(),
        c.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("seed 5 (3 episodes)"), "{err}");
}

#[test]
fn preset_prints_loadable_toml() {
    let o = trlrpo(&["preset", "mountaincar"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &String::from_utf8(o.stdout).unwrap());
    let parsed =
        trlrpo::experiment::ExperimentConfig::load(Some(Path::new(&cfg)), &Default::default())
            .unwrap();
    assert_eq!(parsed, trlrpo::experiment::preset("mountaincar").unwrap());
    assert!(!trlrpo(&["preset", "cartpole"]).status.success());
}
