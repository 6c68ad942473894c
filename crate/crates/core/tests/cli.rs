//! Exit codes, config precedence and determinism of the `stvmlu` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stvmlu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stvmlu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const MICRO: [&str; 8] = [
    "--rows",
    "16",
    "--cols",
    "16",
    "--endmembers",
    "3",
    "--bands",
    "40",
];

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let out = stvmlu(&[
        "unmix",
        "--input",
        "/definitely/missing/cube",
        "--phi",
        "phi.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/missing/cube"), "{err}");
}

#[test]
fn unknown_flag_and_missing_required_are_usage_errors() {
    assert_eq!(stvmlu(&["synth", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(stvmlu(&["candidates"]).status.code(), Some(2));
    assert_eq!(
        stvmlu(&["unmix", "--init", "sideways", "--input", "x", "--phi", "y"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn empty_sweep_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = stvmlu(&[
        "sweep",
        "--scene",
        p(dir.path()),
        "--alphas",
        "",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn zero_signal_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("dark.csv");
    let mut text = String::from("wavelength,a,b,c\n");
    for b in 0..10 {
        text.push_str(&format!("{},0,0,0\n", 0.4 + 0.1 * b as f64));
    }
    fs::write(&lib, text).unwrap();
    let out = stvmlu(&[
        "synth",
        "--rows",
        "8",
        "--cols",
        "8",
        "--endmembers",
        "3",
        "--library",
        p(&lib),
        "--out",
        p(&dir.path().join("s")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "max_iter = 4\nalpha = 0.5\nlayers = 2\n").unwrap();
    let scene = dir.path().join("scene");
    let cand = dir.path().join("cand");
    let unmix = dir.path().join("unmix");
    let mut synth = vec!["synth", "--seed", "1", "--out", p(&scene)];
    synth.extend(MICRO);
    assert_eq!(stvmlu(&synth).status.code(), Some(0));
    assert_eq!(
        stvmlu(&[
            "candidates",
            "--input",
            p(&scene),
            "--endmembers",
            "3",
            "--runs",
            "1",
            "--out",
            p(&cand)
        ])
        .status
        .code(),
        Some(0)
    );
    let out = stvmlu(&[
        "unmix",
        "--config",
        p(&cfg),
        "--input",
        p(&scene),
        "--phi",
        p(&cand.join("phi.csv")),
        "--endmembers",
        "3",
        "--alpha",
        "0.02",
        "--out",
        p(&unmix),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(unmix.join("manifest.json")).unwrap()).unwrap();
    let settings = &manifest["settings"];
    assert_eq!(settings["alpha"], "0.02");
    assert_eq!(settings["max-iter"], "4");
    assert_eq!(settings["layers"], "2");
    assert_eq!(settings["rho"], "1.1");
    let trace = fs::read_to_string(unmix.join("trace.csv")).unwrap();
    assert!(trace.lines().count() <= 5);
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["pipeline", "--seed", "3", "--out", p(&out)];
        args.extend(MICRO);
        let o = stvmlu(&args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        fs::read(out.join("report.json")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(
        report["metrics"]["sad_per_endmember"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn pipeline_on_supplied_cube_reports_sad_without_abundances() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let mut synth = vec!["synth", "--seed", "2", "--out", p(&scene)];
    synth.extend(MICRO);
    assert_eq!(stvmlu(&synth).status.code(), Some(0));
    let out = dir.path().join("real");
    let o = stvmlu(&[
        "pipeline",
        "--input",
        p(&scene.join("cube.json")),
        "--a-ref",
        p(&scene.join("a_true.csv")),
        "--endmembers",
        "3",
        "--runs",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["sad_mean"].is_number());
    assert!(report["metrics"].get("rmse_mean").is_none());
    assert_eq!(report["input_scaling"], "none, values used as loaded");
}

#[test]
fn sweep_writes_one_sorted_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let mut synth = vec!["synth", "--seed", "6", "--out", p(&scene)];
    synth.extend(MICRO);
    assert_eq!(stvmlu(&synth).status.code(), Some(0));
    let out = dir.path().join("sweep");
    let o = stvmlu(&[
        "sweep",
        "--scene",
        p(&scene),
        "--runs",
        "1",
        "--layers",
        "2,1",
        "--alphas",
        "0.5,0.01",
        "--lambdas",
        "0.1",
        "--repeats",
        "2",
        "--max-iter",
        "20",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let keys: Vec<String> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(
        keys,
        [
            "1,0.01,0.1,0",
            "1,0.01,0.1,1",
            "1,0.5,0.1,0",
            "1,0.5,0.1,1",
            "2,0.01,0.1,0",
            "2,0.01,0.1,1",
            "2,0.5,0.1,0",
            "2,0.5,0.1,1",
        ]
    );
    assert!(out.join("sweep_timings.csv").exists());
}

#[test]
fn tvprox_reduces_total_variation() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.csv");
    fs::write(&grid, "# rows=2 cols=3\n0,1,0\n1,0,1\n").unwrap();
    let out = dir.path().join("tv");
    let o = stvmlu(&[
        "tvprox",
        "--in",
        p(&grid),
        "--weight",
        "0.2",
        "--iters",
        "200",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let info: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("tvprox.json")).unwrap()).unwrap();
    assert!(info["tv_out"].as_f64().unwrap() < info["tv_in"].as_f64().unwrap());
    assert!(info["objective"].as_f64().unwrap() <= info["objective_at_input"].as_f64().unwrap());
}
