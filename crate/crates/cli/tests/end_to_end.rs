//! The `grauert` binary: exit-status contract, report files and
//! configuration round trips.

use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use grauert_cli::config::{Expectation, ModelChoice, OutputConfig, QuadratureConfig};
use grauert_cli::{parse_config, Command, RunConfig};
use proptest::prelude::*;
use serde_json::Value;

fn grauert(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Process::new(env!("CARGO_BIN_EXE_grauert"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .expect("binary runs")
}

fn report_json(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

/// Small budgets keep every campaign to a fraction of a second.
fn quick(command: Command) -> String {
    let extra = match command {
        Command::GaugeCheck => "count = 1000\n",
        Command::CertifySpc | Command::LeviBounds => "count = 2000\n",
        Command::LpSweep => "levels = 8\n\n[quadrature]\nsamples = 65536\n",
        Command::L1Group => "",
        Command::Amenability => "",
        Command::RepUnitarity => "count = 4\n",
        Command::RepContinuity => "count = 4\n",
        Command::GramRank => "count = 4\n",
        Command::SliceFubini => "[quadrature]\nsamples = 200000\n",
    };
    format!("command = {command}\n{extra}")
}

#[test]
fn every_command_succeeds_on_its_defaults() {
    for command in Command::ALL {
        let dir = tempfile::tempdir().unwrap();
        let out = grauert(dir.path(), &quick(command), &[]);
        assert_eq!(out.status.code(), Some(0), "{command}: {}", String::from_utf8_lossy(&out.stderr));
        let json = report_json(dir.path());
        assert_eq!(json["command"], command.name());
        assert_eq!(json["passed"], true);
        assert!(json["checks"].as_array().is_some_and(|c| !c.is_empty()), "{command}");
        for table in json["tables"].as_array().unwrap() {
            let csv = fs::read_to_string(dir.path().join("out").join(table["file"].as_str().unwrap())).unwrap();
            let mut lines = csv.lines();
            let width = lines.next().unwrap().split(',').count();
            assert!(lines.all(|l| l.split(',').count() == width), "{command}: ragged {}", table["file"]);
        }
        assert!(fs::read_to_string(dir.path().join("out/report.txt")).unwrap().contains("verdict: pass"));
    }
}

#[test]
fn expected_divergence_exits_zero_and_unexpected_divergence_fails() {
    let dir = tempfile::tempdir().unwrap();
    let base = "command = lp-sweep\ntaus = 3\nlevels = 8\n[quadrature]\nsamples = 65536\n";
    let ok = grauert(dir.path(), &format!("expect = divergent\n{base}"), &[]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report_json(dir.path())["results"]["rows"][0]["study"]["verdict"], "divergent");
    let bad = grauert(dir.path(), &format!("expect = convergent\n{base}"), &[]);
    assert_eq!(bad.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("failed invariant: lp-verdict-tau-3"), "{stderr}");
}

#[test]
fn declared_bounded_expectation_fails_for_the_third_derivative() {
    let dir = tempfile::tempdir().unwrap();
    let out = grauert(dir.path(), "command = amenability\nexpect = bounded\n", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("amenability-verdict"));
}

#[test]
fn configuration_errors_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let out = grauert(dir.path(), "command = certify-spc\nmodel = heisenberg\nepsilon = 1.5\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ε < 1"));
    let out = grauert(dir.path(), "command = certify-spc\nwobble = 1\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = grauert(dir.path(), "", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn command_line_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = grauert(dir.path(), "command = certify-spc\ncount = 500\n", &["--command", "levi-bounds", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let json = report_json(dir.path());
    assert_eq!(json["command"], "levi-bounds");
    assert_eq!(json["config"]["seed"], 7);
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(Command::RepUnitarity);
    let read = |d: &Path| {
        let mut json = report_json(d);
        json.as_object_mut().unwrap().remove("wall_clock");
        (json, fs::read(d.join("out/unitarity.csv")).unwrap(), fs::read(d.join("out/report.txt")).unwrap())
    };
    grauert(dir.path(), &cfg, &[]);
    let a = read(dir.path());
    grauert(dir.path(), &cfg, &[]);
    assert_eq!(a, read(dir.path()));
    grauert(dir.path(), &cfg, &["--seed", "3"]);
    assert_ne!(a.1, read(dir.path()).1);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![0.01..0.99f64, (1u32..64).prop_map(|k| k as f64 / 64.0)]
}

fn config() -> impl Strategy<Value = RunConfig> {
    let command = prop::option::of(prop::sample::select(Command::ALL.to_vec()));
    let model = prop_oneof![
        Just(ModelChoice::Thickened),
        Just(ModelChoice::Heisenberg),
        (1usize..5).prop_map(ModelChoice::Abelian),
    ];
    let expect = prop::option::of(prop::sample::select(vec![
        Expectation::Convergent,
        Expectation::Divergent,
        Expectation::Blowup,
        Expectation::Bounded,
    ]));
    let quadrature = (1e-14..1e-2f64, 1e-12..1e-1f64, 1usize..1 << 20, prop::option::of(2usize..1 << 24)).prop_map(
        |(abs_tol, rel_tol, max_subdivisions, samples)| QuadratureConfig { abs_tol, rel_tol, max_subdivisions, samples },
    );
    (
        (command, model, finite(), finite(), 0.0..3.0f64, prop::option::of(prop::collection::vec(0.0..4.0f64, 1..6))),
        (1.0..4.0f64, 0u32..5, prop::option::of(2usize..30), prop::option::of(1usize..50), expect, any::<u64>()),
        quadrature,
        "[a-z][a-z0-9_/]{0,12}",
    )
        .prop_map(|((command, model, epsilon, delta, tau, taus), (p, k, levels, count, expect, seed), quadrature, dir)| {
            RunConfig {
                command,
                model,
                epsilon,
                delta,
                tau,
                taus,
                p,
                k,
                levels,
                count,
                expect,
                seed,
                quadrature,
                output: OutputConfig { dir: dir.into() },
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn emitted_configs_parse_back(cfg in config()) {
        prop_assert_eq!(parse_config(&cfg.emit()).unwrap(), cfg);
    }
}
