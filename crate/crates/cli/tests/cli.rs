use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anc_cli::config::ConfigSource;
use anc_cli::run::{
    read_series, trace_file, CONVERGENCE_FILE, MANIFEST_FILE, METRICS_FILE, NOISE_REDUCTION_FILE,
    SIGNALS_FILE, TRACE_HEADER,
};
use anc_cli::{compare_command, identify_command, plot_command, run_command, CliError, RunOptions};
use anc_core::paths::FirFilter;

const CONTROLLERS: [&str; 4] = [
    "lms-direct",
    "fxlms",
    "fxlms-fixed-threshold",
    "fxlms-variable",
];

fn run_bundled(out: &Path, overrides: &[&str]) -> anc_cli::Result<anc_cli::RunOutcome> {
    let source = ConfigSource::bundled("tonal-500hz").unwrap();
    let opts = RunOptions {
        overrides: overrides.iter().map(|s| s.to_string()).collect(),
        out: Some(out.to_path_buf()),
        ..Default::default()
    };
    run_command(&source, &opts)
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn svg_attr(svg: &str, name: &str) -> f64 {
    let key = format!("{name}=\"");
    let start = svg.find(&key).unwrap() + key.len();
    let end = start + svg[start..].find('"').unwrap();
    svg[start..end].parse().unwrap()
}

#[test]
fn bundled_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let outcome = run_bundled(&out, &[]).unwrap();
    assert!(outcome.diverged().is_empty());

    for name in CONTROLLERS {
        let path = out.join(trace_file(name));
        assert_eq!(header(&path), TRACE_HEADER.join(","));
        assert_eq!(rows(&path), 30_000);
    }
    assert_eq!(header(&out.join(SIGNALS_FILE)), "iteration,x,d");
    assert_eq!(rows(&out.join(SIGNALS_FILE)), 30_000);
    let series = format!("iteration,{}", CONTROLLERS.join(","));
    assert_eq!(header(&out.join(NOISE_REDUCTION_FILE)), series);
    assert_eq!(rows(&out.join(NOISE_REDUCTION_FILE)), 30);
    assert_eq!(header(&out.join(CONVERGENCE_FILE)), series);
    assert_eq!(rows(&out.join(CONVERGENCE_FILE)), 30_000);
    assert_eq!(
        header(&out.join(METRICS_FILE)),
        "controller,algorithm,status,final_r_db,whole_r_db,target_db,iterations_to_target,diverged_at"
    );
    assert_eq!(rows(&out.join(METRICS_FILE)), 4);

    let m = anc_cli::Manifest::load(&out).unwrap();
    assert_eq!(m.name, "tonal-500hz");
    assert_eq!(m.scenario_hash.len(), 64);
    assert_eq!(m.controllers.len(), 4);
    for f in &m.files {
        assert!(out.join(f).is_file(), "{f} listed but missing");
    }
    let classic = outcome.controller("fxlms").unwrap();
    assert!(classic.final_r_db.unwrap() >= 10.0);
    assert_eq!(m.target_db, Some(classic.final_r_db.unwrap() - 3.0));
    assert_eq!(m.scenario.secondary_model.mode, "identified");
    assert_eq!(m.scenario.path_noise_seed, m.scenario.seed + 1);
}

#[test]
fn invalid_config_is_rejected_with_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_bundled(
        &dir.path().join("run"),
        &["iterations=0", "controllers.1.mu=-1"],
    )
    .unwrap_err();
    let CliError::Config(problems) = &err else {
        panic!("expected a config error, got {err}");
    };
    assert!(
        problems.iter().any(|p| p.contains("iterations")),
        "{problems:?}"
    );
    assert!(
        problems.iter().any(|p| p.contains("controllers[1]")),
        "{problems:?}"
    );
    assert!(!dir.path().join("run").exists());
}

#[test]
fn list_overrides_reach_one_controller() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_bundled(
        &dir.path().join("run"),
        &["iterations=2000", "controllers.3.mu=0.004"],
    )
    .unwrap();
    let m = &outcome.manifest;
    assert_eq!(m.controllers[3].params.mu_base, 0.004);
    assert_eq!(m.controllers[2].params.mu_base, 0.005);
}

#[test]
fn seed_flag_changes_the_scenario_hash() {
    let dir = tempfile::tempdir().unwrap();
    let source = ConfigSource::bundled("tonal-500hz").unwrap();
    let run = |seed, name: &str| {
        let opts = RunOptions {
            overrides: vec!["iterations=2000".into()],
            seed,
            out: Some(dir.path().join(name)),
            serial: true,
        };
        run_command(&source, &opts).unwrap().manifest
    };
    let a = run(None, "a");
    let b = run(Some(10), "b");
    let c = run(Some(11), "c");
    assert_eq!(a.scenario_hash, b.scenario_hash);
    assert_ne!(a.scenario_hash, c.scenario_hash);
    assert_eq!(c.scenario.seed, 11);
}

#[test]
fn serial_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let source = ConfigSource::bundled("tonal-500hz").unwrap();
    let mut outs = Vec::new();
    for serial in [false, true] {
        let out = dir.path().join(format!("serial-{serial}"));
        let opts = RunOptions {
            overrides: vec!["iterations=3000".into()],
            out: Some(out.clone()),
            serial,
            ..Default::default()
        };
        run_command(&source, &opts).unwrap();
        outs.push(out);
    }
    for f in [METRICS_FILE, NOISE_REDUCTION_FILE, CONVERGENCE_FILE] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap()
        );
    }
}

#[test]
fn compare_ranks_variable_first_and_self_deltas_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_bundled(&out, &[]).unwrap();
    let cmp = compare_command(&[out.clone(), out.clone()], None).unwrap();
    assert_eq!(cmp.rows.len(), 8);
    assert_eq!(cmp.rows[0].controller, "fxlms-variable");
    assert_eq!(cmp.rows[1].controller, "fxlms-variable");
    let fixed = cmp
        .rows
        .iter()
        .position(|r| r.controller == "fxlms-fixed-threshold");
    assert!(fixed.unwrap() >= 2);
    for r in &cmp.rows {
        assert_eq!(r.delta_final_r_db, Some(0.0), "{r:?}");
        assert_eq!(r.delta_iterations, Some(0), "{r:?}");
    }
    let table = cmp.table();
    assert!(table.contains("fxlms-variable"));

    let report = dir.path().join("report");
    cmp.write(&report).unwrap();
    let (names, x, _) = read_series(&report.join("overlay_noise_reduction.csv")).unwrap();
    assert_eq!(names.len(), 8);
    assert_eq!(x.len(), 30);
    assert_eq!(rows(&report.join("comparison.csv")), 8);
}

#[test]
fn compare_refuses_different_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_bundled(&a, &["iterations=2000"]).unwrap();
    run_bundled(&b, &["iterations=2000", "plant.path_noise_variance=0.004"]).unwrap();
    let err = compare_command(&[a, b], None).unwrap_err();
    assert!(matches!(err, CliError::Incompatible(_)));
    assert!(err.to_string().contains("scenario hash"), "{err}");
}

#[test]
fn missing_manifest_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    run_bundled(&a, &["iterations=2000"]).unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let err = compare_command(&[a, empty.clone()], None).unwrap_err();
    assert!(matches!(err, CliError::MissingManifest(_)));
    assert!(
        err.to_string()
            .contains(&empty.join(MANIFEST_FILE).display().to_string()),
        "{err}"
    );
}

#[test]
fn plots_render_one_line_per_controller_with_padded_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_bundled(&out, &["iterations=4000"]).unwrap();

    let path = plot_command(&out, "convergence", None).unwrap();
    assert_eq!(path, out.join("convergence.svg"));
    let svg = fs::read_to_string(&path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline class=\"series\"").count(), 4);
    for name in CONTROLLERS {
        assert!(svg.contains(&format!("data-series=\"{name}\"")));
    }
    let (_, x, cols) = read_series(&out.join(CONVERGENCE_FILE)).unwrap();
    let all = cols.iter().flatten().copied();
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    assert!((svg_attr(&svg, "data-y-min") - (lo - 5.0)).abs() < 1e-9);
    assert!((svg_attr(&svg, "data-y-max") - (hi + 5.0)).abs() < 1e-9);
    assert_eq!(svg_attr(&svg, "data-x-min"), x[0]);
    assert_eq!(svg_attr(&svg, "data-x-max"), *x.last().unwrap());
    // 4000 samples are decimated to at most 2000 points per line
    for line in svg.lines().filter(|l| l.starts_with("<polyline")) {
        let points = line.split("points=\"").nth(1).unwrap();
        assert!(points.split(' ').count() <= 2000);
    }

    for which in ["noise-reduction", "residual", "signal"] {
        let p = plot_command(&out, which, Some(dir.path().join(format!("{which}.svg")))).unwrap();
        let svg = fs::read_to_string(p).unwrap();
        let expected = if which == "signal" { 2 } else { 4 };
        assert_eq!(svg.matches("<polyline").count(), expected, "{which}");
    }
}

#[test]
fn plot_errors_explain_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_bundled(&out, &["iterations=2000"]).unwrap();
    let err = plot_command(&out, "spectrum", None)
        .unwrap_err()
        .to_string();
    assert!(err.contains("spectrum"), "{err}");
    for name in ["noise-reduction", "convergence", "residual", "signal"] {
        assert!(err.contains(name), "{err}");
    }
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let err = plot_command(&empty, "convergence", None)
        .unwrap_err()
        .to_string();
    assert!(err.contains("no run data"), "{err}");
}

#[test]
fn identify_writes_a_reloadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let coeffs = dir.path().join("three.txt");
    fs::write(&coeffs, "# a short path\n0.5\n-0.3\n0.1\n").unwrap();
    let out = dir.path().join("model.txt");
    let id = identify_command(coeffs.to_str().unwrap(), None, 20_000, 0.01, 3, &out).unwrap();
    assert_eq!(id.model.len(), 3);
    let model = FirFilter::from_coefficient_file(&out).unwrap();
    for (a, b) in model.taps().iter().zip([0.5, -0.3, 0.1]) {
        assert!((a - b).abs() < 1e-2);
    }
}

fn ancsim(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ancsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cwd: PathBuf = dir.path().to_path_buf();

    let ok = ancsim(
        &[
            "run",
            "builtin:tonal-500hz",
            "--set",
            "iterations=2000",
            "--out",
            "ok",
        ],
        &cwd,
    );
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("fxlms-variable"));

    let bad = ancsim(
        &["run", "builtin:tonal-500hz", "--set", "iterations=0"],
        &cwd,
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("iterations"));

    let diverged = ancsim(
        &[
            "run",
            "builtin:tonal-500hz",
            "--set",
            "iterations=2000",
            "--set",
            "controllers.1.mu=20",
            "--set",
            "controllers.1.mu_max=20",
            "--out",
            "div",
        ],
        &cwd,
    );
    assert_eq!(diverged.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&diverged.stderr);
    assert!(stderr.contains("fxlms diverged at iteration"), "{stderr}");
    let m = anc_cli::Manifest::load(&cwd.join("div")).unwrap();
    let c = &m.controllers[1];
    let at = c.diverged_at.unwrap();
    assert_eq!(rows(&cwd.join("div").join(trace_file("fxlms"))), at);
    assert!(m.controllers[3].diverged_at.is_none());

    let listed = ancsim(&["scenario"], &cwd);
    assert_eq!(
        String::from_utf8_lossy(&listed.stdout).trim(),
        "tonal-500hz"
    );
}
