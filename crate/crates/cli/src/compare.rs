//! `compare`: line up controllers from runs of the same scenario.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anc_core::metrics::{iterations_to_threshold, MetricSeries, PointStatus};

use crate::error::{io_err, CliError, Result};
use crate::run::{csv_err, num, read_series, Manifest, NOISE_REDUCTION_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    /// Index into `Comparison::runs`.
    pub run: usize,
    pub controller: String,
    pub final_r_db: Option<f64>,
    pub iterations_to_target: Option<usize>,
    /// Against the same controller in the first run.
    pub delta_final_r_db: Option<f64>,
    pub delta_iterations: Option<i64>,
    /// 1 = fastest to the target; ties broken by final R.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<PathBuf>,
    pub scenario_hash: String,
    pub target_db: f64,
    /// Sorted by rank.
    pub rows: Vec<CompareRow>,
    /// Noise-reduction series per (run, controller), aligned on `iterations`.
    pub overlay: Vec<(String, Vec<f64>)>,
    pub iterations: Vec<f64>,
}

struct LoadedRun {
    manifest: Manifest,
    names: Vec<String>,
    x: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

fn load(dir: &Path) -> Result<LoadedRun> {
    let manifest = Manifest::load(dir)?;
    let (names, x, cols) = read_series(&dir.join(NOISE_REDUCTION_FILE))?;
    Ok(LoadedRun {
        manifest,
        names,
        x,
        cols,
    })
}

/// Compares runs at a common target: `target_db`, or the first run's own.
pub fn compare_command(dirs: &[PathBuf], target_db: Option<f64>) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(CliError::Incompatible(
            "compare needs at least two run directories".to_string(),
        ));
    }
    let runs = dirs.iter().map(|d| load(d)).collect::<Result<Vec<_>>>()?;
    let first = &runs[0].manifest;
    for (dir, r) in dirs.iter().zip(&runs).skip(1) {
        if r.manifest.scenario_hash != first.scenario_hash {
            return Err(CliError::Incompatible(format!(
                "{} has scenario hash {} but {} has {}; they simulate different plants, sources or seeds",
                dir.display(),
                r.manifest.scenario_hash,
                dirs[0].display(),
                first.scenario_hash
            )));
        }
        if r.manifest.metrics.window != first.metrics.window {
            return Err(CliError::Incompatible(format!(
                "{} uses a {}-sample metrics window, {} uses {}",
                dir.display(),
                r.manifest.metrics.window,
                dirs[0].display(),
                first.metrics.window
            )));
        }
    }
    let target = target_db.or(first.target_db).ok_or_else(|| {
        CliError::Incompatible(format!(
            "{} has no convergence target; pass one explicitly",
            dirs[0].display()
        ))
    })?;
    let window = first.metrics.window;

    let mut rows = Vec::new();
    let mut overlay = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        for c in &run.manifest.controllers {
            let iterations = match run.names.iter().position(|n| *n == c.name) {
                Some(j) if c.diverged_at.is_none() => {
                    let values = run.cols[j].clone();
                    let status = values
                        .iter()
                        .map(|v| {
                            if v.is_nan() {
                                PointStatus::Undefined
                            } else {
                                PointStatus::Defined
                            }
                        })
                        .collect();
                    let s = MetricSeries {
                        name: c.name.clone(),
                        values,
                        status,
                        window,
                        stride: window,
                    };
                    overlay.push((format!("{}:{}", i, c.name), s.values.clone()));
                    iterations_to_threshold(&s, target).map(|k| s.iterations_at(k))
                }
                _ => None,
            };
            rows.push(CompareRow {
                run: i,
                controller: c.name.clone(),
                final_r_db: c.final_r_db,
                iterations_to_target: iterations,
                delta_final_r_db: None,
                delta_iterations: None,
                rank: 0,
            });
        }
    }
    let baseline: Vec<CompareRow> = rows.iter().filter(|r| r.run == 0).cloned().collect();
    for row in &mut rows {
        if let Some(b) = baseline.iter().find(|b| b.controller == row.controller) {
            row.delta_final_r_db = row.final_r_db.zip(b.final_r_db).map(|(a, b)| a - b);
            row.delta_iterations = row
                .iterations_to_target
                .zip(b.iterations_to_target)
                .map(|(a, b)| a as i64 - b as i64);
        }
    }
    rows.sort_by(|a, b| {
        let ia = a.iterations_to_target.unwrap_or(usize::MAX);
        let ib = b.iterations_to_target.unwrap_or(usize::MAX);
        ia.cmp(&ib)
            .then_with(|| {
                let fa = a.final_r_db.unwrap_or(f64::NEG_INFINITY);
                let fb = b.final_r_db.unwrap_or(f64::NEG_INFINITY);
                fb.total_cmp(&fa)
            })
            .then_with(|| a.run.cmp(&b.run))
            .then_with(|| a.controller.cmp(&b.controller))
    });
    for (k, r) in rows.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    Ok(Comparison {
        runs: dirs.to_vec(),
        scenario_hash: first.scenario_hash.clone(),
        target_db: target,
        rows,
        overlay,
        iterations: runs[0].x.clone(),
    })
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}", &self.scenario_hash[..12]);
        let _ = writeln!(s, "target   {:.2} dB", self.target_db);
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(s, "run {i}    {}", r.display());
        }
        let _ = writeln!(
            s,
            "\n{:>4}  {:>3}  {:<24} {:>10} {:>10} {:>12} {:>10}",
            "rank", "run", "controller", "final R", "dR", "iterations", "d iter"
        );
        let f = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let n = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let i = |v: Option<i64>| v.map(|v| format!("{v:+}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>4}  {:>3}  {:<24} {:>10} {:>10} {:>12} {:>10}",
                r.rank,
                r.run,
                r.controller,
                f(r.final_r_db),
                f(r.delta_final_r_db),
                n(r.iterations_to_target),
                i(r.delta_iterations)
            );
        }
        s
    }

    /// Writes `comparison.csv` and `overlay_noise_reduction.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("comparison.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record([
            "rank",
            "run",
            "run_dir",
            "controller",
            "final_r_db",
            "delta_final_r_db",
            "iterations_to_target",
            "delta_iterations",
        ])
        .map_err(csv_err(&path))?;
        for r in &self.rows {
            w.write_record([
                r.rank.to_string(),
                r.run.to_string(),
                self.runs[r.run].display().to_string(),
                r.controller.clone(),
                r.final_r_db.map(num).unwrap_or_default(),
                r.delta_final_r_db.map(num).unwrap_or_default(),
                r.iterations_to_target
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                r.delta_iterations
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ])
            .map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join("overlay_noise_reduction.csv");
        let mut out = String::from("iteration");
        for (name, _) in &self.overlay {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (k, x) in self.iterations.iter().enumerate() {
            out.push_str(&num(*x));
            for (_, col) in &self.overlay {
                out.push(',');
                out.push_str(&col.get(k).copied().map(num).unwrap_or_default());
            }
            out.push('\n');
        }
        fs::write(&path, out).map_err(io_err(&path))
    }
}
