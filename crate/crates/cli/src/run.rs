//! `run`: simulate every configured controller on one realization and write
//! traces, metrics and a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anc_core::anc::{ControllerKind, ControllerParams, RunTrace, Simulation, SimulationError};
use anc_core::metrics::{
    convergence_curve, final_noise_reduction_db, iterations_to_threshold, noise_reduction_db,
    MetricSeries, PointStatus, DB_CAP,
};
use anc_core::paths::FirFilter;
use anc_core::signals::SourceSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigSource, MetricsConfig, ResolvedScenario};
use crate::error::{io_err, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const NOISE_REDUCTION_FILE: &str = "noise_reduction.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const TRACE_HEADER: [&str; 6] = ["iteration", "e", "y", "y_prime", "lambda_eff", "mu_eff"];

pub fn trace_file(controller: &str) -> String {
    format!("trace_{controller}.csv")
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// `key=value` assignments applied to the config document.
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    /// Replaces the config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Run controllers one after another instead of on the thread pool.
    pub serial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub label: String,
    pub taps: Vec<f64>,
}

impl From<&FirFilter> for FilterRecord {
    fn from(f: &FirFilter) -> Self {
        Self {
            label: f.label().to_string(),
            taps: f.taps().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryModelRecord {
    pub mode: String,
    pub order: Option<usize>,
    pub excitation_length: Option<usize>,
    pub step_size: Option<f64>,
    pub seed: Option<u64>,
    pub taps: Vec<f64>,
}

/// The realization-defining part of a run. Its hash decides whether two
/// runs are comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub sample_rate_hz: f64,
    pub iterations: usize,
    pub seed: u64,
    pub source: SourceSpec,
    pub primary: FilterRecord,
    pub secondary: FilterRecord,
    pub secondary_model: SecondaryModelRecord,
    pub path_noise_variance: f64,
    pub path_noise_seed: u64,
}

impl ScenarioRecord {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario record serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub name: String,
    pub kind: ControllerKind,
    pub params: ControllerParams,
    pub completed_iterations: usize,
    pub diverged_at: Option<usize>,
    pub divergence: Option<String>,
    pub final_r_db: Option<f64>,
    pub whole_r_db: Option<f64>,
    pub iterations_to_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: String,
    pub name: String,
    pub scenario_hash: String,
    pub scenario: ScenarioRecord,
    pub metrics: MetricsConfig,
    /// Saturation level of every dB figure.
    pub db_cap: f64,
    pub target_db: Option<f64>,
    pub controllers: Vec<ControllerRecord>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(CliError::MissingManifest(path));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Result of one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn diverged(&self) -> Vec<&ControllerRecord> {
        self.manifest
            .controllers
            .iter()
            .filter(|c| c.diverged_at.is_some())
            .collect()
    }

    pub fn controller(&self, name: &str) -> Option<&ControllerRecord> {
        self.manifest.controllers.iter().find(|c| c.name == name)
    }
}

/// Loads, validates and runs a configuration.
pub fn run_command(source: &ConfigSource, opts: &RunOptions) -> Result<RunOutcome> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = source.parse(&overrides)?;
    let mut resolved = config.resolve(&source.base_dir)?;
    if let Some(out) = &opts.out {
        resolved.output_dir = out.clone();
    }
    execute(&resolved, &source.label, opts.serial)
}

struct Completed {
    name: String,
    trace: RunTrace,
    divergence: Option<(usize, String)>,
}

/// Runs an already resolved scenario.
pub fn execute(
    resolved: &ResolvedScenario,
    config_label: &str,
    serial: bool,
) -> Result<RunOutcome> {
    let sim = Simulation::prepare(&resolved.scenario())?;
    let default_bound = 1e6 * sim.disturbance().max_abs().max(f64::MIN_POSITIVE);
    let mut specs = resolved.controllers.clone();
    for s in &mut specs {
        s.params.divergence_bound.get_or_insert(default_bound);
    }

    let run_one = |spec: &anc_core::anc::ControllerSpec| -> Result<Completed> {
        log::info!("running {} ({})", spec.name, spec.kind.algorithm);
        match sim.run(spec) {
            Ok(trace) => Ok(Completed {
                name: spec.name.clone(),
                trace,
                divergence: None,
            }),
            Err(SimulationError::Diverged {
                controller,
                iteration,
                detail,
                partial,
            }) => {
                log::warn!("{controller} diverged at iteration {iteration}: {detail}");
                Ok(Completed {
                    name: spec.name.clone(),
                    trace: *partial,
                    divergence: Some((iteration, detail)),
                })
            }
            Err(SimulationError::Invalid(e)) => Err(e.into()),
        }
    };
    let results: Vec<Result<Completed>> = if serial {
        specs.iter().map(run_one).collect()
    } else {
        specs.par_iter().map(run_one).collect()
    };
    let completed = results.into_iter().collect::<Result<Vec<_>>>()?;

    let m = &resolved.metrics;
    let mut records = Vec::new();
    let mut nr_series = Vec::new();
    let mut conv_series = Vec::new();
    for (c, spec) in completed.iter().zip(&specs) {
        let e = &c.trace.e;
        let d = &c.trace.d;
        let usable = c.divergence.is_none();
        let nr = if e.len() >= m.window {
            Some(noise_reduction_db(e, d, m.window)?)
        } else {
            None
        };
        let fin = if usable {
            Some(final_noise_reduction_db(e, d, m.final_window)?)
        } else {
            None
        };
        let conv = convergence_curve(e, m.smoothing)?;
        records.push(ControllerRecord {
            name: c.name.clone(),
            kind: spec.kind,
            params: spec.params,
            completed_iterations: e.len(),
            diverged_at: c.divergence.as_ref().map(|d| d.0),
            divergence: c.divergence.as_ref().map(|d| d.1.clone()),
            final_r_db: fin.map(|r| r.db),
            whole_r_db: nr.as_ref().filter(|_| usable).map(|n| n.whole_run.db),
            iterations_to_target: None,
        });
        nr_series.push(nr.map(|n| n.series));
        conv_series.push(conv);
    }

    let target_db = m.target_db.or_else(|| {
        let r = records.iter().find(|r| r.name == m.reference)?;
        Some(r.final_r_db? - m.target_offset_db)
    });
    if target_db.is_none() {
        log::warn!(
            "no convergence target: reference controller '{}' is missing or diverged",
            m.reference
        );
    }
    for (rec, series) in records.iter_mut().zip(&nr_series) {
        if let (Some(t), Some(s), None) = (target_db, series, rec.diverged_at) {
            rec.iterations_to_target = iterations_to_threshold(s, t).map(|i| s.iterations_at(i));
        }
    }

    let out = &resolved.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = Vec::new();
    for c in &completed {
        let name = trace_file(&c.name);
        write_trace(&out.join(&name), &c.trace)?;
        files.push(name);
    }
    write_signals(&out.join(SIGNALS_FILE), &sim)?;
    let names: Vec<&str> = records.iter().map(|r| r.name.as_str()).collect();
    write_series(
        &out.join(NOISE_REDUCTION_FILE),
        &names,
        &nr_series,
        m.window,
    )?;
    let conv: Vec<Option<MetricSeries>> = conv_series.into_iter().map(Some).collect();
    write_series(&out.join(CONVERGENCE_FILE), &names, &conv, 1)?;
    write_metrics(&out.join(METRICS_FILE), &records, target_db)?;
    files.extend(
        [
            SIGNALS_FILE,
            NOISE_REDUCTION_FILE,
            CONVERGENCE_FILE,
            METRICS_FILE,
        ]
        .iter()
        .map(|s| s.to_string()),
    );

    let scenario = scenario_record(resolved, sim.secondary_model());
    let manifest = Manifest {
        tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        config: config_label.to_string(),
        name: resolved.name.clone(),
        scenario_hash: scenario.hash(),
        scenario,
        metrics: m.clone(),
        db_cap: DB_CAP,
        target_db,
        controllers: records,
        files,
    };
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(RunOutcome {
        out_dir: out.clone(),
        manifest,
    })
}

fn scenario_record(r: &ResolvedScenario, model: &FirFilter) -> ScenarioRecord {
    use anc_core::anc::SecondaryModel;
    let secondary_model = match r.secondary_model {
        SecondaryModel::Perfect => SecondaryModelRecord {
            mode: "perfect".to_string(),
            order: None,
            excitation_length: None,
            step_size: None,
            seed: None,
            taps: model.taps().to_vec(),
        },
        SecondaryModel::Identified {
            order,
            excitation_length,
            step_size,
            seed,
        } => SecondaryModelRecord {
            mode: "identified".to_string(),
            order: Some(order),
            excitation_length: Some(excitation_length),
            step_size: Some(step_size),
            seed: Some(seed),
            taps: model.taps().to_vec(),
        },
    };
    ScenarioRecord {
        sample_rate_hz: r.sample_rate_hz,
        iterations: r.iterations,
        seed: r.seed,
        source: r.source.clone(),
        primary: (&r.primary).into(),
        secondary: (&r.secondary).into(),
        secondary_model,
        path_noise_variance: r.path_noise_variance,
        path_noise_seed: r.path_noise_seed,
    }
}

/// Shortest round-trip decimal; undefined values become empty cells.
pub(crate) fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn write_trace(path: &Path, t: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER).map_err(csv_err(path))?;
    for n in 0..t.len() {
        w.write_record([
            n.to_string(),
            num(t.e[n]),
            num(t.y[n]),
            num(t.y_prime[n]),
            num(t.lambda_eff[n]),
            num(t.mu_eff[n]),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_signals(path: &Path, sim: &Simulation) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iteration", "x", "d"])
        .map_err(csv_err(path))?;
    let x = sim.reference().samples();
    let d = sim.disturbance().samples();
    for n in 0..x.len() {
        w.write_record([n.to_string(), num(x[n]), num(d[n])])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One column per controller. Windowed series are indexed by the
/// iteration count at the end of each window; per-sample series by the
/// sample index. Missing points (diverged runs) are empty.
fn write_series(
    path: &Path,
    names: &[&str],
    series: &[Option<MetricSeries>],
    window: usize,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["iteration"];
    header.extend_from_slice(names);
    w.write_record(&header).map_err(csv_err(path))?;
    let rows = series
        .iter()
        .flatten()
        .map(MetricSeries::len)
        .max()
        .unwrap_or(0);
    for i in 0..rows {
        let iteration = if window == 1 { i } else { (i + 1) * window };
        let mut rec = vec![iteration.to_string()];
        for s in series {
            rec.push(match s {
                Some(s) if i < s.len() && s.status[i] != PointStatus::Undefined => num(s.values[i]),
                _ => String::new(),
            });
        }
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_metrics(path: &Path, records: &[ControllerRecord], target: Option<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "controller",
        "algorithm",
        "status",
        "final_r_db",
        "whole_r_db",
        "target_db",
        "iterations_to_target",
        "diverged_at",
    ])
    .map_err(csv_err(path))?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let opt_n = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
    for r in records {
        let status = if r.diverged_at.is_some() {
            "diverged"
        } else {
            "ok"
        };
        w.write_record([
            r.name.clone(),
            r.kind.algorithm.to_string(),
            status.to_string(),
            opt(r.final_r_db),
            opt(r.whole_r_db),
            opt(target),
            opt_n(r.iterations_to_target),
            opt_n(r.diverged_at),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Column names, the iteration column, and one value column per name.
pub type SeriesTable = (Vec<String>, Vec<f64>, Vec<Vec<f64>>);

/// Reads a series CSV back. Empty cells become NaN.
pub fn read_series(path: &Path) -> Result<SeriesTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut x = Vec::new();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let parse = |s: &str| -> Result<f64> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| CliError::Parse {
                    path: path.display().to_string(),
                    message: format!("'{s}' is not a number"),
                })
            }
        };
        x.push(parse(&rec[0])?);
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(parse(rec.get(j + 1).unwrap_or(""))?);
        }
    }
    Ok((names, x, cols))
}
