//! `plot`: render stored series of a run directory as an SVG line chart.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_err, CliError, Result};
use crate::run::{
    read_series, trace_file, Manifest, CONVERGENCE_FILE, NOISE_REDUCTION_FILE, SIGNALS_FILE,
};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Points kept per polyline after min/max decimation.
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    NoiseReduction,
    Convergence,
    Residual,
    Signal,
}

impl Figure {
    pub const ALL: [Figure; 4] = [
        Figure::NoiseReduction,
        Figure::Convergence,
        Figure::Residual,
        Figure::Signal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::NoiseReduction => "noise-reduction",
            Figure::Convergence => "convergence",
            Figure::Residual => "residual",
            Figure::Signal => "signal",
        }
    }

    fn is_db(self) -> bool {
        matches!(self, Figure::NoiseReduction | Figure::Convergence)
    }

    fn title(self) -> &'static str {
        match self {
            Figure::NoiseReduction => "Noise reduction",
            Figure::Convergence => "Convergence (trailing RMS of e)",
            Figure::Residual => "Residual error e(n)",
            Figure::Signal => "Reference x(n) and primary noise d(n)",
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            Figure::NoiseReduction | Figure::Convergence => "dB",
            _ => "amplitude",
        }
    }
}

struct Series {
    name: String,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn controller_names(dir: &Path) -> Result<Vec<String>> {
    match Manifest::load(dir) {
        Ok(m) => Ok(m.controllers.into_iter().map(|c| c.name).collect()),
        Err(CliError::MissingManifest(_)) => {
            let mut names = Vec::new();
            let entries = fs::read_dir(dir).map_err(io_err(dir))?;
            for entry in entries.flatten() {
                let f = entry.file_name().to_string_lossy().into_owned();
                if let Some(n) = f
                    .strip_prefix("trace_")
                    .and_then(|s| s.strip_suffix(".csv"))
                {
                    names.push(n.to_string());
                }
            }
            names.sort();
            Ok(names)
        }
        Err(e) => Err(e),
    }
}

/// Figures whose data exist in `dir`.
pub fn available(dir: &Path) -> Result<Vec<Figure>> {
    if !dir.is_dir() {
        return Err(CliError::Plot(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for f in Figure::ALL {
        let present = match f {
            Figure::NoiseReduction => dir.join(NOISE_REDUCTION_FILE).is_file(),
            Figure::Convergence => dir.join(CONVERGENCE_FILE).is_file(),
            Figure::Residual => !controller_names(dir)?.is_empty(),
            Figure::Signal => dir.join(SIGNALS_FILE).is_file(),
        };
        if present {
            out.push(f);
        }
    }
    Ok(out)
}

fn names_of(figs: &[Figure]) -> String {
    figs.iter()
        .map(|f| f.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn load(dir: &Path, fig: Figure) -> Result<Vec<Series>> {
    let columns = |file: &str| -> Result<Vec<Series>> {
        let (names, x, cols) = read_series(&dir.join(file))?;
        Ok(names
            .into_iter()
            .zip(cols)
            .map(|(name, y)| Series {
                name,
                x: x.clone(),
                y,
            })
            .collect())
    };
    match fig {
        Figure::NoiseReduction => columns(NOISE_REDUCTION_FILE),
        Figure::Convergence => columns(CONVERGENCE_FILE),
        Figure::Signal => columns(SIGNALS_FILE),
        Figure::Residual => {
            let mut out = Vec::new();
            for name in controller_names(dir)? {
                let path = dir.join(trace_file(&name));
                let (cols, x, vals) = read_series(&path)?;
                let j = cols.iter().position(|c| c == "e").ok_or_else(|| {
                    CliError::Plot(format!("{} has no 'e' column", path.display()))
                })?;
                out.push(Series {
                    name,
                    x,
                    y: vals[j].clone(),
                });
            }
            Ok(out)
        }
    }
}

/// Renders `which` from `dir` and returns the written SVG path
/// (`<dir>/<which>.svg` unless `out` is given).
pub fn plot_command(dir: &Path, which: &str, out: Option<PathBuf>) -> Result<PathBuf> {
    let avail = available(dir)?;
    if avail.is_empty() {
        return Err(CliError::Plot(format!(
            "{} contains no run data (expected the output of `run`)",
            dir.display()
        )));
    }
    let fig = Figure::ALL
        .into_iter()
        .find(|f| f.as_str() == which)
        .ok_or_else(|| {
            CliError::Plot(format!(
                "unknown series '{which}'; available: {}",
                names_of(&avail)
            ))
        })?;
    if !avail.contains(&fig) {
        return Err(CliError::Plot(format!(
            "{} has no data for '{which}'; available: {}",
            dir.display(),
            names_of(&avail)
        )));
    }
    let mut series = load(dir, fig)?;
    // diverged controllers can leave an all-empty column
    series.retain(|s| s.y.iter().any(|v| v.is_finite()));
    let svg = render(fig, &series)?;
    let path = out.unwrap_or_else(|| dir.join(format!("{which}.svg")));
    fs::write(&path, svg).map_err(io_err(&path))?;
    Ok(path)
}

/// Keeps the min and max of each bucket, in order, so oscillating traces
/// keep their envelope.
fn decimate(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, v)| v.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pts.len() <= MAX_POINTS {
        return pts;
    }
    let buckets = MAX_POINTS / 2;
    let size = pts.len().div_ceil(buckets);
    let mut out = Vec::with_capacity(MAX_POINTS + 2);
    for chunk in pts.chunks(size) {
        let (mut lo, mut hi) = (0, 0);
        for (k, p) in chunk.iter().enumerate() {
            if p.1 < chunk[lo].1 {
                lo = k;
            }
            if p.1 > chunk[hi].1 {
                hi = k;
            }
        }
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        out.push(chunk[a]);
        if b != a {
            out.push(chunk[b]);
        }
    }
    out
}

fn render(fig: Figure, series: &[Series]) -> Result<String> {
    let finite = |v: &&f64| v.is_finite();
    let ys = series.iter().flat_map(|s| s.y.iter().filter(finite));
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    if !ymin.is_finite() {
        return Err(CliError::Plot(format!(
            "no finite {} data to plot",
            fig.as_str()
        )));
    }
    let xs = series.iter().flat_map(|s| s.x.iter().filter(finite));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let pad = if fig.is_db() {
        5.0
    } else {
        ((ymax - ymin) * 0.05).max(1e-12)
    };
    let (y0, y1) = (ymin - pad, ymax + pad);
    let (x0, x1) = if xmax > xmin {
        (xmin, xmax)
    } else {
        (xmin - 0.5, xmin + 0.5)
    };

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-figure="{}" data-x-min="{x0}" data-x-max="{x1}" data-y-min="{y0}" data-y-max="{y1}">"#,
        fig.as_str()
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        fig.title()
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let yv = y0 + t * (y1 - y0);
        let xv = x0 + t * (x1 - x0);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{py:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv),
            py = sy(yv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 16.0,
            tick(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        fig.y_label()
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = decimate(&ser.x, &ser.y)
            .into_iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-series="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            ser.name,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}
