//! Run metrics: windowed noise reduction, error-envelope convergence curves
//! and the first iteration at which a curve settles past a target.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Saturation cap for every dB quantity, so CSV output stays finite.
pub const DB_CAP: f64 = 120.0;
pub const DEFAULT_WINDOW: usize = 1000;
pub const DEFAULT_SMOOTHING: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Defined,
    /// The true value is infinite; the stored value is the ±120 dB cap.
    Saturated,
    /// The ratio is not defined (e.g. no primary noise in the window).
    Undefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub status: Vec<PointStatus>,
    /// Samples per point for windowed series; smoothing length for curves.
    pub window: usize,
    /// Iterations between consecutive points.
    pub stride: usize,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterations elapsed once point `index` is complete.
    pub fn iterations_at(&self, index: usize) -> usize {
        if self.stride == 1 {
            index + 1
        } else {
            (index + 1) * self.stride
        }
    }

    pub fn is_defined(&self, index: usize) -> bool {
        self.status[index] != PointStatus::Undefined
    }

    pub fn last_defined(&self) -> Option<f64> {
        (0..self.len())
            .rev()
            .find(|&i| self.is_defined(i))
            .map(|i| self.values[i])
    }
}

fn ratio_db(num: f64, den: f64) -> (f64, PointStatus) {
    if den == 0.0 {
        return (f64::NAN, PointStatus::Undefined);
    }
    if num == 0.0 {
        return (DB_CAP, PointStatus::Saturated);
    }
    // adding 0.0 turns the -0 of equal energies into +0
    let r = -10.0 * (num / den).log10() + 0.0;
    if r > DB_CAP {
        (DB_CAP, PointStatus::Saturated)
    } else if r < -DB_CAP {
        (-DB_CAP, PointStatus::Saturated)
    } else {
        (r, PointStatus::Defined)
    }
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Noise reduction over a span: `-10 log10(Σe² / Σd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduction {
    pub db: f64,
    pub status: PointStatus,
}

pub fn reduction_db(e: &[f64], d: &[f64]) -> Reduction {
    let (db, status) = ratio_db(energy(e), energy(d));
    Reduction { db, status }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReduction {
    /// One point per non-overlapping window.
    pub series: MetricSeries,
    pub whole_run: Reduction,
}

/// Per-window and whole-run noise reduction. A trailing partial window is
/// ignored by the series but included in the whole-run figure.
pub fn noise_reduction_db(e: &[f64], d: &[f64], window: usize) -> Result<NoiseReduction> {
    if e.len() != d.len() {
        return Err(validation(format!(
            "error has {} samples but disturbance has {}",
            e.len(),
            d.len()
        )));
    }
    if window == 0 || window > e.len() {
        return Err(validation(format!(
            "window {window} must be in 1..={}",
            e.len()
        )));
    }
    let (values, status) = e
        .chunks_exact(window)
        .zip(d.chunks_exact(window))
        .map(|(ec, dc)| ratio_db(energy(ec), energy(dc)))
        .unzip();
    Ok(NoiseReduction {
        series: MetricSeries {
            name: "noise_reduction_db".to_string(),
            values,
            status,
            window,
            stride: window,
        },
        whole_run: reduction_db(e, d),
    })
}

/// Noise reduction over the last `window` samples.
pub fn final_noise_reduction_db(e: &[f64], d: &[f64], window: usize) -> Result<Reduction> {
    if e.len() != d.len() || window == 0 || window > e.len() {
        return Err(validation(format!(
            "final window {window} does not fit {} / {} samples",
            e.len(),
            d.len()
        )));
    }
    let start = e.len() - window;
    Ok(reduction_db(&e[start..], &d[start..]))
}

/// `20 log10(g(n))` with `g(n)` the RMS of `e` over the trailing
/// `smoothing` samples (fewer at the start). Silent windows floor at -120 dB.
pub fn convergence_curve(e: &[f64], smoothing: usize) -> Result<MetricSeries> {
    if smoothing == 0 {
        return Err(validation("smoothing must be at least 1"));
    }
    let mut values = Vec::with_capacity(e.len());
    let mut status = Vec::with_capacity(e.len());
    for n in 0..e.len() {
        let start = (n + 1).saturating_sub(smoothing);
        let span = &e[start..=n];
        let rms = (energy(span) / span.len() as f64).sqrt();
        let db = 20.0 * rms.log10();
        if rms == 0.0 || db < -DB_CAP {
            values.push(-DB_CAP);
            status.push(PointStatus::Saturated);
        } else {
            values.push(db.min(DB_CAP));
            status.push(PointStatus::Defined);
        }
    }
    Ok(MetricSeries {
        name: "convergence_db".to_string(),
        values,
        status,
        window: smoothing,
        stride: 1,
    })
}

/// First index from which every point is defined and at least `target`.
pub fn iterations_to_threshold(series: &MetricSeries, target: f64) -> Option<usize> {
    settle_index(series, |v| v >= target)
}

/// First index from which every point is defined and at most `target`.
pub fn iterations_below(series: &MetricSeries, target: f64) -> Option<usize> {
    settle_index(series, |v| v <= target)
}

fn settle_index(series: &MetricSeries, crossed: impl Fn(f64) -> bool) -> Option<usize> {
    let mut first = None;
    for i in (0..series.len()).rev() {
        if series.is_defined(i) && crossed(series.values[i]) {
            first = Some(i);
        } else {
            break;
        }
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> MetricSeries {
        let status = vec![PointStatus::Defined; values.len()];
        MetricSeries {
            name: "t".into(),
            values,
            status,
            window: 1,
            stride: 1,
        }
    }

    #[test]
    fn identical_error_is_zero_db() {
        let d: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin() + 0.1).collect();
        let r = noise_reduction_db(&d, &d, 10).unwrap();
        assert_eq!(r.whole_run.db, 0.0);
        assert!(r.series.values.iter().all(|&v| v == 0.0));
        assert_eq!(r.series.len(), 10);
    }

    #[test]
    fn tenth_error_is_twenty_db() {
        let d: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).cos()).collect();
        let e: Vec<f64> = d.iter().map(|v| v / 10.0).collect();
        let r = noise_reduction_db(&e, &d, 25).unwrap();
        assert!((r.whole_run.db - 20.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_cancellation_saturates() {
        let d = vec![1.0; 8];
        let r = noise_reduction_db(&[0.0; 8], &d, 4).unwrap();
        assert_eq!(r.whole_run.db, DB_CAP);
        assert_eq!(r.whole_run.status, PointStatus::Saturated);
    }

    #[test]
    fn silent_window_is_undefined() {
        let d = [0.0, 0.0, 1.0, 1.0];
        let r = noise_reduction_db(&[0.5, 0.5, 0.1, 0.1], &d, 2).unwrap();
        assert_eq!(r.series.status[0], PointStatus::Undefined);
        assert!(r.series.values[0].is_nan());
        assert_eq!(r.series.status[1], PointStatus::Defined);
    }

    #[test]
    fn window_validation() {
        assert!(noise_reduction_db(&[1.0; 4], &[1.0; 3], 2).is_err());
        assert!(noise_reduction_db(&[1.0; 4], &[1.0; 4], 0).is_err());
        assert!(noise_reduction_db(&[1.0; 4], &[1.0; 4], 5).is_err());
    }

    #[test]
    fn constant_error_curves() {
        let c = convergence_curve(&[1.0; 50], 8).unwrap();
        assert!(c.values.iter().all(|&v| v.abs() < 1e-12));
        let c = convergence_curve(&[0.1; 50], 8).unwrap();
        assert!(c.values.iter().all(|&v| (v + 20.0).abs() < 1e-12));
        let z = convergence_curve(&[0.0; 5], 2).unwrap();
        assert!(z.values.iter().all(|&v| v == -DB_CAP));
        assert!(convergence_curve(&[1.0], 0).is_err());
    }

    #[test]
    fn exponential_decay_has_linear_slope() {
        let rho: f64 = 0.995;
        let e: Vec<f64> = (0..2000).map(|n| rho.powi(n)).collect();
        let smoothing = 50;
        let c = convergence_curve(&e, smoothing).unwrap();
        // least-squares line over the fully-windowed part
        let pts: Vec<(f64, f64)> = (smoothing..e.len())
            .map(|n| (n as f64, c.values[n]))
            .collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 20.0 * rho.log10()).abs() < 1e-9, "{slope}");
    }

    #[test]
    fn threshold_index_examples() {
        let s = series(vec![0.0, 5.0, 12.0, 13.0, 14.0]);
        assert_eq!(iterations_to_threshold(&s, 12.0), Some(2));
        assert_eq!(iterations_to_threshold(&s, 20.0), None);
        // a dip resets the crossing
        let s = series(vec![13.0, 5.0, 12.0, 13.0]);
        assert_eq!(iterations_to_threshold(&s, 12.0), Some(2));
        let s = series(vec![3.0, 2.0, 1.0]);
        assert_eq!(iterations_below(&s, 2.0), Some(1));
    }

    #[test]
    fn iterations_at_accounts_for_stride() {
        let mut s = series(vec![0.0; 4]);
        assert_eq!(s.iterations_at(0), 1);
        s.stride = 100;
        assert_eq!(s.iterations_at(2), 300);
    }
}
