//! Acoustic plant: FIR models of the primary and secondary paths, the delay
//! lines that feed them, and offline identification of the secondary path.

use std::fmt;
use std::path::Path;

use crate::error::{validation, AncError, Result};
use crate::signals::{white_noise, SignalBuffer};

/// Fixed finite impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    label: String,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if taps.is_empty() {
            return Err(validation("filter needs at least one tap"));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(validation(format!("filter tap {i} is not finite")));
        }
        Ok(Self {
            taps,
            label: label.into(),
        })
    }

    /// Unit impulse delayed by `delay` samples.
    pub fn delay(delay: usize) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = 1.0;
        Self {
            taps,
            label: format!("delay-{delay}"),
        }
    }

    pub fn identity() -> Self {
        Self {
            taps: vec![1.0],
            label: "identity".to_string(),
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Index of the first nonzero tap (the pure delay of the path).
    pub fn leading_delay(&self) -> Option<usize> {
        self.taps.iter().position(|&t| t != 0.0)
    }

    /// A delay line sized for this filter.
    pub fn delay_line(&self) -> DelayLine {
        DelayLine::new(self.taps.len())
    }

    /// Pushes `x` into `line` and returns the inner product of the taps with
    /// the updated window.
    pub fn filter_sample(&self, line: &mut DelayLine, x: f64) -> Result<f64> {
        if line.capacity() != self.taps.len() {
            return Err(AncError::ContractViolation(format!(
                "delay line holds {} samples but filter '{}' has {} taps",
                line.capacity(),
                self.label,
                self.taps.len()
            )));
        }
        line.push(x);
        Ok(dot(&self.taps, line.window()))
    }

    /// Zero-state convolution truncated to the input length.
    pub fn filter_buffer(&self, input: &SignalBuffer) -> Result<SignalBuffer> {
        input.ensure_non_empty()?;
        let out = convolve_truncated(&self.taps, input.samples());
        SignalBuffer::new(out, input.sample_rate_hz())
    }

    /// Reads one coefficient per line; `#` starts a comment.
    pub fn from_coefficient_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| AncError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_coefficients(&text, label).map_err(|message| AncError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse_coefficients(
        text: &str,
        label: impl Into<String>,
    ) -> std::result::Result<Self, String> {
        let mut taps = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| format!("line {}: '{line}' is not a number", lineno + 1))?;
            if !v.is_finite() {
                return Err(format!("line {}: coefficient is not finite", lineno + 1));
            }
            taps.push(v);
        }
        if taps.is_empty() {
            return Err("no coefficients found".to_string());
        }
        Self::new(taps, label).map_err(|e| e.to_string())
    }

    pub fn to_coefficient_text(&self) -> String {
        let mut s = format!("# {}\n", self.label);
        for t in &self.taps {
            s.push_str(&format!("{t:e}\n"));
        }
        s
    }

    /// Named plants shipped with the library.
    ///
    /// `default-primary` (32 taps, 6-sample delay) and `default-secondary`
    /// (16 taps, 2-sample delay) are damped oscillatory responses; the
    /// primary path carries more delay than the secondary path so the
    /// controller can be causal. `identity` and `delay-N` are also accepted.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "default-primary" => Some(damped_response(32, 6, 0.85, 11.0, 2.5, "default-primary")),
            "default-secondary" => Some(damped_response(16, 2, 0.6, 7.0, 0.8, "default-secondary")),
            "identity" => Some(Self::identity()),
            _ => name
                .strip_prefix("delay-")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d <= 4096)
                .map(Self::delay),
        }
    }
}

impl fmt::Display for FirFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} taps)", self.label, self.taps.len())
    }
}

/// `gain * decay^k * cos(2πk / period)` starting `delay` samples in.
fn damped_response(
    len: usize,
    delay: usize,
    decay: f64,
    period: f64,
    gain: f64,
    label: &str,
) -> FirFilter {
    let taps = (0..len)
        .map(|n| {
            if n < delay {
                0.0
            } else {
                let k = (n - delay) as f64;
                gain * decay.powf(k) * (2.0 * std::f64::consts::PI * k / period).cos()
            }
        })
        .collect();
    FirFilter {
        taps,
        label: label.to_string(),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn convolve_truncated(taps: &[f64], input: &[f64]) -> Vec<f64> {
    (0..input.len())
        .map(|n| {
            taps.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, t)| t * input[n - k])
                .sum()
        })
        .collect()
}

/// Zero-initialized window of the most recent samples, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    contents: Vec<f64>,
}

impl DelayLine {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "delay line capacity must be positive");
        Self {
            contents: vec![0.0; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.contents.len()
    }

    pub fn push(&mut self, x: f64) {
        let n = self.contents.len();
        self.contents.copy_within(0..n - 1, 1);
        self.contents[0] = x;
    }

    /// `[newest, ..., oldest]`.
    pub fn window(&self) -> &[f64] {
        &self.contents
    }

    pub fn newest(&self) -> f64 {
        self.contents[0]
    }

    pub fn reset(&mut self) {
        self.contents.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Result of offline secondary-path identification.
#[derive(Debug, Clone)]
pub struct Identification {
    pub model: FirFilter,
    /// Mean squared identification error over the final tenth of the run.
    pub final_error_power: f64,
}

/// Trains an FIR model of `true_s` with plain LMS on seeded unit-variance
/// white noise.
pub fn identify_secondary_path(
    true_s: &FirFilter,
    model_order: usize,
    excitation_length: usize,
    step_size: f64,
    seed: u64,
) -> Result<Identification> {
    if model_order == 0 {
        return Err(validation("model order must be positive"));
    }
    if excitation_length == 0 {
        return Err(validation("excitation length must be positive"));
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(validation(format!(
            "step size {step_size} must be positive"
        )));
    }
    let excitation = white_noise(1.0, seed, excitation_length);
    let input_power = excitation.iter().map(|v| v * v).sum::<f64>() / excitation_length as f64;
    let guard = 1e6 * input_power.max(f64::MIN_POSITIVE);

    let mut plant_line = true_s.delay_line();
    let mut model_line = DelayLine::new(model_order);
    let mut w = vec![0.0; model_order];
    let tail_start = excitation_length - (excitation_length / 10).max(1);
    let mut tail_energy = 0.0;

    for (n, &x) in excitation.iter().enumerate() {
        let target = true_s.filter_sample(&mut plant_line, x)?;
        model_line.push(x);
        let e = target - dot(&w, model_line.window());
        if !e.is_finite() || e * e > guard {
            return Err(AncError::Divergence {
                iteration: n,
                detail: format!(
                    "identification error power exceeded 1e6 x input power; step size {step_size} is too large"
                ),
            });
        }
        for (wk, xk) in w.iter_mut().zip(model_line.window()) {
            *wk += step_size * e * xk;
        }
        if n >= tail_start {
            tail_energy += e * e;
        }
    }

    let model = FirFilter::new(w, format!("{}-identified", true_s.label()))?;
    Ok(Identification {
        model,
        final_error_power: tail_energy / (excitation_length - tail_start) as f64,
    })
}
