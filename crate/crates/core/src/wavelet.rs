//! Orthogonal discrete wavelet transform with periodic boundaries, and the
//! hard / soft / error-driven thresholding used to denoise the secondary
//! signal.

use serde::{Deserialize, Serialize};

use crate::error::{validation, AncError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Haar,
    /// Daubechies, two vanishing moments (4 taps).
    Db2,
    /// Daubechies, four vanishing moments (8 taps).
    Db4,
}

impl WaveletFamily {
    pub const ALL: [WaveletFamily; 3] =
        [WaveletFamily::Haar, WaveletFamily::Db2, WaveletFamily::Db4];

    /// Low-pass scaling filter, normalized so its taps sum to √2.
    pub fn scaling_filter(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Db2 => {
                let r3 = 3.0_f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![
                    (1.0 + r3) / norm,
                    (3.0 + r3) / norm,
                    (3.0 - r3) / norm,
                    (1.0 - r3) / norm,
                ]
            }
            WaveletFamily::Db4 => vec![
                0.230_377_813_308_855_23,
                0.714_846_570_552_541_5,
                0.630_880_767_929_590_4,
                -0.027_983_769_416_983_85,
                -0.187_034_811_718_881_14,
                0.030_841_381_835_986_965,
                0.032_883_011_666_982_945,
                -0.010_597_401_784_997_278,
            ],
        }
    }

    /// Quadrature-mirror high-pass: `g[m] = (-1)^m h[M-1-m]`.
    pub fn wavelet_filter(self) -> Vec<f64> {
        let h = self.scaling_filter();
        let m = h.len();
        (0..m)
            .map(|i| {
                if i % 2 == 0 {
                    h[m - 1 - i]
                } else {
                    -h[m - 1 - i]
                }
            })
            .collect()
    }
}

/// Transform configuration: family, decomposition depth and block size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
    pub block_length: usize,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: WaveletFamily::Haar,
            levels: 2,
            block_length: 64,
        }
    }
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: usize, block_length: usize) -> Result<Self> {
        let spec = Self {
            family,
            levels,
            block_length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.block_length < 2 || !self.block_length.is_power_of_two() {
            out.push(format!(
                "wavelet block_length {} must be a power of two >= 2",
                self.block_length
            ));
        } else if self.levels == 0 || self.levels > self.block_length.trailing_zeros() as usize {
            out.push(format!(
                "wavelet levels {} must be in 1..={} for block_length {}",
                self.levels,
                self.block_length.trailing_zeros(),
                self.block_length
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(validation(p.join("; ")))
        }
    }
}

/// Multi-level decomposition of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// Approximation at the coarsest level.
    pub approximation: Vec<f64>,
    /// Details per level, finest first.
    pub details: Vec<Vec<f64>>,
}

impl CoefficientSet {
    pub fn len(&self) -> usize {
        self.approximation.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn matches(&self, spec: &WaveletSpec) -> bool {
        if self.details.len() != spec.levels {
            return false;
        }
        let mut n = spec.block_length;
        for d in &self.details {
            n /= 2;
            if d.len() != n {
                return false;
            }
        }
        self.approximation.len() == n
    }
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for m in 0..h.len() {
            let v = x[(2 * k + m) % n];
            sa += h[m] * v;
            sd += g[m] * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for m in 0..h.len() {
            x[(2 * k + m) % n] += h[m] * a[k] + g[m] * d[k];
        }
    }
    x
}

/// Forward transform.
pub fn dwt(block: &[f64], spec: &WaveletSpec) -> Result<CoefficientSet> {
    spec.validate()?;
    if block.len() != spec.block_length {
        return Err(validation(format!(
            "block has {} samples, wavelet spec expects {}",
            block.len(),
            spec.block_length
        )));
    }
    let h = spec.family.scaling_filter();
    let g = spec.family.wavelet_filter();
    let mut approx = block.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        let (a, d) = analysis_step(&approx, &h, &g);
        details.push(d);
        approx = a;
    }
    Ok(CoefficientSet {
        approximation: approx,
        details,
    })
}

/// Inverse transform.
pub fn idwt(coeffs: &CoefficientSet, spec: &WaveletSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if !coeffs.matches(spec) {
        return Err(validation(format!(
            "coefficient shape does not match {} levels over {} samples",
            spec.levels, spec.block_length
        )));
    }
    let h = spec.family.scaling_filter();
    let g = spec.family.wavelet_filter();
    let mut approx = coeffs.approximation.clone();
    for d in coeffs.details.iter().rev() {
        approx = synthesis_step(&approx, d, &h, &g);
    }
    Ok(approx)
}

/// Zeroes `y` when `|y| <= lambda`, otherwise passes it unchanged.
pub fn threshold_hard(y: f64, lambda: f64) -> f64 {
    if y.abs() <= lambda {
        0.0
    } else {
        y
    }
}

/// Zeroes `y` when `|y| <= lambda`, otherwise shrinks it toward zero by
/// `lambda`.
pub fn threshold_soft(y: f64, lambda: f64) -> f64 {
    if y.abs() <= lambda {
        0.0
    } else {
        y.signum() * (y.abs() - lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdKind {
    Hard,
    Soft,
}

impl ThresholdKind {
    pub fn apply(self, y: f64, lambda: f64) -> f64 {
        match self {
            ThresholdKind::Hard => threshold_hard(y, lambda),
            ThresholdKind::Soft => threshold_soft(y, lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adaptation {
    Fixed,
    /// Threshold scaled by `1 / (1 - |e|)`.
    Variable,
}

/// Where the threshold acts on the secondary signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdDomain {
    /// Detail coefficients of a sliding block.
    Wavelet,
    /// Directly on each sample.
    Sample,
}

pub const DEFAULT_ERROR_CLAMP: f64 = 0.95;
pub const DEFAULT_LAMBDA: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub kind: ThresholdKind,
    pub base_lambda: f64,
    pub adaptation: Adaptation,
    /// Upper bound on `|e|` inside `1 / (1 - |e|)`.
    pub error_clamp: f64,
    pub lambda_max: f64,
}

impl ThresholdPolicy {
    /// Error clamp 0.95 and cap at ten times the base threshold.
    pub fn new(kind: ThresholdKind, base_lambda: f64, adaptation: Adaptation) -> Self {
        Self {
            kind,
            base_lambda,
            adaptation,
            error_clamp: DEFAULT_ERROR_CLAMP,
            lambda_max: 10.0 * base_lambda,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.base_lambda.is_finite() && self.base_lambda >= 0.0) {
            out.push(format!("lambda {} must be non-negative", self.base_lambda));
        }
        if !(0.0..1.0).contains(&self.error_clamp) {
            out.push(format!(
                "error_clamp {} must lie in [0, 1)",
                self.error_clamp
            ));
        }
        if !(self.lambda_max.is_finite() && self.lambda_max >= self.base_lambda) {
            out.push(format!(
                "lambda_max {} must be finite and at least lambda {}",
                self.lambda_max, self.base_lambda
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(validation(p.join("; ")))
        }
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::new(ThresholdKind::Soft, DEFAULT_LAMBDA, Adaptation::Fixed)
    }
}

/// `base / (1 - min(|e|, clamp))` capped at `max`; shared by the variable
/// threshold and the variable step size.
pub fn error_scaled(base: f64, e: f64, clamp: f64, max: f64) -> f64 {
    let mag = e.abs().min(clamp);
    (base / (1.0 - mag)).min(max)
}

/// Threshold in force for the current error sample.
pub fn effective_lambda(policy: &ThresholdPolicy, e: f64) -> f64 {
    match policy.adaptation {
        Adaptation::Fixed => policy.base_lambda,
        Adaptation::Variable => {
            error_scaled(policy.base_lambda, e, policy.error_clamp, policy.lambda_max)
        }
    }
}

/// Transform, threshold the detail coefficients, and reconstruct.
/// The approximation band is left untouched.
pub fn denoise_block(
    block: &[f64],
    spec: &WaveletSpec,
    policy: &ThresholdPolicy,
    e: f64,
) -> Result<Vec<f64>> {
    let lambda = effective_lambda(policy, e);
    denoise_with_lambda(block, spec, policy.kind, lambda)
}

pub(crate) fn denoise_with_lambda(
    block: &[f64],
    spec: &WaveletSpec,
    kind: ThresholdKind,
    lambda: f64,
) -> Result<Vec<f64>> {
    let mut coeffs = dwt(block, spec)?;
    for level in coeffs.details.iter_mut() {
        for c in level.iter_mut() {
            *c = kind.apply(*c, lambda);
        }
    }
    idwt(&coeffs, spec).map_err(|e| match e {
        AncError::Validation(m) => AncError::ContractViolation(m),
        other => other,
    })
}
