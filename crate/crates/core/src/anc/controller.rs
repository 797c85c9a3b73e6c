use serde::{Deserialize, Serialize};

use crate::error::{validation, AncError, Result};
use crate::paths::{dot, DelayLine, FirFilter};
use crate::wavelet::{
    denoise_with_lambda, effective_lambda, error_scaled, Adaptation, ThresholdDomain,
    ThresholdPolicy, WaveletSpec, DEFAULT_ERROR_CLAMP,
};

pub const DEFAULT_TAPS: usize = 32;
pub const DEFAULT_MU: f64 = 0.01;
pub const DEFAULT_MU_MAX: f64 = 0.2;

/// Controller family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Plain LMS driven by the unfiltered reference (ignores the secondary path).
    LmsDirect,
    Fxlms,
    FxlmsFixedThreshold,
    FxlmsVariable,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::LmsDirect,
        Algorithm::Fxlms,
        Algorithm::FxlmsFixedThreshold,
        Algorithm::FxlmsVariable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::LmsDirect => "lms-direct",
            Algorithm::Fxlms => "fxlms",
            Algorithm::FxlmsFixedThreshold => "fxlms-fixed-threshold",
            Algorithm::FxlmsVariable => "fxlms-variable",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub use_wavelet_threshold: bool,
    pub variable_threshold: bool,
    pub variable_step: bool,
}

impl Features {
    pub const NONE: Features = Features {
        use_wavelet_threshold: false,
        variable_threshold: false,
        variable_step: false,
    };
}

/// Algorithm plus the feature switches it runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerKind {
    pub algorithm: Algorithm,
    pub features: Features,
}

impl ControllerKind {
    /// The canonical feature set for each algorithm.
    pub fn new(algorithm: Algorithm) -> Self {
        let features = match algorithm {
            Algorithm::LmsDirect | Algorithm::Fxlms => Features::NONE,
            Algorithm::FxlmsFixedThreshold => Features {
                use_wavelet_threshold: true,
                ..Features::NONE
            },
            Algorithm::FxlmsVariable => Features {
                use_wavelet_threshold: true,
                variable_threshold: true,
                variable_step: true,
            },
        };
        Self {
            algorithm,
            features,
        }
    }

    /// Overrides the canonical switches, e.g. for ablations.
    pub fn with_features(mut self, features: Features) -> Self {
        self.features = features;
        self
    }
}

/// Which sample of the denoised sliding block replaces `y'(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockOutput {
    /// Middle of the block (`block_length / 2` samples of latency).
    Center,
    /// Most recent sample (no added latency).
    Newest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub taps: usize,
    pub mu_base: f64,
    pub mu_max: f64,
    pub mu_error_clamp: f64,
    /// `adaptation` is overwritten from `Features::variable_threshold`.
    pub threshold: ThresholdPolicy,
    pub threshold_domain: ThresholdDomain,
    pub wavelet: WaveletSpec,
    pub block_output: BlockOutput,
    /// Largest tolerated `|e(n)|`; `None` checks only for non-finite values.
    pub divergence_bound: Option<f64>,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            taps: DEFAULT_TAPS,
            mu_base: DEFAULT_MU,
            mu_max: DEFAULT_MU_MAX,
            mu_error_clamp: DEFAULT_ERROR_CLAMP,
            threshold: ThresholdPolicy::default(),
            threshold_domain: ThresholdDomain::Wavelet,
            wavelet: WaveletSpec::default(),
            block_output: BlockOutput::Center,
            divergence_bound: None,
        }
    }
}

impl ControllerParams {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.taps == 0 {
            out.push("controller taps must be positive".to_string());
        }
        if !(self.mu_base.is_finite() && self.mu_base >= 0.0) {
            out.push(format!("mu {} must be non-negative", self.mu_base));
        }
        if !(self.mu_max.is_finite() && self.mu_max >= self.mu_base) {
            out.push(format!(
                "mu_max {} must be finite and at least mu {}",
                self.mu_max, self.mu_base
            ));
        }
        if !(0.0..1.0).contains(&self.mu_error_clamp) {
            out.push(format!(
                "mu_error_clamp {} must lie in [0, 1)",
                self.mu_error_clamp
            ));
        }
        out.extend(self.threshold.problems());
        out.extend(self.wavelet.problems());
        out
    }
}

/// `mu_base / (1 - min(|e|, clamp))`, capped at `mu_max`.
pub fn mu_effective(mu_base: f64, e: f64, clamp: f64, mu_max: f64) -> f64 {
    error_scaled(mu_base, e, clamp, mu_max)
}

/// Everything observed during one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub e: f64,
    pub y: f64,
    /// Secondary signal after the thresholding stage.
    pub y_prime: f64,
    pub lambda_eff: f64,
    pub mu_eff: f64,
}

/// Adaptive controller `W(z)` with its delay lines.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    params: ControllerParams,
    policy: ThresholdPolicy,
    w: Vec<f64>,
    mu_current: f64,
    x_line: DelayLine,
    xprime_line: DelayLine,
    /// Controller output history feeding `S(z)`.
    y_line: DelayLine,
    /// Reference history feeding `Ŝ(z)`.
    model_line: DelayLine,
    /// Secondary-signal history for block thresholding.
    yprime_line: DelayLine,
    prev_error: f64,
    iteration: usize,
}

impl Controller {
    pub fn new(
        kind: ControllerKind,
        params: ControllerParams,
        plant_s: &FirFilter,
        model_s_hat: &FirFilter,
    ) -> Result<Self> {
        let problems = params.problems();
        if !problems.is_empty() {
            return Err(validation(problems.join("; ")));
        }
        let mut policy = params.threshold;
        policy.adaptation = if kind.features.variable_threshold {
            Adaptation::Variable
        } else {
            Adaptation::Fixed
        };
        Ok(Self {
            kind,
            params,
            policy,
            w: vec![0.0; params.taps],
            mu_current: params.mu_base,
            x_line: DelayLine::new(params.taps),
            xprime_line: DelayLine::new(params.taps),
            y_line: plant_s.delay_line(),
            model_line: model_s_hat.delay_line(),
            yprime_line: DelayLine::new(params.wavelet.block_length),
            prev_error: 0.0,
            iteration: 0,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Replaces the tap vector (length must match).
    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.w.len() {
            return Err(AncError::ContractViolation(format!(
                "expected {} taps, got {}",
                self.w.len(),
                w.len()
            )));
        }
        self.w.copy_from_slice(w);
        Ok(())
    }

    pub fn mu_current(&self) -> f64 {
        self.mu_current
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn previous_error(&self) -> f64 {
        self.prev_error
    }

    /// Reference window `[x(n), ..., x(n-L+1)]`.
    pub fn reference_window(&self) -> &[f64] {
        self.x_line.window()
    }

    /// Filtered-reference window `[x'(n), ..., x'(n-L+1)]`.
    pub fn filtered_reference_window(&self) -> &[f64] {
        self.xprime_line.window()
    }

    fn threshold_stage(&mut self, raw: f64) -> Result<(f64, f64)> {
        if !self.kind.features.use_wavelet_threshold {
            return Ok((raw, 0.0));
        }
        let lambda = effective_lambda(&self.policy, self.prev_error);
        let out = match self.params.threshold_domain {
            ThresholdDomain::Sample => self.policy.kind.apply(raw, lambda),
            ThresholdDomain::Wavelet => {
                self.yprime_line.push(raw);
                let block: Vec<f64> = self.yprime_line.window().iter().rev().copied().collect();
                let denoised =
                    denoise_with_lambda(&block, &self.params.wavelet, self.policy.kind, lambda)?;
                let pos = match self.params.block_output {
                    BlockOutput::Center => block.len() / 2,
                    BlockOutput::Newest => block.len() - 1,
                };
                denoised[pos]
            }
        };
        Ok((out, lambda))
    }

    /// One closed-loop iteration: controller output, secondary path,
    /// thresholding, residual error, filtered reference, weight update.
    pub fn step(
        &mut self,
        x: f64,
        d: f64,
        plant_s: &FirFilter,
        model_s_hat: &FirFilter,
    ) -> Result<StepRecord> {
        self.step_with_path_noise(x, d, 0.0, plant_s, model_s_hat)
    }

    /// As [`Controller::step`], with `v` added to the secondary signal
    /// before the thresholding stage (actuator / sensor noise on the
    /// anti-noise path).
    pub fn step_with_path_noise(
        &mut self,
        x: f64,
        d: f64,
        v: f64,
        plant_s: &FirFilter,
        model_s_hat: &FirFilter,
    ) -> Result<StepRecord> {
        let n = self.iteration;

        self.x_line.push(x);
        let y = dot(&self.w, self.x_line.window());
        let raw_yprime = plant_s.filter_sample(&mut self.y_line, y)? + v;
        let (y_prime, lambda_eff) = self.threshold_stage(raw_yprime)?;
        let e = d - y_prime;

        let xprime = match self.kind.algorithm {
            Algorithm::LmsDirect => x,
            _ => model_s_hat.filter_sample(&mut self.model_line, x)?,
        };
        self.xprime_line.push(xprime);

        let mu = if self.kind.features.variable_step {
            mu_effective(
                self.params.mu_base,
                self.prev_error,
                self.params.mu_error_clamp,
                self.params.mu_max,
            )
        } else {
            self.params.mu_base
        };
        self.mu_current = mu;

        let scale = mu * e;
        for (wk, xk) in self.w.iter_mut().zip(self.xprime_line.window()) {
            *wk += scale * xk;
        }

        if !e.is_finite() {
            return Err(AncError::Divergence {
                iteration: n,
                detail: format!("residual error is {e}"),
            });
        }
        if let Some(bound) = self.params.divergence_bound {
            if e.abs() > bound {
                return Err(AncError::Divergence {
                    iteration: n,
                    detail: format!("|e| = {:.3e} exceeds bound {bound:.3e}", e.abs()),
                });
            }
        }
        if let Some(k) = self.w.iter().position(|v| !v.is_finite()) {
            return Err(AncError::Divergence {
                iteration: n,
                detail: format!("tap {k} is not finite"),
            });
        }

        self.prev_error = e;
        self.iteration += 1;
        Ok(StepRecord {
            e,
            y,
            y_prime,
            lambda_eff,
            mu_eff: mu,
        })
    }
}
