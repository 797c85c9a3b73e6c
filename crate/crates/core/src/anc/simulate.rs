use thiserror::Error;

use super::controller::{Controller, ControllerKind, ControllerParams};
use crate::error::{validation, AncError};
use crate::paths::{identify_secondary_path, FirFilter};
use crate::signals::{generate, white_noise, SignalBuffer, SourceSpec};

/// How the controller's secondary-path model is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondaryModel {
    /// `Ŝ = S`.
    Perfect,
    /// LMS identification on white noise before the run.
    Identified {
        order: usize,
        excitation_length: usize,
        step_size: f64,
        seed: u64,
    },
}

impl SecondaryModel {
    pub fn build(&self, secondary: &FirFilter) -> crate::Result<FirFilter> {
        match *self {
            SecondaryModel::Perfect => Ok(secondary.clone()),
            SecondaryModel::Identified {
                order,
                excitation_length,
                step_size,
                seed,
            } => {
                let id =
                    identify_secondary_path(secondary, order, excitation_length, step_size, seed)?;
                log::info!(
                    "identified {} ({} taps), final error power {:.3e}",
                    secondary.label(),
                    order,
                    id.final_error_power
                );
                Ok(id.model)
            }
        }
    }
}

/// Fully resolved plant and source for one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub sample_rate_hz: f64,
    pub source: SourceSpec,
    pub primary: FirFilter,
    pub secondary: FirFilter,
    pub secondary_model: SecondaryModel,
    /// Variance of white noise added to the secondary signal `y'(n)`.
    pub path_noise_variance: f64,
    pub path_noise_seed: u64,
    pub iterations: usize,
}

/// A named controller configuration.
#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub name: String,
    pub kind: ControllerKind,
    pub params: ControllerParams,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind, params: ControllerParams) -> Self {
        Self {
            name: kind.algorithm.to_string(),
            kind,
            params,
        }
    }
}

/// Per-iteration record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scenario: String,
    pub controller: String,
    pub kind: ControllerKind,
    pub e: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub lambda_eff: Vec<f64>,
    pub mu_eff: Vec<f64>,
    /// Primary noise at the error sensor over the same iterations.
    pub d: Vec<f64>,
    pub final_taps: Vec<f64>,
}

impl RunTrace {
    fn with_capacity(scenario: &str, spec: &ControllerSpec, n: usize) -> Self {
        Self {
            scenario: scenario.to_string(),
            controller: spec.name.clone(),
            kind: spec.kind,
            e: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            y_prime: Vec::with_capacity(n),
            lambda_eff: Vec::with_capacity(n),
            mu_eff: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            final_taps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Invalid(#[from] AncError),

    #[error("{controller} diverged at iteration {iteration}: {detail}")]
    Diverged {
        controller: String,
        iteration: usize,
        detail: String,
        /// Everything recorded before the failing iteration.
        partial: Box<RunTrace>,
    },
}

/// Reference, primary noise and plant shared by every controller of a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    name: String,
    reference: SignalBuffer,
    disturbance: SignalBuffer,
    secondary: FirFilter,
    model: FirFilter,
    path_noise: Vec<f64>,
}

impl Simulation {
    /// Generates the reference, drives it through `P(z)`, and builds `Ŝ(z)`.
    pub fn prepare(scenario: &Scenario) -> crate::Result<Self> {
        if scenario.iterations == 0 {
            return Err(validation("iterations must be positive"));
        }
        let source = SourceSpec {
            length_samples: scenario.iterations,
            ..scenario.source.clone()
        };
        let reference = generate(&source, scenario.sample_rate_hz)?;
        let disturbance = scenario.primary.filter_buffer(&reference)?;
        let model = scenario.secondary_model.build(&scenario.secondary)?;
        if !(scenario.path_noise_variance.is_finite() && scenario.path_noise_variance >= 0.0) {
            return Err(validation(format!(
                "path noise variance {} must be non-negative",
                scenario.path_noise_variance
            )));
        }
        let path_noise = white_noise(
            scenario.path_noise_variance,
            scenario.path_noise_seed,
            scenario.iterations,
        );
        Ok(Self {
            name: scenario.name.clone(),
            reference,
            disturbance,
            secondary: scenario.secondary.clone(),
            model,
            path_noise,
        })
    }

    /// Uses caller-supplied signals directly.
    pub fn from_signals(
        name: impl Into<String>,
        reference: SignalBuffer,
        disturbance: SignalBuffer,
        secondary: FirFilter,
        model: FirFilter,
    ) -> crate::Result<Self> {
        reference.ensure_non_empty()?;
        if reference.len() != disturbance.len() {
            return Err(validation(format!(
                "reference has {} samples but disturbance has {}",
                reference.len(),
                disturbance.len()
            )));
        }
        let path_noise = vec![0.0; reference.len()];
        Ok(Self {
            name: name.into(),
            reference,
            disturbance,
            secondary,
            model,
            path_noise,
        })
    }

    /// Replaces the secondary-path noise sequence.
    pub fn with_path_noise(mut self, noise: Vec<f64>) -> crate::Result<Self> {
        if noise.len() != self.reference.len() {
            return Err(validation(format!(
                "path noise has {} samples, expected {}",
                noise.len(),
                self.reference.len()
            )));
        }
        self.path_noise = noise;
        Ok(self)
    }

    pub fn reference(&self) -> &SignalBuffer {
        &self.reference
    }

    pub fn disturbance(&self) -> &SignalBuffer {
        &self.disturbance
    }

    pub fn secondary_model(&self) -> &FirFilter {
        &self.model
    }

    /// Runs one controller over the whole realization.
    pub fn run(&self, spec: &ControllerSpec) -> Result<RunTrace, SimulationError> {
        let mut params = spec.params;
        if params.divergence_bound.is_none() {
            params.divergence_bound = Some(1e6 * self.disturbance.max_abs().max(f64::MIN_POSITIVE));
        }
        let mut controller = Controller::new(spec.kind, params, &self.secondary, &self.model)?;
        let n = self.reference.len();
        let mut trace = RunTrace::with_capacity(&self.name, spec, n);
        let xs = self.reference.samples();
        let ds = self.disturbance.samples();
        for i in 0..n {
            match controller.step_with_path_noise(
                xs[i],
                ds[i],
                self.path_noise[i],
                &self.secondary,
                &self.model,
            ) {
                Ok(r) => {
                    trace.e.push(r.e);
                    trace.y.push(r.y);
                    trace.y_prime.push(r.y_prime);
                    trace.lambda_eff.push(r.lambda_eff);
                    trace.mu_eff.push(r.mu_eff);
                    trace.d.push(ds[i]);
                }
                Err(AncError::Divergence { iteration, detail }) => {
                    trace.final_taps = controller.weights().to_vec();
                    return Err(SimulationError::Diverged {
                        controller: spec.name.clone(),
                        iteration,
                        detail,
                        partial: Box::new(trace),
                    });
                }
                Err(other) => return Err(other.into()),
            }
        }
        trace.final_taps = controller.weights().to_vec();
        Ok(trace)
    }
}

/// Prepares the scenario and runs a single controller on it.
pub fn run_simulation(
    scenario: &Scenario,
    spec: &ControllerSpec,
) -> Result<RunTrace, SimulationError> {
    Simulation::prepare(scenario)?.run(spec)
}
