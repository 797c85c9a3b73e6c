//! Adaptive feed-forward controllers and the closed-loop simulation.
//!
//! Per iteration the controller forms `y(n) = wᵀx(n)`, passes it through the
//! secondary path to get `y'(n)`, optionally denoises `y'(n)` with an
//! error-driven wavelet threshold, forms `e(n) = d(n) - y'(n)` and updates
//! the taps along the filtered reference `x'(n) = ŝᵀx(n)`:
//!
//! ```text
//! w(n+1) = w(n) + μ(n) e(n) x'(n),   μ(n) = μ / (1 - |e(n-1)|)
//! ```
//!
//! The variable threshold and step size both use the previous iteration's
//! error, since `e(n)` only exists after `y'(n)` has been thresholded.

mod controller;
mod oracle;
mod simulate;

pub use controller::{
    mu_effective, Algorithm, BlockOutput, Controller, ControllerKind, ControllerParams, Features,
    StepRecord, DEFAULT_MU, DEFAULT_MU_MAX, DEFAULT_TAPS,
};
pub use oracle::{wiener_oracle, wiener_oracle_with, OracleOptions, OracleSolution};
pub use simulate::{
    run_simulation, ControllerSpec, RunTrace, Scenario, SecondaryModel, Simulation, SimulationError,
};
