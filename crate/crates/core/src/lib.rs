//! Simulation library for single-channel feed-forward active noise control.
//!
//! The crate models the acoustic plant as FIR filters, runs LMS / FxLMS
//! controllers against it, and provides the modified FxLMS variants that
//! denoise the secondary signal with a wavelet soft threshold and scale both
//! the threshold and the step size by `1 / (1 - |e|)`.
//!
//! - [`signals`]: source generation and WAV I/O
//! - [`paths`]: FIR plants, delay lines, secondary-path identification
//! - [`wavelet`]: DWT / IDWT and thresholding
//! - [`anc`]: controllers, closed-loop simulation, Wiener oracle
//! - [`metrics`]: noise reduction and convergence curves

pub mod anc;
pub mod error;
pub mod metrics;
pub mod paths;
pub mod signals;
pub mod wavelet;

pub use error::{AncError, Result};
