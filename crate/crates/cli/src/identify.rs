use std::path::Path;

use anc_core::paths::{identify_secondary_path, FirFilter, Identification};

use crate::error::{io_err, CliError, Result};

/// Identifies `secondary` (`builtin:<name>` or a coefficient file) with LMS
/// on white noise and writes the model as a coefficient file.
pub fn identify_command(
    secondary: &str,
    order: Option<usize>,
    excitation_length: usize,
    step_size: f64,
    seed: u64,
    out: &Path,
) -> Result<Identification> {
    let true_s = match secondary.strip_prefix("builtin:") {
        Some(name) => FirFilter::builtin(name)
            .ok_or_else(|| CliError::Config(vec![format!("unknown builtin filter '{name}'")]))?,
        None => FirFilter::from_coefficient_file(Path::new(secondary))?,
    };
    let order = order.unwrap_or(true_s.len());
    let id = identify_secondary_path(&true_s, order, excitation_length, step_size, seed)?;
    let model = id.model.clone().with_label(format!(
        "identified {} ({order} taps, {excitation_length} samples, step {step_size}, seed {seed}, final error power {:e})",
        true_s.label(),
        id.final_error_power
    ));
    std::fs::write(out, model.to_coefficient_text()).map_err(io_err(out))?;
    Ok(id)
}
