use nalgebra::{DMatrix, DVector};

use crate::error::{validation, AncError, Result};
use crate::paths::{convolve_truncated, FirFilter};
use crate::signals::white_noise;

/// Realization used to form the normal equations.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub excitation_length: usize,
    pub seed: u64,
    /// Condition numbers above this are rejected.
    pub max_condition: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            excitation_length: 20_000,
            seed: 0x5eed,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub filter: FirFilter,
    /// Mean squared residual `p*x - s*w*x` over the realization.
    pub residual_power: f64,
    pub condition: f64,
}

/// Least-squares FIR approximation of `P(z) / S(z)` with `order` taps.
pub fn wiener_oracle(p: &FirFilter, s: &FirFilter, order: usize) -> Result<OracleSolution> {
    wiener_oracle_with(p, s, order, OracleOptions::default())
}

pub fn wiener_oracle_with(
    p: &FirFilter,
    s: &FirFilter,
    order: usize,
    opts: OracleOptions,
) -> Result<OracleSolution> {
    if order == 0 {
        return Err(validation("oracle order must be positive"));
    }
    if opts.excitation_length <= order {
        return Err(validation(
            "oracle excitation must be longer than the order",
        ));
    }
    let s_delay = s
        .leading_delay()
        .ok_or_else(|| AncError::Infeasible("secondary path is identically zero".into()))?;
    if let Some(p_delay) = p.leading_delay() {
        if p_delay < s_delay {
            return Err(AncError::Infeasible(format!(
                "primary path delay {p_delay} is shorter than secondary path delay {s_delay}; \
                 no causal controller can compensate"
            )));
        }
    }

    let x = white_noise(1.0, opts.seed, opts.excitation_length);
    let d = convolve_truncated(p.taps(), &x);
    let u = convolve_truncated(s.taps(), &x);

    let mut phi = DMatrix::<f64>::zeros(order, order);
    let mut theta = DVector::<f64>::zeros(order);
    let mut window = vec![0.0; order];
    for (&un, &dn) in u.iter().zip(&d) {
        window.rotate_right(1);
        window[0] = un;
        for i in 0..order {
            theta[i] += dn * window[i];
            for j in 0..=i {
                phi[(i, j)] += window[i] * window[j];
            }
        }
    }
    for i in 0..order {
        for j in 0..i {
            phi[(j, i)] = phi[(i, j)];
        }
    }

    let eig = phi.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    let condition = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > opts.max_condition {
        return Err(AncError::IllConditioned { condition });
    }
    let w = phi
        .cholesky()
        .ok_or(AncError::IllConditioned { condition })?
        .solve(&theta);
    let taps: Vec<f64> = w.iter().copied().collect();

    let y = convolve_truncated(&taps, &u);
    let residual_power =
        d.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d.len() as f64;

    Ok(OracleSolution {
        filter: FirFilter::new(taps, format!("wiener({}/{})", p.label(), s.label()))?,
        residual_power,
        condition,
    })
}
