//! Potential-well constants and critical amplitudes for the initial profile
//! `V₀(x) = λ (x/L)² (1 − x/L)²` with zero initial velocity.
//!
//! Under `x → x/L`, `½‖V₀″‖² = 0.4 λ² / L³` and `∫|V₀|ᵖ = λᵖ B(2p+1, 2p+1) L`.

use std::f64::consts::PI;

use statrs::function::beta::ln_beta;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("exponent p = {0} must exceed 2")]
    BadExponent(f64),
    #[error("no amplitude reaches E(0) = {depth} for p = {p}")]
    NoRoot { p: f64, depth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellConstants {
    pub p: f64,
    pub c_star: f64,
    pub d: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
}

/// Reference rows `(p, λ_c, d, λ_d)` used by `--compare`.
#[allow(clippy::approx_constant)]
pub const REFERENCE_TABLE1: [(f64, f64, f64, f64); 7] = [
    (3.0, 14414.4, 16.2348, 6.372),
    (4.0, 591.66, 2.4674, 2.484),
    (5.0, 198.15, 1.3788, 1.8567),
    (6.0, 112.87, 1.0472, 1.6180),
    (7.0, 79.90, 0.8467, 1.455),
    (8.0, 63.15, 0.806, 1.419),
    (9.0, 53.21, 0.688, 1.311),
];

/// `C*_p = L² / π²`.
pub fn c_star(length: f64) -> f64 {
    length * length / (PI * PI)
}

/// `d = ((p − 2) / 2p) (C*_p)^{2/(2−p)}`.
pub fn well_depth(p: f64, length: f64) -> f64 {
    (p - 2.0) / (2.0 * p) * c_star(length).powf(2.0 / (2.0 - p))
}

fn beta_2p1(p: f64) -> f64 {
    ln_beta(2.0 * p + 1.0, 2.0 * p + 1.0).exp()
}

/// Closed-form initial energy of the profile with amplitude `lambda`.
pub fn profile_energy(lambda: f64, p: f64, length: f64) -> f64 {
    0.4 * lambda * lambda / length.powi(3) - lambda.abs().powf(p) * beta_2p1(p) * length / p
}

fn check_p(p: f64) -> Result<(), StabilityError> {
    if p > 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(StabilityError::BadExponent(p))
    }
}

/// Amplitude with `E(0) = 0`.
pub fn lambda_critical(p: f64, length: f64) -> Result<f64, StabilityError> {
    check_p(p)?;
    Ok((0.4 * p / (beta_2p1(p) * length.powi(4))).powf(1.0 / (p - 2.0)))
}

/// Amplitude maximizing `E(0)`.
fn lambda_peak(p: f64, length: f64) -> f64 {
    (0.8 / (beta_2p1(p) * length.powi(4))).powf(1.0 / (p - 2.0))
}

/// Smallest positive amplitude with `E(0) = d`.
///
/// `E(0)` rises from 0 to its maximum at `λ*` and then falls, so the root is
/// bracketed by `(0, λ*)`.
pub fn lambda_depth(p: f64, length: f64) -> Result<f64, StabilityError> {
    check_p(p)?;
    let d = well_depth(p, length);
    let hi_start = lambda_peak(p, length);
    let f = |l: f64| profile_energy(l, p, length) - d;
    if f(hi_start) <= 0.0 {
        return Err(StabilityError::NoRoot { p, depth: d });
    }
    let (mut lo, mut hi) = (0.0, hi_start);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Global-existence condition: `C*ᵖ ((2p/(p−2)) E(0))^{(p−2)/2} < 1` and `I(0) > 0`.
///
/// A negative `E(0)` is clamped to zero in the first clause.
pub fn check_existence_condition(p: f64, length: f64, e0: f64, i0: f64) -> bool {
    let base = 2.0 * p / (p - 2.0) * e0.max(0.0);
    let product = c_star(length).powf(p) * base.powf((p - 2.0) / 2.0);
    product < 1.0 && i0 > 0.0
}

pub fn well_constants(p: f64, length: f64) -> Result<WellConstants, StabilityError> {
    Ok(WellConstants {
        p,
        c_star: c_star(length),
        d: well_depth(p, length),
        lambda_c: lambda_critical(p, length)?,
        lambda_d: lambda_depth(p, length)?,
    })
}

/// Rows for each exponent, on the unit beam.
pub fn table1(p_list: &[f64]) -> Result<Vec<WellConstants>, StabilityError> {
    p_list.iter().map(|&p| well_constants(p, 1.0)).collect()
}

/// Largest relative deviation of computed rows from [`REFERENCE_TABLE1`], over
/// the exponents present in both.
pub fn max_reference_deviation(rows: &[WellConstants]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for row in rows {
        let Some(r) = REFERENCE_TABLE1.iter().find(|r| r.0 == row.p) else {
            continue;
        };
        for (got, want) in [(row.lambda_c, r.1), (row.d, r.2), (row.lambda_d, r.3)] {
            let dev = ((got - want) / want).abs();
            worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
        }
    }
    worst
}
