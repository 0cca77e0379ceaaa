//! Eigenvalue counting and Weyl-law fits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{DrumError, Result};

/// `N(λ) = #{n : λₙ ≤ λ}` over the converged eigenvalues.
pub fn counting_function(s: &Spectrum, lambda: f64) -> Result<usize> {
    let vals = s.converged_values();
    match vals.last() {
        Some(&top) if lambda <= top => Ok(vals.partition_point(|&v| v <= lambda)),
        Some(&top) => Err(DrumError::RangeExceeded(format!(
            "λ = {lambda} is above the largest converged eigenvalue {top}"
        ))),
        None => Err(DrumError::RangeExceeded("no converged eigenvalues".into())),
    }
}

/// Leading Weyl coefficient per unit volume: `N(λ) ≈ C_d |Ω| λ^{d/2}` with
/// `C_d = ω_d / (2π)^d = 1 / (Γ(d/2 + 1) (4π)^{d/2})`.
pub fn weyl_constant(d: usize) -> f64 {
    // Γ(d/2 + 1) by the half-integer recursion
    let mut gamma = if d % 2 == 0 { 1.0 } else { PI.sqrt() / 2.0 };
    let mut x = if d % 2 == 0 { 1.0 } else { 1.5 };
    while x < d as f64 / 2.0 + 1.0 - 1e-9 {
        gamma *= x;
        x += 1.0;
    }
    1.0 / (gamma * (4.0 * PI).powf(d as f64 / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub d_est: usize,
    /// Unrounded dimension, twice the fitted log-log slope.
    pub d_raw: f64,
    /// Distance of `d_raw` from the nearest rounding boundary (0.5 is best).
    pub confidence_gap: f64,
    pub vol_est: f64,
    /// Eigenvalue index range (0-based, half open) used by the fit.
    pub window: (usize, usize),
}

/// Fits `log N(λ) ≈ (d/2) log λ + log(C_d |Ω|)` over the upper half of the
/// converged (positive) eigenvalues: the free slope gives `d`, then the
/// intercept at the rounded slope gives `|Ω|`.
pub fn weyl_fit(s: &Spectrum) -> Result<WeylFit> {
    weyl_fit_values(s.converged_values())
}

pub fn weyl_fit_values(values: &[f64]) -> Result<WeylFit> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let zeros = sorted.iter().take_while(|&&v| v <= 0.0).count();
    if sorted.len() - zeros < 50 {
        return Err(DrumError::InsufficientData(format!(
            "a Weyl fit needs at least 50 positive eigenvalues, got {}",
            sorted.len() - zeros
        )));
    }
    let n = sorted.len();
    let lo = zeros + (n - zeros) / 2;
    let pts: Vec<(f64, f64)> = (lo..n)
        .map(|i| {
            let count = sorted.partition_point(|&v| v <= sorted[i]);
            (sorted[i].ln(), (count as f64).ln())
        })
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(DrumError::InsufficientData("eigenvalues in the fit window are all equal".into()));
    }
    let d_raw = 2.0 * sxy / sxx;
    let d_est = d_raw.round().max(1.0) as usize;
    let half = d_est as f64 / 2.0;
    let intercept = pts.iter().map(|p| p.1 - half * p.0).sum::<f64>() / m;
    Ok(WeylFit {
        d_est,
        d_raw,
        confidence_gap: 0.5 - (d_raw - d_raw.round()).abs(),
        vol_est: intercept.exp() / weyl_constant(d_est),
        window: (lo, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((weyl_constant(1) - 1.0 / PI).abs() < 1e-15);
        assert!((weyl_constant(2) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((weyl_constant(3) - 1.0 / (6.0 * PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn too_few_values() {
        let v: Vec<f64> = (1..40).map(|k| (k * k) as f64).collect();
        assert!(matches!(weyl_fit_values(&v), Err(DrumError::InsufficientData(_))));
    }
}
