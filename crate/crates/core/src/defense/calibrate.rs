//! Penalty calibrators driven by the occupied-community fraction τ.

use crate::error::{invalid, Result};

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!("τ = {tau} outside [0, 1]")));
    }
    Ok(())
}

/// Label-flip probability `h_η(τ) = 1 / (1 + e^{η(1 − 2τ)})`.
///
/// A logistic curve centred on τ = 0.5; larger η sharpens it so that
/// h(0) → 0 and h(1) → 1.
pub fn flip_probability(tau: f64, eta: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(1.0 / (1.0 + (eta * (1.0 - 2.0 * tau)).exp()))
}

/// Embedding noise scale `σ_τ = λ (e^{ln(α/λ) τ / β} − 1)`.
///
/// Zero at τ = 0 and exactly `α − λ` at τ = β.
pub fn noise_sigma(tau: f64, alpha: f64, beta: f64, lambda: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(lambda * ((alpha / lambda).ln() * tau / beta).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_reference_points() {
        for eta in [0.5, 1.0, 10.0, 50.0] {
            assert_eq!(flip_probability(0.5, eta).unwrap(), 0.5);
        }
        let at0 = 1.0 / (1.0 + 10f64.exp());
        assert!((flip_probability(0.0, 10.0).unwrap() - at0).abs() < 1e-15);
        assert!((flip_probability(0.0, 10.0).unwrap() - 4.53979e-5).abs() < 1e-9);
        assert!((flip_probability(1.0, 10.0).unwrap() - 0.9999546).abs() < 1e-7);
        assert!(flip_probability(-0.1, 10.0).is_err());
        assert!(flip_probability(1.1, 10.0).is_err());
        assert!(flip_probability(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn sigma_reference_points() {
        assert_eq!(noise_sigma(0.0, 1.0, 0.9, 1e-6).unwrap(), 0.0);
        assert!((noise_sigma(0.9, 1.0, 0.9, 1e-6).unwrap() - 0.999999).abs() < 1e-12);
        // Half-way to β: λ(√(α/λ) − 1) = 1e-6 · 999.
        assert!((noise_sigma(0.45, 1.0, 0.9, 1e-6).unwrap() - 9.99e-4).abs() < 1e-12);
        assert!(noise_sigma(2.0, 1.0, 0.9, 1e-6).is_err());
    }

    #[test]
    fn both_strictly_increasing_on_grid() {
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..=10_000 {
            let tau = i as f64 * 1e-4;
            let h = flip_probability(tau, 10.0).unwrap();
            let s = noise_sigma(tau, 1.0, 0.9, 1e-6).unwrap();
            assert!(h > prev.0 && s > prev.1, "not increasing at τ = {tau}");
            prev = (h, s);
        }
    }
}
