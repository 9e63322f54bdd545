//! Two-mode couplings after adiabatic elimination of the cavity.
//!
//! Eliminating the cavity quadratures gives
//!
//! ```text
//! ω₁ = 4 G_mc² Δ / (κ² + Δ²),  ω₂ = 4 G_ac² Δ / (κ² + Δ²),  G_ma = −8 G_mc G_ac Δ / (κ² + Δ²)
//! ```
//!
//! These are calculator outputs only; entanglement values always come from
//! the full three-mode covariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Δ must exceed this multiple of the larger coupling for the adiabatic flag.
pub const ADIABATIC_RATIO: f64 = 10.0;
/// Relative mismatch of ω_a and ω_m still counted as resonant.
pub const RESONANCE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub omega_1: f64,
    pub omega_2: f64,
    pub g_ma: f64,
    /// Coefficient of the exchange term `(a b† + a† b)`.
    pub beam_splitter: f64,
    /// Coefficient of the pair-creation term `(a b + a† b†)`.
    pub down_conversion: f64,
    /// `Δ > 10 · max(G_mc, G_ac)`.
    pub adiabatic: bool,
    /// `ω_a ≈ ω_m`; `None` when the mode frequencies were not supplied.
    pub resonant: Option<bool>,
}

pub fn effective_parameters(g_mc: f64, g_ac: f64, delta: f64, kappa: f64) -> Result<EffectiveModel> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "adiabatic elimination is only defined for red detuning (Δ > 0), got Δ = {delta}"
        )));
    }
    if !(kappa >= 0.0) || !g_mc.is_finite() || !g_ac.is_finite() {
        return Err(Error::validation("effective", "couplings and κ must be finite, κ ≥ 0"));
    }
    let lorentz = delta / (kappa * kappa + delta * delta);
    let g_ma = -8.0 * g_ac * g_mc * lorentz;
    Ok(EffectiveModel {
        omega_1: 4.0 * g_mc * g_mc * lorentz,
        omega_2: 4.0 * g_ac * g_ac * lorentz,
        g_ma,
        beam_splitter: g_ma / 2.0,
        down_conversion: g_ma / 2.0,
        adiabatic: delta > ADIABATIC_RATIO * g_mc.max(g_ac),
        resonant: None,
    })
}

/// [`effective_parameters`] with the resonance flag filled in.
pub fn effective_model(p: &ModelParams) -> Result<EffectiveModel> {
    let mut e = effective_parameters(p.g_mc_eff, p.g_ac_eff, p.delta, p.kappa)?;
    e.resonant = Some((p.omega_a - p.omega_m).abs() <= RESONANCE_TOLERANCE * p.omega_m);
    Ok(e)
}

/// `|G_ma| ≥ ω_m`.
pub fn entangling_regime(g_ma: f64, omega_m: f64) -> bool {
    g_ma.abs() >= omega_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decoupled_condensate() {
        let e = effective_parameters(2.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(e.g_ma, 0.0);
        assert_eq!(e.omega_2, 0.0);
        assert!(e.omega_1 > 0.0);
    }

    #[test]
    fn overdamped_cavity_limit() {
        let e = effective_parameters(2.0, 3.0, 1.0, 1e12).unwrap();
        assert!(e.omega_1.abs() < 1e-20 && e.omega_2.abs() < 1e-20 && e.g_ma.abs() < 1e-20);
    }

    #[test]
    fn equal_couplings_at_delta_equal_kappa() {
        let (g, d) = (0.3, 2.0);
        let e = effective_parameters(g, g, d, d).unwrap();
        assert!((e.g_ma - (-4.0 * g * g / d)).abs() < 1e-15);
        assert_eq!(e.beam_splitter, e.down_conversion);
        assert_eq!(e.beam_splitter, e.g_ma / 2.0);
        assert!(e.omega_1 >= 0.0 && e.omega_2 >= 0.0 && e.g_ma <= 0.0);
    }

    #[test]
    fn blue_detuning_is_rejected() {
        assert!(matches!(effective_parameters(1.0, 1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(effective_parameters(1.0, 1.0, -1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn regime_predicate() {
        assert!(!entangling_regime(0.0, 1.0));
        assert!(entangling_regime(-1.0, 1.0));
        assert!(entangling_regime(2.0, 1.0));
        assert!(!entangling_regime(-0.999, 1.0));
    }

    #[test]
    fn flags() {
        let e = effective_parameters(1.0, 0.5, 10.5, 1.0).unwrap();
        assert!(e.adiabatic);
        let e = effective_parameters(1.0, 0.5, 9.5, 1.0).unwrap();
        assert!(!e.adiabatic);
        let p = ModelParams {
            omega_m: 1.0, omega_a: 1.5, gamma: 0.0, kappa: 1.0, delta: 1.0,
            g_mc_eff: 0.1, g_ac_eff: 0.1, n_th: 0.0, n_c: 0.0,
        };
        assert_eq!(effective_model(&p).unwrap().resonant, Some(false));
    }

    #[test]
    fn peak_at_delta_equal_kappa() {
        let kappa = 1.7;
        let best = (1..4000)
            .map(|i| i as f64 * 0.001)
            .max_by(|a, b| {
                let ga = effective_parameters(1.0, 1.0, *a, kappa).unwrap().g_ma.abs();
                let gb = effective_parameters(1.0, 1.0, *b, kappa).unwrap().g_ma.abs();
                ga.total_cmp(&gb)
            })
            .unwrap();
        assert!((best - kappa).abs() <= 0.001);
    }

    proptest! {
        #[test]
        fn scaling(gmc in 0.01..10.0f64, gac in 0.01..10.0f64, d in 0.1..10.0f64, k in 0.0..10.0f64, s in 0.1..5.0f64) {
            let base = effective_parameters(gmc, gac, d, k).unwrap();
            let mc = effective_parameters(s * gmc, gac, d, k).unwrap();
            let ac = effective_parameters(gmc, s * gac, d, k).unwrap();
            prop_assert!((mc.g_ma - s * base.g_ma).abs() <= 1e-12 * (s * base.g_ma).abs().max(1e-300));
            prop_assert!((ac.g_ma - s * base.g_ma).abs() <= 1e-12 * (s * base.g_ma).abs().max(1e-300));
            prop_assert!((mc.omega_1 - s * s * base.omega_1).abs() <= 1e-12 * (s * s * base.omega_1));
            prop_assert_eq!(mc.omega_2, base.omega_2);
        }
    }
}
