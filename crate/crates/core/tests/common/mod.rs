#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, Matrix4, Matrix6};
use rand::Rng;
use rand_distr::StandardNormal;

use bec_mirror::params::ModelParams;

/// Dimensionless point (ω_m = 1) that is stable with an entangled
/// mirror–condensate steady state. Found by a random search over blue
/// detunings with a slow condensate mode.
pub fn entangled_model() -> ModelParams {
    ModelParams {
        omega_m: 1.0,
        omega_a: 0.31,
        gamma: 0.57,
        kappa: 0.16,
        delta: -5.7,
        g_mc_eff: 3.4,
        g_ac_eff: 4.5,
        n_th: 0.0,
        n_c: 0.0,
    }
}

pub fn two_mode_omega() -> Matrix4<f64> {
    let mut o = Matrix4::zeros();
    o[(0, 1)] = 1.0;
    o[(1, 0)] = -1.0;
    o[(2, 3)] = 1.0;
    o[(3, 2)] = -1.0;
    o
}

/// Random physical two-mode covariance `S diag(ν₁,ν₁,ν₂,ν₂) Sᵗ` with
/// `S = exp(Ω H)` symplectic and `ν ≥ 1/2`.
pub fn random_physical_state(rng: &mut impl Rng, scale: f64) -> Matrix4<f64> {
    let mut h = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    h = (h + h.transpose()) * 0.5;
    let s = (two_mode_omega() * h).exp();
    let n1 = 0.5 + rng.random::<f64>() * 2.0;
    let n2 = 0.5 + rng.random::<f64>() * 2.0;
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(n1, n1, n2, n2));
    let v = s * d * s.transpose();
    (v + v.transpose()) * 0.5
}

/// Partial-transpose symplectic spectrum from eigenvalues of `Ω Ṽ`,
/// `Ṽ = P V P` with `P = diag(1, 1, 1, −1)`. Returns `(ν₋, ν₊)`.
pub fn partial_transpose_spectrum(v: &Matrix4<f64>) -> (f64, f64) {
    let p = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0, -1.0));
    let vt = p * v * p;
    let ev: Vec<Complex<f64>> = (two_mode_omega() * vt).complex_eigenvalues().iter().copied().collect();
    let mut nus: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
    nus.sort_by(f64::total_cmp);
    // eigenvalues come in ±iν pairs
    (0.5 * (nus[0] + nus[1]), 0.5 * (nus[2] + nus[3]))
}

/// Random Hurwitz 6×6 drift and positive semidefinite diffusion.
pub fn random_stable_system(rng: &mut impl Rng) -> (Matrix6<f64>, Matrix6<f64>) {
    loop {
        let a = Matrix6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let abscissa = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let margin = 0.05 + rng.random::<f64>();
        let m = a - Matrix6::identity() * (abscissa + margin);
        let b = Matrix6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let d = b * b.transpose();
        let ratio = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max) / margin;
        if ratio < 200.0 {
            return (m, d);
        }
    }
}

/// Random stable drift with the quadrature structure of the model.
pub fn random_model(rng: &mut impl Rng) -> ModelParams {
    loop {
        let p = ModelParams {
            omega_m: 1.0,
            omega_a: 0.2 + 2.0 * rng.random::<f64>(),
            gamma: 0.02 + 0.5 * rng.random::<f64>(),
            kappa: 0.1 + 2.0 * rng.random::<f64>(),
            delta: -4.0 + 8.0 * rng.random::<f64>(),
            g_mc_eff: 1.5 * rng.random::<f64>(),
            g_ac_eff: 0.05 + 1.5 * rng.random::<f64>(),
            n_th: 2.0 * rng.random::<f64>(),
            n_c: 0.0,
        };
        let m = bec_mirror::dynamics::build_drift(&p);
        let eig = m.0.complex_eigenvalues();
        let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if abscissa < -0.01 && rho / abscissa.abs() < 300.0 {
            return p;
        }
    }
}

pub fn dynamic(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}
