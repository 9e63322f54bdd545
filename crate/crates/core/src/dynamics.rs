//! Drift and diffusion matrices of the linearized quadrature fluctuations.
//!
//! Quadratures are ordered `R = (q_m, p_m, q_a, p_a, q_c, p_c)` with
//! `q = (o + o†)/√2`, `p = (o − o†)/(i√2)` for each mode `o`. The dynamics
//! is `Ṙ = M R + F` with `⟨F_i(t) F_j(t') + F_j(t') F_i(t)⟩/2 = D_ij δ(t − t')`.

use nalgebra::{Matrix6, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// One of the three bosonic modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mirror,
    Bec,
    Cavity,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Mirror, Mode::Bec, Mode::Cavity];

    /// Index of the `q` quadrature in the full ordering; `p` follows it.
    pub fn offset(self) -> usize {
        match self {
            Mode::Mirror => 0,
            Mode::Bec => 2,
            Mode::Cavity => 4,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Mode::Mirror => "m",
            Mode::Bec => "a",
            Mode::Cavity => "c",
        }
    }
}

/// Quadrature labels in the full ordering.
pub const QUADRATURE_LABELS: [&str; 6] = ["q_m", "p_m", "q_a", "p_a", "q_c", "p_c"];

/// Labels for the quadratures of a list of modes, in order.
pub fn labels_for(modes: &[Mode]) -> Vec<String> {
    modes
        .iter()
        .flat_map(|m| [format!("q_{}", m.suffix()), format!("p_{}", m.suffix())])
        .collect()
}

/// Symplectic form `⊕ [[0, 1], [−1, 0]]` for `n_modes` modes.
pub fn symplectic_form(n_modes: usize) -> nalgebra::DMatrix<f64> {
    let mut omega = nalgebra::DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Matrix6<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMatrix(pub Matrix6<f64>);

pub fn build_drift(p: &ModelParams) -> DriftMatrix {
    let mut m = Matrix6::zeros();
    // mirror
    m[(0, 0)] = -p.gamma;
    m[(0, 1)] = p.omega_m;
    m[(1, 0)] = -p.omega_m;
    m[(1, 1)] = -p.gamma;
    m[(1, 4)] = p.g_mc_eff;
    // condensate
    m[(2, 3)] = p.omega_a;
    m[(3, 2)] = -p.omega_a;
    m[(3, 4)] = -p.g_ac_eff;
    // cavity
    m[(4, 4)] = -p.kappa;
    m[(4, 5)] = p.delta;
    m[(5, 0)] = p.g_mc_eff;
    m[(5, 2)] = -p.g_ac_eff;
    m[(5, 4)] = -p.delta;
    m[(5, 5)] = -p.kappa;
    DriftMatrix(m)
}

/// `D = diag(γ(2n_th+1), γ(2n_th+1), 0, 0, κ(2n_c+1), κ(2n_c+1))`.
///
/// The condensate has no bath of its own.
pub fn build_diffusion(p: &ModelParams) -> DiffusionMatrix {
    let mech = p.gamma * (2.0 * p.n_th + 1.0);
    let cav = p.kappa * (2.0 * p.n_c + 1.0);
    DiffusionMatrix(Matrix6::from_diagonal(&nalgebra::Vector6::new(
        mech, mech, 0.0, 0.0, cav, cav,
    )))
}

/// Relative width of the band around zero abscissa treated as marginal.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// All eigenvalue real parts strictly negative, outside the marginal band.
    pub is_stable: bool,
    /// Spectral abscissa within `±1e-9·‖M‖_F` of zero.
    pub is_marginal: bool,
    /// Eigenvalues of M as `[re, im]`, sorted by real then imaginary part.
    pub eigenvalues: Vec<[f64; 2]>,
    pub spectral_abscissa: f64,
    /// Left-hand side of `(Δ² + κ²) ω_m ω_a − Δ (G_mc² + G_ac²) > 0`, when
    /// the model parameters are known.
    pub reduced_condition_value: Option<f64>,
    pub reduced_condition_pass: Option<bool>,
}

impl StabilityReport {
    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|[re, im]| re.hypot(*im))
            .fold(0.0, f64::max)
    }

    /// Error describing why a steady state does not exist, if any.
    pub fn require_stable(&self) -> Result<()> {
        if self.is_stable {
            Ok(())
        } else if self.is_marginal {
            Err(Error::Marginal {
                abscissa: self.spectral_abscissa,
            })
        } else {
            Err(Error::Unstable {
                abscissa: self.spectral_abscissa,
            })
        }
    }
}

/// Eigenvalues of a real 6×6 matrix via a real Schur decomposition.
pub fn eigenvalues(m: &Matrix6<f64>) -> Result<Vec<[f64; 2]>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite drift matrix: {m}")));
    }
    let schur = Schur::try_new(*m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical(format!("eigenvalue iteration did not converge for {m}")))?;
    let mut ev: Vec<[f64; 2]> = schur.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    ev.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    Ok(ev)
}

/// Authoritative stability check from the eigenvalues of M.
///
/// When `params` is given, the reduced algebraic condition is evaluated
/// alongside as a diagnostic; it never decides stability.
pub fn check_stability_eigen(m: &DriftMatrix, params: Option<&ModelParams>) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues(&m.0)?;
    let abscissa = eigenvalues.iter().map(|e| e[0]).fold(f64::NEG_INFINITY, f64::max);
    let band = MARGINAL_TOLERANCE * m.0.norm();
    let is_marginal = abscissa.abs() <= band;
    let (value, pass) = match params.map(check_stability_reduced) {
        Some((v, p)) => (Some(v), Some(p)),
        None => (None, None),
    };
    Ok(StabilityReport {
        is_stable: abscissa < 0.0 && !is_marginal,
        is_marginal,
        eigenvalues,
        spectral_abscissa: abscissa,
        reduced_condition_value: value,
        reduced_condition_pass: pass,
    })
}

/// The reduced stability predicate `(Δ² + κ²) ω_m ω_a − Δ (G_mc² + G_ac²) > 0`.
///
/// It neglects mechanical damping and is reported for comparison only.
pub fn check_stability_reduced(p: &ModelParams) -> (f64, bool) {
    let value = (p.delta * p.delta + p.kappa * p.kappa) * p.omega_m * p.omega_a
        - p.delta * (p.g_mc_eff * p.g_mc_eff + p.g_ac_eff * p.g_ac_eff);
    (value, value > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams {
            omega_m: 1.0,
            omega_a: 1.1,
            gamma: 0.01,
            kappa: 0.7,
            delta: 1.3,
            g_mc_eff: 0.2,
            g_ac_eff: 0.15,
            n_th: 0.3,
            n_c: 0.0,
        }
    }

    #[test]
    fn sparsity_pattern() {
        let m = build_drift(&params()).0;
        let nz: Vec<(usize, usize)> = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != 0.0)
            .collect();
        assert_eq!(
            nz,
            vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 4), (2, 3), (3, 2), (3, 4), (4, 4), (4, 5), (5, 0), (5, 2), (5, 4), (5, 5)]
        );
        // With γ = 0 the mirror diagonal drops out.
        let mut p = params();
        p.gamma = 0.0;
        assert_eq!(build_drift(&p).0.iter().filter(|v| **v != 0.0).count(), 12);
    }

    #[test]
    fn decoupled_is_block_diagonal() {
        let mut p = params();
        p.g_mc_eff = 0.0;
        p.g_ac_eff = 0.0;
        let m = build_drift(&p).0;
        for i in 0..6 {
            for j in 0..6 {
                if i / 2 != j / 2 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        let ev = eigenvalues(&m).unwrap();
        let expected = [
            [-p.kappa, -p.delta],
            [-p.kappa, p.delta],
            [-p.gamma, -p.omega_m],
            [-p.gamma, p.omega_m],
            [0.0, -p.omega_a],
            [0.0, p.omega_a],
        ];
        for (e, x) in ev.iter().zip(expected.iter()) {
            assert!((e[0] - x[0]).abs() < 1e-12 && (e[1] - x[1]).abs() < 1e-12, "{ev:?}");
        }
        // the undamped condensate makes the decoupled system marginal
        let r = check_stability_eigen(&build_drift(&p), Some(&p)).unwrap();
        assert!(!r.is_stable);
        assert!(r.is_marginal);
        assert!(matches!(r.require_stable(), Err(Error::Marginal { .. })));
    }

    #[test]
    fn minus_identity_is_stable() {
        let r = check_stability_eigen(&DriftMatrix(-Matrix6::identity()), None).unwrap();
        assert!(r.is_stable);
        assert!((r.spectral_abscissa + 1.0).abs() < 1e-14);
        assert!(r.reduced_condition_value.is_none());
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        let mut m = Matrix6::identity();
        m[(0, 0)] = f64::NAN;
        assert!(matches!(check_stability_eigen(&DriftMatrix(m), None), Err(Error::Numerical(_))));
    }

    #[test]
    fn diffusion_entries() {
        let mut p = params();
        p.n_th = 0.0;
        let d = build_diffusion(&p).0;
        assert_eq!(d.diagonal().as_slice(), &[p.gamma, p.gamma, 0.0, 0.0, p.kappa, p.kappa]);
        p.gamma = 0.0;
        let d = build_diffusion(&p).0;
        assert_eq!(d.diagonal().as_slice(), &[0.0, 0.0, 0.0, 0.0, p.kappa, p.kappa]);
        p.gamma = 2.0;
        p.n_th = crate::params::thermal_occupation(2.0 * std::f64::consts::PI * 1e6, 10e-6);
        let d = build_diffusion(&p).0;
        assert!((d[(0, 0)] - 2.0 * (2.0 * 0.0083 + 1.0)).abs() < 1e-3);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 4);
    }

    #[test]
    fn reduced_condition_examples() {
        let mut p = params();
        p.g_mc_eff = 0.0;
        p.g_ac_eff = 0.0;
        let (v, ok) = check_stability_reduced(&p);
        assert_eq!(v, (p.delta.powi(2) + p.kappa.powi(2)) * p.omega_m * p.omega_a);
        assert!(ok);

        let mut p = params();
        p.delta = 0.0;
        p.g_mc_eff = 1e6;
        let (v, ok) = check_stability_reduced(&p);
        assert_eq!(v, p.kappa.powi(2) * p.omega_m * p.omega_a);
        assert!(ok);

        // Δ(G_mc² + G_ac²) = 2(Δ² + κ²) ω_m ω_a
        let mut p = params();
        let target = 2.0 * (p.delta.powi(2) + p.kappa.powi(2)) * p.omega_m * p.omega_a / p.delta;
        p.g_mc_eff = (target / 2.0).sqrt();
        p.g_ac_eff = (target / 2.0).sqrt();
        let (v, ok) = check_stability_reduced(&p);
        assert!(v < 0.0 && !ok);
    }

    /// Evaluates the complex linearized equations for (δb, δa, δc) and maps
    /// the time derivatives back to quadratures.
    fn complex_oracle(p: &ModelParams, r: &[f64; 6]) -> [f64; 6] {
        let s2 = std::f64::consts::SQRT_2;
        let i = Complex64::i();
        let op = |q: f64, pp: f64| Complex64::new(q, pp) / s2;
        let (b, a, c) = (op(r[0], r[1]), op(r[2], r[3]), op(r[4], r[5]));
        let re2 = |z: Complex64| 2.0 * z.re; // z + z†
        let db = -(p.gamma + i * p.omega_m) * b + i * p.g_mc_eff / 2.0 * re2(c);
        let da = -i * p.omega_a * a - i * p.g_ac_eff / 2.0 * re2(c);
        let dc = -(p.kappa + i * p.delta) * c + i * p.g_mc_eff / 2.0 * re2(b) - i * p.g_ac_eff / 2.0 * re2(a);
        let quad = |z: Complex64| (s2 * z.re, s2 * z.im);
        let (qb, pb) = quad(db);
        let (qa, pa) = quad(da);
        let (qc, pc) = quad(dc);
        [qb, pb, qa, pa, qc, pc]
    }

    proptest! {
        #[test]
        fn drift_matches_complex_equations(
            gamma in 0.0..1.0f64, kappa in 0.1..3.0f64, delta in -3.0..3.0f64,
            gmc in 0.0..2.0f64, gac in 0.0..2.0f64, wm in 0.1..3.0f64, wa in 0.1..3.0f64,
            r in proptest::array::uniform6(-2.0..2.0f64),
        ) {
            let p = ModelParams { omega_m: wm, omega_a: wa, gamma, kappa, delta, g_mc_eff: gmc, g_ac_eff: gac, n_th: 0.0, n_c: 0.0 };
            let m = build_drift(&p).0;
            let mr = m * nalgebra::Vector6::from_row_slice(&r);
            let oracle = complex_oracle(&p, &r);
            for k in 0..6 {
                prop_assert!((mr[k] - oracle[k]).abs() < 1e-12, "row {}: {} vs {}", k, mr[k], oracle[k]);
            }
        }
    }

    /// Characteristic polynomial coefficients `[1, c1, ..., c6]` of
    /// `det(λI − A)` by Faddeev–LeVerrier.
    fn char_poly(a: &Matrix6<f64>) -> [f64; 7] {
        let mut c = [0.0; 7];
        c[0] = 1.0;
        let mut mk = Matrix6::zeros();
        for k in 1..=6 {
            mk = a * mk + Matrix6::identity() * c[k - 1];
            c[k] = -(a * mk).trace() / k as f64;
        }
        c
    }

    /// Routh–Hurwitz: all leading principal minors of the Hurwitz matrix
    /// positive.
    fn routh_hurwitz_stable(c: &[f64; 7]) -> bool {
        let n = 6;
        let coef = |k: isize| if (0..=6).contains(&k) { c[k as usize] } else { 0.0 };
        let mut h = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = coef(2 * (j as isize) - i as isize + 1);
            }
        }
        (1..=n).all(|k| h.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
    }

    #[test]
    fn eigen_check_agrees_with_routh_hurwitz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut stable = 0;
        let mut unstable = 0;
        for _ in 0..2000 {
            let shift = rng.random_range(-0.5..1.5);
            let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0)) - Matrix6::identity() * shift;
            let r = check_stability_eigen(&DriftMatrix(a), None).unwrap();
            // skip samples too close to the boundary for the determinant test
            if r.spectral_abscissa.abs() < 1e-3 {
                continue;
            }
            assert_eq!(r.is_stable, routh_hurwitz_stable(&char_poly(&a)), "{a}");
            if r.is_stable { stable += 1 } else { unstable += 1 }
        }
        assert!(stable > 100 && unstable > 100, "{stable} / {unstable}");
    }
}
