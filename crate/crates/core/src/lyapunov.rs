//! Steady-state covariance from the Lyapunov equation `M V + V Mᵗ + D = 0`,
//! with a matrix-ODE integrator as an independent route to the same fixed
//! point.

use nalgebra::{DMatrix, DVector, Matrix6};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamics::{labels_for, DiffusionMatrix, DriftMatrix, Mode, MARGINAL_TOLERANCE};
use crate::entanglement::symplectic_spectrum;
use crate::error::{Error, Result};

/// Residual gate applied to every Lyapunov solution.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Symmetric covariance of quadrature fluctuations, in the convention
/// `V_ij = ⟨δR_i δR_j + δR_j δR_i⟩ / 2` (vacuum is `I/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub matrix: DMatrix<f64>,
    /// Quadrature label of each row, e.g. `q_m`.
    pub labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CovarianceRepr {
    ordering: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CovarianceRepr {
            ordering: self.labels.clone(),
            rows: self.rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CovarianceRepr::deserialize(d)?;
        let n = repr.ordering.len();
        if repr.rows.len() != n || repr.rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance rows do not match ordering"));
        }
        Ok(CovarianceMatrix {
            matrix: DMatrix::from_fn(n, n, |i, j| repr.rows[i][j]),
            labels: repr.ordering,
        })
    }
}

impl CovarianceMatrix {
    /// Wraps a matrix over the given modes; checks shape and symmetry.
    pub fn new(matrix: DMatrix<f64>, modes: &[Mode]) -> Result<Self> {
        let labels = labels_for(modes);
        if matrix.nrows() != labels.len() || matrix.ncols() != labels.len() {
            return Err(Error::validation(
                "covariance",
                format!("expected {0}×{0}, got {1}×{2}", labels.len(), matrix.nrows(), matrix.ncols()),
            ));
        }
        let cov = CovarianceMatrix { matrix, labels };
        if !cov.is_symmetric(1e-12) {
            return Err(Error::validation("covariance", "matrix is not symmetric"));
        }
        Ok(cov)
    }

    pub fn full(matrix: Matrix6<f64>) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(6, 6, matrix.as_slice()), &Mode::ALL)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.matrix.norm().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.transpose()).norm() <= rel_tol * scale
    }

    /// Uncertainty principle `V + (i/2) Ω ⪰ 0`, i.e. every symplectic
    /// eigenvalue at least `1/2 − tol`.
    pub fn is_physical(&self, tol: f64) -> Result<bool> {
        Ok(symplectic_spectrum(&self.matrix)?.iter().all(|&nu| nu >= 0.5 - tol))
    }
}

/// Largest real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix".into()));
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical(format!("eigenvalue iteration did not converge for {m}")))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn require_hurwitz(m: &DMatrix<f64>) -> Result<f64> {
    let a = spectral_abscissa(m)?;
    if a.abs() <= MARGINAL_TOLERANCE * m.norm() {
        Err(Error::Marginal { abscissa: a })
    } else if a > 0.0 {
        Err(Error::Unstable { abscissa: a })
    } else {
        Ok(a)
    }
}

/// `‖M V + V Mᵗ + D‖_F / ‖D‖_F`; the absolute norm when `D = 0`.
pub fn residual(m: &DMatrix<f64>, d: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let r = lyapunov_operator(m, v) + d;
    let dn = d.norm();
    if dn > 0.0 {
        r.norm() / dn
    } else {
        r.norm()
    }
}

fn lyapunov_operator(m: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    m * v + v * m.transpose()
}

/// Solves `M V + V Mᵗ = −D` for a strictly Hurwitz `M` of any size.
///
/// Uses the vectorized form `(I ⊗ M + M ⊗ I) vec V = −vec D`, solved by LU
/// after scaling by `‖M‖_F`, with two rounds of iterative refinement. The
/// result is symmetrized and must pass the residual gate.
pub fn solve_lyapunov(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || d.nrows() != n || d.ncols() != n {
        return Err(Error::validation("lyapunov", "drift and diffusion must be square and of equal size"));
    }
    require_hurwitz(m)?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite diffusion matrix".into()));
    }

    let scale = m.norm();
    let ms = m / scale;
    let id = DMatrix::<f64>::identity(n, n);
    let a = id.kronecker(&ms) + ms.kronecker(&id);
    let lu = a.clone().lu();
    let rhs = DVector::from_column_slice((-d / scale).as_slice());
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker system".into()))?;
    for _ in 0..2 {
        let r = &rhs - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let v = DMatrix::from_column_slice(n, n, x.as_slice());
    let v = (&v + v.transpose()) * 0.5;

    let res = residual(m, d, &v);
    let gate = if d.norm() > 0.0 { RESIDUAL_TOLERANCE } else { RESIDUAL_TOLERANCE * scale };
    if !(res <= gate) {
        return Err(Error::Numerical(format!("Lyapunov residual {res:e} exceeds {RESIDUAL_TOLERANCE:e}")));
    }
    Ok(v)
}

/// Steady-state covariance of the full three-mode system.
pub fn solve_steady_covariance(m: &DriftMatrix, d: &DiffusionMatrix) -> Result<CovarianceMatrix> {
    let v = solve_lyapunov(&to_dynamic(&m.0), &to_dynamic(&d.0))?;
    CovarianceMatrix::new(v, &Mode::ALL)
}

pub fn to_dynamic(m: &Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}

/// Default step for [`integrate_covariance`]: `0.01/|abscissa|`, reduced to
/// `0.5/ρ(M)` when the spectrum is stiff so that the explicit scheme stays
/// stable.
pub fn default_integration_step(m: &DMatrix<f64>) -> Result<f64> {
    let a = require_hurwitz(m)?;
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    let rho = schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((0.01 / a.abs()).min(0.5 / rho))
}

/// Integrates `dV/dt = M V + V Mᵗ + D` from `v0` over `horizon` with the
/// classical fourth-order Runge–Kutta scheme at fixed step `dt` (the last
/// step is shortened to land on `horizon`).
pub fn integrate_covariance(
    m: &DMatrix<f64>,
    d: &DMatrix<f64>,
    v0: &DMatrix<f64>,
    horizon: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", format!("must be > 0, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::validation("horizon", format!("must be >= 0, got {horizon}")));
    }
    let f = |v: &DMatrix<f64>| lyapunov_operator(m, v) + d;
    let limit = 1e8 * (1.0 + v0.norm() + d.norm() * horizon.max(dt));
    let mut v = v0.clone();
    let mut t = 0.0;
    while t < horizon {
        let h = dt.min(horizon - t);
        let k1 = f(&v);
        let k2 = f(&(&v + &k1 * (h / 2.0)));
        let k3 = f(&(&v + &k2 * (h / 2.0)));
        let k4 = f(&(&v + &k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t += h;
        let norm = v.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::StepSize(format!(
                "covariance norm blew up at t = {t:e}; retry with dt smaller than {dt:e}"
            )));
        }
    }
    Ok((&v + v.transpose()) * 0.5)
}
