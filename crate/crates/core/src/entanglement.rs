//! Gaussian entanglement of the mirror–condensate pair.
//!
//! For a two-mode covariance `V' = [[X, Z], [Zᵗ, Y]]` the partially
//! transposed symplectic eigenvalues are
//!
//! ```text
//! ν∓ = 2^{-1/2} { Σ ∓ [Σ² − 4 det V']^{1/2} }^{1/2},   Σ = det X + det Y − 2 det Z
//! ```
//!
//! and the logarithmic negativity is `E_N = max(0, −ln 2ν₋)`. The state is
//! entangled exactly when `ν₋ < 1/2`.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{symplectic_form, Mode};
use crate::error::{Error, Result};
use crate::lyapunov::CovarianceMatrix;

/// Values within this distance of a domain boundary are clamped.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// Symplectic eigenvalues of an arbitrary `2n × 2n` covariance, ascending.
///
/// Computed as the moduli of the eigenvalues of `Ω V`, which come in pairs
/// `±iν`.
pub fn symplectic_spectrum(v: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = v.nrows();
    if !n.is_multiple_of(2) || v.ncols() != n {
        return Err(Error::validation("covariance", "symplectic spectrum needs an even square matrix"));
    }
    let ov = symplectic_form(n / 2) * v;
    let schur = nalgebra::Schur::try_new(ov, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

/// Covariance of two modes with its 2×2 block views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub covariance: CovarianceMatrix,
    pub modes: [Mode; 2],
}

impl ReducedState {
    pub fn from_matrix(m: Matrix4<f64>, modes: [Mode; 2]) -> Result<Self> {
        let covariance = CovarianceMatrix::new(DMatrix::from_column_slice(4, 4, m.as_slice()), &modes)?;
        Ok(ReducedState { covariance, modes })
    }

    fn block(&self, r: usize, c: usize) -> Matrix2<f64> {
        self.covariance.matrix.fixed_view::<2, 2>(r, c).into_owned()
    }

    /// First-mode block.
    pub fn x(&self) -> Matrix2<f64> {
        self.block(0, 0)
    }

    /// Second-mode block.
    pub fn y(&self) -> Matrix2<f64> {
        self.block(2, 2)
    }

    /// Cross-correlation block.
    pub fn z(&self) -> Matrix2<f64> {
        self.block(0, 2)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        self.covariance.matrix.fixed_view::<4, 4>(0, 0).into_owned()
    }
}

/// Keeps the quadratures of two modes of a full 6×6 covariance.
pub fn reduce_to_modes(v: &CovarianceMatrix, keep: [Mode; 2]) -> Result<ReducedState> {
    if v.dim() != 6 {
        return Err(Error::validation("covariance", format!("expected 6×6, got {0}×{0}", v.dim())));
    }
    if keep[0] == keep[1] {
        return Err(Error::validation("keep", "the two retained modes must differ"));
    }
    let idx: Vec<usize> = keep.iter().flat_map(|m| [m.offset(), m.offset() + 1]).collect();
    let sub = DMatrix::from_fn(4, 4, |i, j| v.matrix[(idx[i], idx[j])]);
    Ok(ReducedState {
        covariance: CovarianceMatrix::new(sub, &keep)?,
        modes: keep,
    })
}

/// The pair `(ν₋, ν₊)` along with the invariants it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticPair {
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub sigma: f64,
    pub det: f64,
    /// A value sat just outside its domain and was clamped.
    pub clamped: bool,
}

fn pair_from_invariants(sigma: f64, det: f64) -> Result<SymplecticPair> {
    let mut clamped = false;
    let mut disc = sigma * sigma - 4.0 * det;
    if disc < 0.0 {
        if disc >= -CLAMP_TOLERANCE * sigma.mul_add(sigma, 1.0) {
            disc = 0.0;
            clamped = true;
        } else {
            return Err(Error::Domain(format!("negative discriminant Σ² − 4 det V' = {disc:e}")));
        }
    }
    let root = disc.sqrt();
    let upper = (sigma + root) / 2.0;
    if !(upper > 0.0) {
        return Err(Error::Domain(format!("non-positive ν₊² = {upper:e}")));
    }
    // ν₋² ν₊² = det V'; dividing avoids cancellation in Σ − √disc.
    let mut lower = det / upper;
    if lower < 0.0 {
        if lower >= -CLAMP_TOLERANCE * upper.max(1.0) {
            lower = 0.0;
            clamped = true;
        } else {
            return Err(Error::Domain(format!("negative ν₋² = {lower:e}")));
        }
    }
    Ok(SymplecticPair {
        nu_minus: lower.sqrt(),
        nu_plus: upper.sqrt(),
        sigma,
        det,
        clamped,
    })
}

/// Symplectic eigenvalues of the partially transposed state
/// (`Σ = det X + det Y − 2 det Z`).
pub fn symplectic_eigenvalues(v: &ReducedState) -> Result<SymplecticPair> {
    let sigma = v.x().determinant() + v.y().determinant() - 2.0 * v.z().determinant();
    pair_from_invariants(sigma, v.matrix().determinant())
}

/// Symplectic eigenvalues of the state itself (`+2 det Z`); both are at
/// least `1/2` for a physical state.
pub fn physical_symplectic_eigenvalues(v: &ReducedState) -> Result<SymplecticPair> {
    let sigma = v.x().determinant() + v.y().determinant() + 2.0 * v.z().determinant();
    pair_from_invariants(sigma, v.matrix().determinant())
}

fn negativity_from(nu_minus: f64) -> f64 {
    (-(2.0 * nu_minus).ln()).max(0.0)
}

pub fn logarithmic_negativity(v: &ReducedState) -> Result<f64> {
    Ok(negativity_from(symplectic_eigenvalues(v)?.nu_minus))
}

/// Simon's test: `true` when the state is separable (`ν₋ ≥ 1/2`).
pub fn simon_separability(v: &ReducedState) -> Result<bool> {
    Ok(symplectic_eigenvalues(v)?.nu_minus >= 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementResult {
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub log_negativity: f64,
    pub simon_separable: bool,
    pub sigma: f64,
    pub det: f64,
    pub clamped: bool,
}

pub fn analyze(v: &ReducedState) -> Result<EntanglementResult> {
    let pair = symplectic_eigenvalues(v)?;
    Ok(EntanglementResult {
        nu_minus: pair.nu_minus,
        nu_plus: pair.nu_plus,
        log_negativity: negativity_from(pair.nu_minus),
        simon_separable: pair.nu_minus >= 0.5,
        sigma: pair.sigma,
        det: pair.det,
        clamped: pair.clamped,
    })
}
