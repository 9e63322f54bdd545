//! Steady-state entanglement between a Bose–Einstein condensate mode and a
//! nanomechanical mirror coupled through a driven optical cavity.
//!
//! The pipeline runs from raw experimental inputs to the logarithmic
//! negativity of the mirror–condensate pair:
//!
//! 1. [`params`] derives couplings, drive strength and thermal occupations,
//!    and the classical mean fields of the cavity.
//! 2. [`dynamics`] builds the 6×6 drift and diffusion matrices of the
//!    linearized quadrature fluctuations and decides stability.
//! 3. [`lyapunov`] solves `M V + V Mᵗ + D = 0` for the steady covariance.
//! 4. [`entanglement`] traces out the cavity and evaluates symplectic
//!    eigenvalues, the logarithmic negativity and the Simon test.
//!
//! [`effective`] evaluates the adiabatically eliminated two-mode couplings,
//! [`stochastic`] integrates the same linear system as an SDE (an
//! independent check on the covariance) and models homodyne readout through
//! a second probe cavity, and [`sweep`] drives grids of parameters through
//! the whole pipeline.

#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod dynamics;
pub mod effective;
pub mod entanglement;
pub mod error;
pub mod lyapunov;
pub mod params;
pub mod pipeline;
pub mod stochastic;
pub mod sweep;

pub use error::{Error, Result};
