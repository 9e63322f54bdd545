//! Physical constants (CODATA 2018 exact / recommended values).
//!
//! A single table is compiled in. The `BEC_MIRROR_CONSTANTS` environment
//! variable may pin the expected version; a mismatch is an error rather than
//! a silent fallback.

use crate::error::{Error, Result};

pub const CONSTANTS_VERSION: &str = "CODATA-2018";

/// Environment variable that pins the constants-table version.
pub const CONSTANTS_ENV: &str = "BEC_MIRROR_CONSTANTS";

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s (1.054571817e-34).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Checks the pinned constants version, if any, against the compiled table.
pub fn check_pinned_version() -> Result<&'static str> {
    match std::env::var(CONSTANTS_ENV) {
        Ok(v) if !v.is_empty() && v != CONSTANTS_VERSION => Err(Error::validation(
            CONSTANTS_ENV,
            format!("pinned version `{v}` but this build carries `{CONSTANTS_VERSION}`"),
        )),
        _ => Ok(CONSTANTS_VERSION),
    }
}
