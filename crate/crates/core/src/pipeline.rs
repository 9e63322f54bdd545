//! End-to-end evaluation of one operating point.

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_diffusion, build_drift, check_stability_eigen, Mode, StabilityReport};
use crate::effective::{effective_model, EffectiveModel};
use crate::entanglement::{analyze, reduce_to_modes, EntanglementResult, ReducedState};
use crate::error::{Error, Result};
use crate::lyapunov::{residual, solve_steady_covariance, to_dynamic, CovarianceMatrix};
use crate::params::{
    derive_parameters, self_consistent_detuning, steady_state_field, CavitySteadyState, DerivedParams,
    DetuningSpec, ModelParams, PhysicalInput,
};

/// Parameters at a fixed operational detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub derived: DerivedParams,
    pub steady: CavitySteadyState,
    pub model: ModelParams,
}

/// Resolves the detuning and mean fields for an input.
///
/// A bare detuning is solved self-consistently; when the mean-field
/// equations are bistable the point is rejected instead of picking a branch.
pub fn operating_point(input: &PhysicalInput) -> Result<OperatingPoint> {
    let derived = derive_parameters(input)?;
    let delta = match input.detuning()? {
        DetuningSpec::Effective(d) => d,
        DetuningSpec::Bare(d0) => {
            let roots = self_consistent_detuning(&derived, d0)?;
            match roots.as_slice() {
                [only] => only.delta,
                many => {
                    return Err(Error::Domain(format!(
                        "bare detuning {d0} admits {} mean-field branches; give `effective_detuning` instead",
                        many.len()
                    )))
                }
            }
        }
    };
    let steady = steady_state_field(&derived, delta)?;
    let model = ModelParams::from_steady_state(&derived, delta, &steady);
    model.validate()?;
    Ok(OperatingPoint { derived, steady, model })
}

/// Steady-state covariance and entanglement for a set of model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateAnalysis {
    pub stability: StabilityReport,
    pub covariance: CovarianceMatrix,
    pub residual: f64,
    pub reduced: ReducedState,
    pub entanglement: EntanglementResult,
}

pub fn analyze_model(p: &ModelParams) -> Result<SteadyStateAnalysis> {
    p.validate()?;
    let m = build_drift(p);
    let d = build_diffusion(p);
    let stability = check_stability_eigen(&m, Some(p))?;
    stability.require_stable()?;
    let covariance = solve_steady_covariance(&m, &d)?;
    let residual = residual(&to_dynamic(&m.0), &to_dynamic(&d.0), &covariance.matrix);
    let reduced = reduce_to_modes(&covariance, [Mode::Mirror, Mode::Bec])?;
    let entanglement = analyze(&reduced)?;
    Ok(SteadyStateAnalysis {
        stability,
        covariance,
        residual,
        reduced,
        entanglement,
    })
}

/// Everything computed at one point; the analysis is absent when no
/// steady state exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub point: OperatingPoint,
    pub stability: StabilityReport,
    pub analysis: Option<SteadyStateAnalysis>,
    pub effective: Option<EffectiveModel>,
}

/// Runs the full pipeline for one input. Instability is reported in the
/// result rather than as an error.
pub fn evaluate(input: &PhysicalInput) -> Result<PointEvaluation> {
    let point = operating_point(input)?;
    let stability = check_stability_eigen(&build_drift(&point.model), Some(&point.model))?;
    let analysis = if stability.is_stable {
        Some(analyze_model(&point.model)?)
    } else {
        None
    };
    let effective = effective_model(&point.model).ok();
    Ok(PointEvaluation {
        point,
        stability,
        analysis,
        effective,
    })
}
