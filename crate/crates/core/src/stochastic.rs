//! Monte-Carlo integration of the linear quadrature Langevin system and a
//! homodyne readout model through a weakly driven probe cavity.
//!
//! Random numbers come from ChaCha20 (`rand_chacha`), a counter-based
//! stream cipher generator. Each trajectory is identified by a
//! `(seed, stream)` pair: the 64-bit seed is expanded with
//! `SeedableRng::seed_from_u64` and the stream id selects an independent
//! keystream, so results do not depend on thread count or scheduling.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Matrix4, Matrix6, SMatrix, Vector4, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{check_stability_eigen, DiffusionMatrix, DriftMatrix, Mode, StabilityReport, QUADRATURE_LABELS};
use crate::entanglement::{analyze, ReducedState};
use crate::error::{Error, Result};
use crate::lyapunov::CovarianceMatrix;

/// Generator used for every noise stream.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64 + set_stream";

/// Largest `dt · ρ(M)` accepted by the Euler–Maruyama scheme.
pub const EULER_STEP_LIMIT: f64 = 0.05;

/// Independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        NoiseStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `R ← R + M R dt + √dt · L ξ` with `L Lᵗ = D`.
    #[default]
    EulerMaruyama,
    /// Exact Gaussian transition `R ← e^{M dt} R + η`, `η ~ N(0, Q(dt))`,
    /// with `Q` from Van Loan's block exponential. Unconditionally stable.
    ExactGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub horizon: f64,
    pub noise: NoiseStream,
    /// Store every `record_every`-th step (1 keeps all).
    pub record_every: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Quadrature samples in the order `q_m, p_m, q_a, p_a, q_c, p_c`.
    pub samples: Vec<[f64; 6]>,
    pub noise: NoiseStream,
    /// Integration step.
    pub dt: f64,
    /// Spacing of the stored samples.
    pub record_interval: f64,
}

/// Symmetric square root of a positive semidefinite matrix; small negative
/// eigenvalues from rounding are dropped.
fn psd_sqrt(m: &Matrix6<f64>) -> Matrix6<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut l = Matrix6::zeros();
    for k in 0..6 {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        l += v * v.transpose() * lam;
    }
    l
}

/// Exact one-step transition `(e^{M dt}, Q(dt))` by Van Loan's method.
pub fn exact_transition(m: &Matrix6<f64>, d: &Matrix6<f64>, dt: f64) -> (Matrix6<f64>, Matrix6<f64>) {
    let mut c = SMatrix::<f64, 12, 12>::zeros();
    c.fixed_view_mut::<6, 6>(0, 0).copy_from(&(-m * dt));
    c.fixed_view_mut::<6, 6>(0, 6).copy_from(&(d * dt));
    c.fixed_view_mut::<6, 6>(6, 6).copy_from(&(m.transpose() * dt));
    let e = c.exp();
    let f22 = e.fixed_view::<6, 6>(6, 6).into_owned();
    let f12 = e.fixed_view::<6, 6>(0, 6).into_owned();
    let phi = f22.transpose();
    let q = phi * f12;
    (phi, (q + q.transpose()) * 0.5)
}

pub fn simulate_trajectory(
    m: &DriftMatrix,
    d: &DiffusionMatrix,
    v0: Option<&CovarianceMatrix>,
    cfg: &TrajectoryConfig,
) -> Result<TrajectoryRecord> {
    let report = check_stability_eigen(m, None)?;
    report.require_stable()?;
    simulate_checked(m, d, v0, cfg, &report)
}

fn simulate_checked(
    m: &DriftMatrix,
    d: &DiffusionMatrix,
    v0: Option<&CovarianceMatrix>,
    cfg: &TrajectoryConfig,
    report: &StabilityReport,
) -> Result<TrajectoryRecord> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::validation("dt", format!("must be > 0, got {}", cfg.dt)));
    }
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::validation("horizon", format!("must be >= 0, got {}", cfg.horizon)));
    }
    if cfg.record_every == 0 {
        return Err(Error::validation("record_every", "must be at least 1"));
    }
    let rho = report.spectral_radius();
    if cfg.scheme == Scheme::EulerMaruyama && cfg.dt * rho > EULER_STEP_LIMIT {
        return Err(Error::StepSize(format!(
            "dt = {:e} exceeds {EULER_STEP_LIMIT}/ρ(M) = {:e}",
            cfg.dt,
            EULER_STEP_LIMIT / rho
        )));
    }

    let (propagator, noise_root) = match cfg.scheme {
        Scheme::EulerMaruyama => (
            Matrix6::identity() + m.0 * cfg.dt,
            psd_sqrt(&(d.0 * cfg.dt)),
        ),
        Scheme::ExactGaussian => {
            let (phi, q) = exact_transition(&m.0, &d.0, cfg.dt);
            (phi, psd_sqrt(&q))
        }
    };

    let mut rng = cfg.noise.rng();
    let normal = |rng: &mut ChaCha20Rng| -> Vector6<f64> { Vector6::from_fn(|_, _| StandardNormal.sample(rng)) };

    let mut r = match v0 {
        Some(v) => {
            if v.dim() != 6 {
                return Err(Error::validation("v0", "initial covariance must be 6×6"));
            }
            let v6 = Matrix6::from_fn(|i, j| v.matrix[(i, j)]);
            psd_sqrt(&v6) * normal(&mut rng)
        }
        None => Vector6::zeros(),
    };

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let capacity = steps / cfg.record_every + 1;
    let mut times = Vec::with_capacity(capacity);
    let mut samples = Vec::with_capacity(capacity);
    times.push(0.0);
    samples.push(to_array(&r));
    let limit = 1e150;
    for k in 1..=steps {
        r = propagator * r + noise_root * normal(&mut rng);
        if k % cfg.record_every == 0 {
            let n = r.norm();
            if !n.is_finite() || n > limit {
                return Err(Error::Numerical(format!("trajectory diverged at t = {:e}", k as f64 * cfg.dt)));
            }
            times.push(k as f64 * cfg.dt);
            samples.push(to_array(&r));
        }
    }
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("trajectory diverged".into()));
    }
    Ok(TrajectoryRecord {
        times,
        samples,
        noise: cfg.noise,
        dt: cfg.dt,
        record_interval: cfg.dt * cfg.record_every as f64,
    })
}

fn to_array(v: &Vector6<f64>) -> [f64; 6] {
    [v[0], v[1], v[2], v[3], v[4], v[5]]
}

/// Runs `count` trajectories on streams `first_stream..first_stream+count`
/// in parallel. Output order follows the stream index.
pub fn simulate_ensemble(
    m: &DriftMatrix,
    d: &DiffusionMatrix,
    v0: Option<&CovarianceMatrix>,
    cfg: &TrajectoryConfig,
    count: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let report = check_stability_eigen(m, None)?;
    report.require_stable()?;
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = *cfg;
            c.noise.stream = cfg.noise.stream + k;
            simulate_checked(m, d, v0, &c, &report)
        })
        .collect()
}

/// Largest Euler–Maruyama step whose stationary-variance bias stays below
/// `rel_bias`, capped by the stability limit `0.05/ρ(M)`.
///
/// For a mode with eigenvalue λ the scheme inflates the stationary variance
/// by about `|λ|² dt / (2 |Re λ|)`, so weakly damped oscillators need steps
/// far below the stability limit.
pub fn euler_step_for_bias(report: &StabilityReport, rel_bias: f64) -> f64 {
    let bias_limit = report
        .eigenvalues
        .iter()
        .map(|[re, im]| 2.0 * rel_bias * re.abs() / (re * re + im * im))
        .fold(f64::INFINITY, f64::min);
    bias_limit.min(EULER_STEP_LIMIT / report.spectral_radius())
}

/// Burn-in needed before samples count as stationary: `10/|abscissa|`.
pub fn minimum_burn_in(report: &StabilityReport) -> f64 {
    10.0 / report.spectral_abscissa.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Samples with `t < burn_in` are discarded.
    pub burn_in: f64,
    /// Contiguous batches per trajectory used for the batch-means error.
    pub batches_per_trajectory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub covariance: CovarianceMatrix,
    /// Batch-means standard error of each entry.
    pub std_error: CovarianceMatrix,
    pub samples: usize,
    pub batches: usize,
    /// `min_i 2 V_ii² / SE_ii²`, the smallest per-variance effective sample count.
    pub effective_samples: f64,
}

/// Pooled sample covariance after burn-in, with batch-means error bars.
pub fn ensemble_covariance(trajectories: &[TrajectoryRecord], opts: &EnsembleOptions) -> Result<EnsembleEstimate> {
    if opts.batches_per_trajectory == 0 {
        return Err(Error::validation("batches_per_trajectory", "must be at least 1"));
    }
    let mut batches: Vec<&[[f64; 6]]> = Vec::new();
    for traj in trajectories {
        let start = traj.times.partition_point(|&t| t < opts.burn_in);
        let kept = &traj.samples[start..];
        let per = kept.len() / opts.batches_per_trajectory;
        if per < 2 {
            continue;
        }
        batches.extend(kept.chunks_exact(per).take(opts.batches_per_trajectory));
    }
    if batches.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} usable batch(es) after burn-in {:e}; need at least 2 batches of 2 samples (add trajectories, extend the horizon or reduce batches)",
            batches.len(),
            opts.burn_in
        )));
    }

    let total: usize = batches.iter().map(|b| b.len()).sum();
    let mean = batches
        .iter()
        .flat_map(|b| b.iter())
        .fold(Vector6::zeros(), |acc, s| acc + Vector6::from_row_slice(s))
        / total as f64;

    let batch_cov: Vec<(Matrix6<f64>, usize)> = batches
        .par_iter()
        .map(|b| {
            let mut acc = Matrix6::zeros();
            for s in b.iter() {
                let x = Vector6::from_row_slice(s) - mean;
                acc += x * x.transpose();
            }
            (acc / b.len() as f64, b.len())
        })
        .collect();
    let pooled = batch_cov.iter().fold(Matrix6::zeros(), |acc, (c, n)| acc + c * (*n as f64)) / total as f64;
    let nb = batch_cov.len() as f64;
    let avg = batch_cov.iter().fold(Matrix6::zeros(), |acc, (c, _)| acc + c) / nb;
    let var = batch_cov
        .iter()
        .fold(Matrix6::zeros(), |acc, (c, _)| acc + (c - avg).component_mul(&(c - avg)))
        / (nb - 1.0);
    let se = var.map(|v| (v / nb).sqrt());
    let pooled = (pooled + pooled.transpose()) * 0.5;

    let effective_samples = (0..6)
        .filter(|&i| se[(i, i)] > 0.0)
        .map(|i| 2.0 * pooled[(i, i)].powi(2) / se[(i, i)].powi(2))
        .fold(f64::INFINITY, f64::min);

    Ok(EnsembleEstimate {
        covariance: CovarianceMatrix::full(pooled)?,
        std_error: CovarianceMatrix::full((se + se.transpose()) * 0.5)?,
        samples: total,
        batches: batch_cov.len(),
        effective_samples,
    })
}

/// Largest `|V̂_ij − V_ij| / SE_ij` over entries with a nonzero error bar,
/// and whether any entry with zero error bar differs.
pub fn max_z_score(estimate: &EnsembleEstimate, reference: &DMatrix<f64>) -> f64 {
    let v = &estimate.covariance.matrix;
    let se = &estimate.std_error.matrix;
    let mut worst: f64 = 0.0;
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            let diff = (v[(i, j)] - reference[(i, j)]).abs();
            let z = if se[(i, j)] > 0.0 {
                diff / se[(i, j)]
            } else if diff > 1e-12 * reference.norm().max(1e-300) {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(z);
        }
    }
    worst
}

/// Second (probe) cavity used as a readout of the mirror and condensate.
///
/// It is a pure readout map: its back-action on the system is neglected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeCavity {
    /// Decay rate κ₁.
    pub kappa: f64,
    /// Detuning Δ₁, also the rotating-frame frequency of the slow variables.
    pub detuning: f64,
    /// Effective mirror coupling G_mc1.
    pub g_mc: f64,
    /// Effective condensate coupling G_ac1.
    pub g_ac: f64,
}

/// Ratio by which Δ₁ must exceed κ₁, G_mc1 and G_ac1 for the slow-variable
/// readout to apply.
pub const PROBE_REGIME_RATIO: f64 = 10.0;

impl ProbeCavity {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::validation("probe.kappa", "must be > 0"));
        }
        if !(self.detuning.is_finite() && self.g_mc.is_finite() && self.g_ac.is_finite()) {
            return Err(Error::validation("probe", "detuning and couplings must be finite"));
        }
        Ok(())
    }

    /// `Δ₁ ≫ κ₁, G_mc1, G_ac1`.
    pub fn in_readout_regime(&self) -> bool {
        self.detuning >= PROBE_REGIME_RATIO * self.kappa.max(self.g_mc.abs()).max(self.g_ac.abs())
    }

    /// Weights `w` with `X_θ(t) = w · (q_m, p_m, q_a, p_a)(t) + noise`.
    ///
    /// The output is `c_out = (i/2κ₁)[G_mc1 b̃ − G_ac1 ã] + c_in` with
    /// `õ = o e^{iΔ₁t}` and `o = (q + ip)/√2`; the homodyne quadrature is
    /// `X_θ = √2 Re(c_out e^{−iθ})`.
    pub fn weights(&self, phase: f64, t: f64) -> [f64; 4] {
        let angle = self.detuning * t - phase;
        let gain = 1.0 / (2.0 * self.kappa);
        // c = i e^{i angle} / (2κ₁)
        let (re, im) = (-angle.sin() * gain, angle.cos() * gain);
        [self.g_mc * re, -self.g_mc * im, -self.g_ac * re, self.g_ac * im]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneRecord {
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
    pub phase: f64,
    pub probe: ProbeCavity,
    /// Variance of the vacuum input noise in each sample, `1/(2 Δt)`; zero
    /// for noiseless synthetic records.
    pub noise_variance: f64,
    pub noise: Option<NoiseStream>,
    pub in_readout_regime: bool,
}

fn readout(traj: &TrajectoryRecord, probe: &ProbeCavity, phase: f64) -> Result<Vec<f64>> {
    probe.validate()?;
    if !phase.is_finite() {
        return Err(Error::validation("phase", "must be finite"));
    }
    Ok(traj
        .times
        .iter()
        .zip(&traj.samples)
        .map(|(&t, s)| {
            let w = probe.weights(phase, t);
            w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + w[3] * s[3]
        })
        .collect())
}

/// Homodyne record of the probe output at local-oscillator phase `phase`.
///
/// Vacuum input noise is drawn from `noise`, which must be given and should
/// be independent of the trajectory's stream.
pub fn homodyne_output(
    traj: &TrajectoryRecord,
    probe: &ProbeCavity,
    phase: f64,
    noise: Option<NoiseStream>,
) -> Result<HomodyneRecord> {
    let noise = noise.ok_or_else(|| Error::validation("noise", "a probe noise seed is required"))?;
    if noise == traj.noise {
        return Err(Error::validation("noise", "probe noise must not reuse the trajectory stream"));
    }
    let mut samples = readout(traj, probe, phase)?;
    let noise_variance = 1.0 / (2.0 * traj.record_interval);
    let sd = noise_variance.sqrt();
    let mut rng = noise.rng();
    for s in samples.iter_mut() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        *s += sd * xi;
    }
    Ok(HomodyneRecord {
        times: traj.times.clone(),
        samples,
        phase,
        probe: *probe,
        noise_variance,
        noise: Some(noise),
        in_readout_regime: probe.in_readout_regime(),
    })
}

/// Noise-free readout, for synthetic checks of the inversion.
pub fn homodyne_signal(traj: &TrajectoryRecord, probe: &ProbeCavity, phase: f64) -> Result<HomodyneRecord> {
    Ok(HomodyneRecord {
        times: traj.times.clone(),
        samples: readout(traj, probe, phase)?,
        phase,
        probe: *probe,
        noise_variance: 0.0,
        noise: None,
        in_readout_regime: probe.in_readout_regime(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// Estimated mirror–condensate covariance `V'`.
    pub covariance: CovarianceMatrix,
    pub std_error: CovarianceMatrix,
    pub log_negativity: f64,
    /// Batch-means standard error of the logarithmic negativity.
    pub log_negativity_error: f64,
    pub batches: usize,
}

/// Least-squares inversion of the readout map.
///
/// At every sample time the records give `y = A(t) x + n` for the lab-frame
/// quadratures `x = (q_m, p_m, q_a, p_a)`. The quadratures are recovered as
/// `x̂ = A⁺ y`, their covariance is accumulated, and the known noise
/// contribution `A⁺ N A⁺ᵗ` is subtracted. Error bars come from `batches`
/// contiguous time batches.
pub fn reconstruct_correlations(records: &[HomodyneRecord], batches: usize) -> Result<CorrelationEstimate> {
    reconstruct_segments(&[records.to_vec()], batches)
}

/// As [`reconstruct_correlations`], pooling independent segments (for
/// example one per trajectory), each split into `batches_per_segment`
/// batches.
pub fn reconstruct_segments(segments: &[Vec<HomodyneRecord>], batches_per_segment: usize) -> Result<CorrelationEstimate> {
    if segments.is_empty() {
        return Err(Error::InsufficientSamples("no homodyne segments".into()));
    }
    if batches_per_segment == 0 {
        return Err(Error::validation("batches", "need at least 1 batch per segment"));
    }
    let mut quadratures = Vec::new();
    for records in segments {
        quadratures.push(invert_segment(records)?);
    }
    let total: usize = quadratures.iter().map(|(x, _)| x.len()).sum();
    let mean = quadratures.iter().flat_map(|(x, _)| x.iter()).fold(Vector4::zeros(), |a, x| a + x) / total as f64;

    let mut batch_cov: Vec<Matrix4<f64>> = Vec::new();
    for (xs, bias) in &quadratures {
        let per = xs.len() / batches_per_segment;
        if per < 2 {
            continue;
        }
        for (xb, bb) in xs.chunks_exact(per).zip(bias.chunks_exact(per)) {
            let mut acc = Matrix4::zeros();
            for (x, b) in xb.iter().zip(bb) {
                let d = x - mean;
                acc += d * d.transpose() - b;
            }
            let c = acc / per as f64;
            batch_cov.push((c + c.transpose()) * 0.5);
        }
    }
    if batch_cov.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{total} samples give {} usable batch(es); need at least 2 batches of 2 samples",
            batch_cov.len()
        )));
    }
    let nb = batch_cov.len() as f64;
    let est = batch_cov.iter().fold(Matrix4::zeros(), |a, c| a + c) / nb;
    let var = batch_cov
        .iter()
        .fold(Matrix4::zeros(), |a, c| a + (c - est).component_mul(&(c - est)))
        / (nb - 1.0);
    let se = var.map(|v| (v / nb).sqrt());

    let modes = [Mode::Mirror, Mode::Bec];
    let log_negativity = analyze(&ReducedState::from_matrix(est, modes)?)?.log_negativity;
    // Delete-one-batch jackknife; stays defined when single batches are too
    // noisy to be physical states.
    let mut jack = Vec::with_capacity(batch_cov.len());
    for c in &batch_cov {
        let without = (est * nb - c) / (nb - 1.0);
        jack.push(analyze(&ReducedState::from_matrix(without, modes)?)?.log_negativity);
    }
    let jm = jack.iter().sum::<f64>() / nb;
    let jvar = jack.iter().map(|e| (e - jm).powi(2)).sum::<f64>() * (nb - 1.0) / nb;

    Ok(CorrelationEstimate {
        covariance: CovarianceMatrix::new(DMatrix::from_column_slice(4, 4, est.as_slice()), &modes)?,
        std_error: CovarianceMatrix::new(DMatrix::from_column_slice(4, 4, se.as_slice()), &modes)?,
        log_negativity,
        log_negativity_error: jvar.sqrt(),
        batches: batch_cov.len(),
    })
}

/// Per-time quadrature estimates and their noise covariance.
type Inverted = (Vec<Vector4<f64>>, Vec<Matrix4<f64>>);

fn invert_segment(records: &[HomodyneRecord]) -> Result<Inverted> {
    let first = records
        .first()
        .ok_or_else(|| Error::RankDeficient { missing: vec!["at least four homodyne records".into()] })?;
    let n = first.times.len();
    if records.iter().any(|r| r.times != first.times || r.samples.len() != n) {
        return Err(Error::validation("records", "all records of a segment must share one time grid"));
    }
    if n == 0 {
        return Err(Error::InsufficientSamples("empty homodyne record".into()));
    }
    let design = |t: f64| DMatrix::from_fn(records.len(), 4, |k, j| records[k].probe.weights(records[k].phase, t)[j]);
    check_rank(&design(first.times[0]))?;
    let noise = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        records.len(),
        records.iter().map(|r| r.noise_variance),
    ));
    let mut xs = Vec::with_capacity(n);
    let mut bias = Vec::with_capacity(n);
    for i in 0..n {
        let a = design(first.times[i]);
        let pinv = a
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
        let y = nalgebra::DVector::from_iterator(records.len(), records.iter().map(|r| r.samples[i]));
        let x = &pinv * y;
        xs.push(Vector4::new(x[0], x[1], x[2], x[3]));
        let b = &pinv * &noise * pinv.transpose();
        bias.push(Matrix4::from_fn(|r, c| b[(r, c)]));
    }
    Ok((xs, bias))
}

fn check_rank(a: &DMatrix<f64>) -> Result<()> {
    let svd = a.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let vt = svd.v_t.expect("requested V^t");
    let labels = ["q_m", "p_m", "q_a", "p_a"];
    let mut missing = Vec::new();
    for k in 0..4 {
        let s = if k < svd.singular_values.len() { svd.singular_values[k] } else { 0.0 };
        if s > tol {
            continue;
        }
        // right singular vector of an (effectively) zero singular value
        let dir: Vec<String> = if k < vt.nrows() {
            (0..4)
                .filter(|&j| vt[(k, j)].abs() > 1e-6)
                .map(|j| format!("{:+.3}·{}", vt[(k, j)], labels[j]))
                .collect()
        } else {
            vec!["an additional independent quadrature".into()]
        };
        missing.push(format!("a record sensitive to {}", dir.join(" ")));
    }
    if a.nrows() < 4 && missing.is_empty() {
        missing.push(format!("{} more record(s)", 4 - a.nrows()));
    }
    if missing.is_empty() {
        Ok(())
    } else {
        if a.column(2).norm() == 0.0 && a.column(3).norm() == 0.0 {
            missing.push("a probe configuration with nonzero condensate coupling".into());
        }
        if a.column(0).norm() == 0.0 && a.column(1).norm() == 0.0 {
            missing.push("a probe configuration with nonzero mirror coupling".into());
        }
        Err(Error::RankDeficient { missing })
    }
}

/// Writes a trajectory as CSV: a `#` metadata line, a header naming the
/// quadratures, then one row per stored sample.
pub fn write_trajectory_csv(traj: &TrajectoryRecord, mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "# seed={} stream={} dt={:?} record_interval={:?}",
        traj.noise.seed, traj.noise.stream, traj.dt, traj.record_interval
    )?;
    writeln!(out, "t,{}", QUADRATURE_LABELS.join(","))?;
    for (t, s) in traj.times.iter().zip(&traj.samples) {
        write!(out, "{t:?}")?;
        for v in s {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_trajectory_csv(input: impl BufRead) -> Result<TrajectoryRecord> {
    let mut lines = input.lines();
    let bad = |msg: &str| Error::Parse(format!("trajectory CSV: {msg}"));
    let meta = lines.next().ok_or_else(|| bad("empty input"))?.map_err(|e| Error::Parse(e.to_string()))?;
    let mut seed = None;
    let mut stream = None;
    let mut dt = None;
    let mut interval = None;
    for kv in meta.trim_start_matches('#').split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed metadata"))?;
        match k {
            "seed" => seed = v.parse().ok(),
            "stream" => stream = v.parse().ok(),
            "dt" => dt = v.parse().ok(),
            "record_interval" => interval = v.parse().ok(),
            _ => {}
        }
    }
    let header = lines.next().ok_or_else(|| bad("missing header"))?.map_err(|e| Error::Parse(e.to_string()))?;
    if header != format!("t,{}", QUADRATURE_LABELS.join(",")) {
        return Err(bad("unexpected header"));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| bad("non-numeric field")))
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        times.push(vals[0]);
        samples.push([vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]]);
    }
    Ok(TrajectoryRecord {
        times,
        samples,
        noise: NoiseStream::new(seed.ok_or_else(|| bad("missing seed"))?, stream.ok_or_else(|| bad("missing stream"))?),
        dt: dt.ok_or_else(|| bad("missing dt"))?,
        record_interval: interval.ok_or_else(|| bad("missing record_interval"))?,
    })
}


/// Phases used with each probe by [`cross_validate`].
pub const STANDARD_PHASES: [f64; 2] = [0.0, std::f64::consts::FRAC_PI_2];

/// Two probe configurations, `(G, G)` and `(G, −G)`, which together with
/// [`STANDARD_PHASES`] make the readout map invertible.
///
/// They sit in the readout regime (`Δ₁ = ω_m`, couplings `Δ₁/10`) with a
/// gain `G₁/2κ₁` chosen so the signal is not buried in the input noise of
/// samples spaced `dt` apart.
pub fn standard_probes(omega_m: f64, dt: f64) -> [ProbeCavity; 2] {
    let coupling = omega_m.abs() / PROBE_REGIME_RATIO;
    let noise_sd = (1.0 / (2.0 * dt)).sqrt();
    let gain = (3.0 * noise_sd).max(0.5);
    let kappa = coupling / (2.0 * gain);
    [
        ProbeCavity { kappa, detuning: omega_m.abs(), g_mc: coupling, g_ac: coupling },
        ProbeCavity { kappa, detuning: omega_m.abs(), g_mc: coupling, g_ac: -coupling },
    ]
}

/// Settings for [`cross_validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationOptions {
    pub scheme: Scheme,
    /// Integration step in units of `1/|abscissa|`; `None` picks
    /// `0.25/|abscissa|` for the exact scheme and a 1 % bias step for
    /// Euler–Maruyama.
    pub dt_scale: Option<f64>,
    pub trajectories: usize,
    /// Length of each trajectory after burn-in, in units of `1/|abscissa|`.
    pub horizon_scale: f64,
    pub batches_per_trajectory: usize,
    pub seed: u64,
}

impl Default for CrossValidationOptions {
    fn default() -> Self {
        CrossValidationOptions {
            scheme: Scheme::ExactGaussian,
            dt_scale: None,
            trajectories: 8,
            horizon_scale: 5_000.0,
            batches_per_trajectory: 25,
            seed: 20_240_901,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub lyapunov: CovarianceMatrix,
    pub ensemble: EnsembleEstimate,
    /// Largest elementwise `|V̂ − V| / SE`.
    pub max_z: f64,
    /// `‖V̂ − V‖_F / ‖V‖_F`.
    pub relative_error: f64,
    pub lyapunov_log_negativity: f64,
    pub homodyne: CorrelationEstimate,
    pub probes: [ProbeCavity; 2],
    pub covariance_pass: bool,
    pub log_negativity_pass: bool,
}

/// Compares the Lyapunov steady state with a Monte-Carlo ensemble and with
/// the covariance reconstructed from simulated probe-cavity homodyne
/// records.
///
/// The covariance passes when every entry lies within three reported
/// standard errors; the logarithmic negativity passes when the homodyne
/// estimate lies within three propagated standard errors.
pub fn cross_validate(
    m: &DriftMatrix,
    d: &DiffusionMatrix,
    omega_m: f64,
    opts: &CrossValidationOptions,
) -> Result<CrossValidationReport> {
    let report = check_stability_eigen(m, None)?;
    report.require_stable()?;
    let lyapunov = crate::lyapunov::solve_steady_covariance(m, d)?;
    let rate = report.spectral_abscissa.abs();
    let dt = match (opts.scheme, opts.dt_scale) {
        (_, Some(s)) => s / rate,
        (Scheme::ExactGaussian, None) => 0.25 / rate,
        (Scheme::EulerMaruyama, None) => euler_step_for_bias(&report, 0.01),
    };
    let burn_in = minimum_burn_in(&report);
    let cfg = TrajectoryConfig {
        dt,
        horizon: burn_in + opts.horizon_scale / rate,
        noise: NoiseStream::new(opts.seed, 0),
        record_every: 1,
        scheme: opts.scheme,
    };
    let v0 = CovarianceMatrix::full(Matrix6::identity() * 0.5)?;
    let trajectories = simulate_ensemble(m, d, Some(&v0), &cfg, opts.trajectories)?;
    let ensemble = ensemble_covariance(
        &trajectories,
        &EnsembleOptions { burn_in, batches_per_trajectory: opts.batches_per_trajectory },
    )?;
    let max_z = max_z_score(&ensemble, &lyapunov.matrix);
    let relative_error = (&ensemble.covariance.matrix - &lyapunov.matrix).norm() / lyapunov.matrix.norm();
    let lyapunov_log_negativity =
        analyze(&crate::entanglement::reduce_to_modes(&lyapunov, [Mode::Mirror, Mode::Bec])?)?.log_negativity;

    let probes = standard_probes(omega_m, dt);
    let mut segments = Vec::with_capacity(trajectories.len());
    for (k, traj) in trajectories.iter().enumerate() {
        let start = traj.times.partition_point(|&t| t < burn_in);
        let tail = TrajectoryRecord {
            times: traj.times[start..].to_vec(),
            samples: traj.samples[start..].to_vec(),
            ..traj.clone()
        };
        let mut records = Vec::with_capacity(4);
        for (p, probe) in probes.iter().enumerate() {
            for (h, phase) in STANDARD_PHASES.into_iter().enumerate() {
                // streams above 2³² never collide with trajectory streams
                let stream = (1u64 << 32) + 4 * k as u64 + 2 * p as u64 + h as u64;
                records.push(homodyne_output(&tail, probe, phase, Some(NoiseStream::new(opts.seed, stream)))?);
            }
        }
        segments.push(records);
    }
    let homodyne = reconstruct_segments(&segments, opts.batches_per_trajectory)?;

    let covariance_pass = max_z <= 3.0;
    let log_negativity_pass =
        (homodyne.log_negativity - lyapunov_log_negativity).abs() <= 3.0 * homodyne.log_negativity_error;
    Ok(CrossValidationReport {
        lyapunov,
        ensemble,
        max_z,
        relative_error,
        lyapunov_log_negativity,
        homodyne,
        probes,
        covariance_pass,
        log_negativity_pass,
    })
}
