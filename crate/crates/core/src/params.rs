//! Parameter derivation from experimental inputs and classical mean fields.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Raw experimental knobs, as read from a JSON configuration file.
///
/// All frequencies are angular (rad/s). Several quantities can be supplied
/// in one of two forms; exactly one member of each pair must be present:
///
/// | pair | alternatives |
/// |------|--------------|
/// | cavity loss | `finesse` or `cavity_decay` |
/// | condensate coupling | `bec_coupling` or (`lattice_depth`, `atom_number`) |
/// | detuning | `effective_detuning` or `bare_detuning` |
/// | condensate frequency | `bec_frequency` or `recoil_frequency` |
///
/// `mirror_coupling`, when present, overrides the single-photon
/// optomechanical coupling otherwise derived from the mirror mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalInput {
    pub cavity_length: f64,
    pub laser_wavelength: f64,
    pub laser_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finesse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_decay: Option<f64>,
    pub mirror_mass: f64,
    pub mirror_frequency: f64,
    pub mirror_damping: f64,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror_coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bec_coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_detuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bare_detuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recoil_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bec_frequency: Option<f64>,
    /// Thermal photon number of the cavity bath; zero at optical frequencies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_occupation: Option<f64>,
}

/// Fields of [`PhysicalInput`] holding frequencies; scaled by 2π when a
/// configuration is given in Hz.
pub const FREQUENCY_FIELDS: &[&str] = &[
    "cavity_decay",
    "mirror_frequency",
    "mirror_damping",
    "mirror_coupling",
    "bec_coupling",
    "lattice_depth",
    "effective_detuning",
    "bare_detuning",
    "recoil_frequency",
    "bec_frequency",
];

/// How the cavity detuning is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetuningSpec {
    /// Operational detuning Δ, used directly.
    Effective(f64),
    /// Bare detuning Δ₀; Δ follows from the self-consistent mean-field shift.
    Bare(f64),
}

impl PhysicalInput {
    /// Canonical operating point: 1 mm cavity, 1000 nm / 50 mW drive,
    /// finesse 10⁴, 4 ng mirror at ω_m = 2π×1 MHz with γ = 2π×100 Hz,
    /// T = 10 μK, ω_a = ω_m and Δ = 2π×2 MHz.
    ///
    /// The mirror coupling is derived from the mass and the condensate
    /// coupling is set to 300 rad/s.
    pub fn reference() -> Self {
        let omega_m = 2.0 * PI * 1.0e6;
        PhysicalInput {
            cavity_length: 1.0e-3,
            laser_wavelength: 1000.0e-9,
            laser_power: 50.0e-3,
            finesse: Some(1.0e4),
            cavity_decay: None,
            mirror_mass: 4.0e-12,
            mirror_frequency: omega_m,
            mirror_damping: 2.0 * PI * 100.0,
            temperature: 10.0e-6,
            mirror_coupling: None,
            bec_coupling: Some(300.0),
            lattice_depth: None,
            atom_number: None,
            effective_detuning: Some(2.0 * PI * 2.0e6),
            bare_detuning: None,
            recoil_frequency: None,
            bec_frequency: Some(omega_m),
            photon_occupation: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let input: PhysicalInput =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        input.validate()?;
        Ok(input)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("PhysicalInput serializes")
    }

    /// Converts every frequency field from Hz to rad/s.
    pub fn hz_to_angular(mut self) -> Self {
        for name in FREQUENCY_FIELDS {
            if let Some(slot) = self.field_mut(name) {
                slot.scale(2.0 * PI);
            }
        }
        self
    }

    /// Reads a field by its configuration name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "cavity_length" => Some(self.cavity_length),
            "laser_wavelength" => Some(self.laser_wavelength),
            "laser_power" => Some(self.laser_power),
            "finesse" => self.finesse,
            "cavity_decay" => self.cavity_decay,
            "mirror_mass" => Some(self.mirror_mass),
            "mirror_frequency" => Some(self.mirror_frequency),
            "mirror_damping" => Some(self.mirror_damping),
            "temperature" => Some(self.temperature),
            "mirror_coupling" => self.mirror_coupling,
            "bec_coupling" => self.bec_coupling,
            "lattice_depth" => self.lattice_depth,
            "atom_number" => self.atom_number,
            "effective_detuning" => self.effective_detuning,
            "bare_detuning" => self.bare_detuning,
            "recoil_frequency" => self.recoil_frequency,
            "bec_frequency" => self.bec_frequency,
            "photon_occupation" => self.photon_occupation,
            _ => None,
        }
    }

    /// Sets a field by its configuration name. Setting one member of an
    /// alternative pair clears the other.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let partner: &[&str] = match name {
            "finesse" => &["cavity_decay"],
            "cavity_decay" => &["finesse"],
            "bec_coupling" => &["lattice_depth", "atom_number"],
            "lattice_depth" | "atom_number" => &["bec_coupling"],
            "effective_detuning" => &["bare_detuning"],
            "bare_detuning" => &["effective_detuning"],
            "bec_frequency" => &["recoil_frequency"],
            "recoil_frequency" => &["bec_frequency"],
            _ => &[],
        };
        match self.field_mut(name) {
            Some(slot) => slot.assign(value),
            None => return Err(Error::validation(name, "not a configuration field")),
        }
        for p in partner {
            if let Some(FieldSlot::Optional(o)) = self.field_mut(p) {
                *o = None;
            }
        }
        Ok(())
    }

    fn field_mut(&mut self, name: &str) -> Option<FieldSlot<'_>> {
        use FieldSlot::{Optional, Required};
        Some(match name {
            "cavity_length" => Required(&mut self.cavity_length),
            "laser_wavelength" => Required(&mut self.laser_wavelength),
            "laser_power" => Required(&mut self.laser_power),
            "finesse" => Optional(&mut self.finesse),
            "cavity_decay" => Optional(&mut self.cavity_decay),
            "mirror_mass" => Required(&mut self.mirror_mass),
            "mirror_frequency" => Required(&mut self.mirror_frequency),
            "mirror_damping" => Required(&mut self.mirror_damping),
            "temperature" => Required(&mut self.temperature),
            "mirror_coupling" => Optional(&mut self.mirror_coupling),
            "bec_coupling" => Optional(&mut self.bec_coupling),
            "lattice_depth" => Optional(&mut self.lattice_depth),
            "atom_number" => Optional(&mut self.atom_number),
            "effective_detuning" => Optional(&mut self.effective_detuning),
            "bare_detuning" => Optional(&mut self.bare_detuning),
            "recoil_frequency" => Optional(&mut self.recoil_frequency),
            "bec_frequency" => Optional(&mut self.bec_frequency),
            "photon_occupation" => Optional(&mut self.photon_occupation),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cavity_length", self.cavity_length),
            ("laser_wavelength", self.laser_wavelength),
            ("laser_power", self.laser_power),
            ("mirror_mass", self.mirror_mass),
            ("mirror_frequency", self.mirror_frequency),
            ("mirror_damping", self.mirror_damping),
        ] {
            positive(name, v)?;
        }
        non_negative("temperature", self.temperature)?;

        exactly_one("finesse", self.finesse, "cavity_decay", self.cavity_decay)?;
        if let Some(f) = self.finesse {
            positive("finesse", f)?;
        }
        if let Some(k) = self.cavity_decay {
            positive("cavity_decay", k)?;
        }

        let lattice = match (self.lattice_depth, self.atom_number) {
            (None, None) => None,
            (Some(u), Some(n)) => Some((u, n)),
            _ => {
                return Err(Error::validation(
                    "lattice_depth",
                    "`lattice_depth` and `atom_number` must be given together",
                ))
            }
        };
        match (self.bec_coupling, lattice) {
            (Some(g), None) => non_negative("bec_coupling", g)?,
            (None, Some((u, n))) => {
                non_negative("lattice_depth", u)?;
                non_negative("atom_number", n)?;
            }
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "bec_coupling",
                    "give either `bec_coupling` or (`lattice_depth`, `atom_number`), not both",
                ))
            }
            (None, None) => {
                return Err(Error::validation(
                    "bec_coupling",
                    "one of `bec_coupling` or (`lattice_depth`, `atom_number`) is required",
                ))
            }
        }

        exactly_one(
            "effective_detuning",
            self.effective_detuning,
            "bare_detuning",
            self.bare_detuning,
        )?;
        for (name, v) in [
            ("effective_detuning", self.effective_detuning),
            ("bare_detuning", self.bare_detuning),
        ] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }

        exactly_one(
            "bec_frequency",
            self.bec_frequency,
            "recoil_frequency",
            self.recoil_frequency,
        )?;
        if let Some(w) = self.bec_frequency {
            positive("bec_frequency", w)?;
        }
        if let Some(w) = self.recoil_frequency {
            positive("recoil_frequency", w)?;
        }

        if let Some(g) = self.mirror_coupling {
            non_negative("mirror_coupling", g)?;
        }
        if let Some(n) = self.photon_occupation {
            non_negative("photon_occupation", n)?;
        }
        Ok(())
    }

    pub fn detuning(&self) -> Result<DetuningSpec> {
        match (self.effective_detuning, self.bare_detuning) {
            (Some(d), None) => Ok(DetuningSpec::Effective(d)),
            (None, Some(d)) => Ok(DetuningSpec::Bare(d)),
            _ => Err(Error::validation(
                "effective_detuning",
                "exactly one of `effective_detuning` / `bare_detuning` is required",
            )),
        }
    }
}

enum FieldSlot<'a> {
    Required(&'a mut f64),
    Optional(&'a mut Option<f64>),
}

impl FieldSlot<'_> {
    fn assign(self, v: f64) {
        match self {
            FieldSlot::Required(r) => *r = v,
            FieldSlot::Optional(o) => *o = Some(v),
        }
    }

    fn scale(self, k: f64) {
        match self {
            FieldSlot::Required(r) => *r *= k,
            FieldSlot::Optional(o) => {
                if let Some(v) = o.as_mut() {
                    *v *= k;
                }
            }
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(name, format!("must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(name, format!("must be > 0, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(name, format!("must be >= 0, got {v}")))
    }
}

fn exactly_one(a: &str, va: Option<f64>, b: &str, vb: Option<f64>) -> Result<()> {
    match (va, vb) {
        (Some(_), None) | (None, Some(_)) => Ok(()),
        (Some(_), Some(_)) => Err(Error::validation(a, format!("give either `{a}` or `{b}`, not both"))),
        (None, None) => Err(Error::validation(a, format!("one of `{a}` or `{b}` is required"))),
    }
}

/// Quantities derived from a [`PhysicalInput`], before fixing the detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Laser angular frequency ω_p.
    pub omega_p: f64,
    /// Cavity amplitude decay rate κ.
    pub kappa: f64,
    /// Drive amplitude |E| (s⁻¹).
    pub drive: f64,
    /// Mechanical zero-point amplitude x₀ (m).
    pub zero_point: f64,
    /// Single-photon mirror–cavity coupling g_mc.
    pub g_mc: f64,
    /// Single-photon condensate–cavity coupling g_ac.
    pub g_ac: f64,
    pub omega_a: f64,
    pub omega_m: f64,
    pub gamma: f64,
    /// Thermal phonon number of the mirror bath.
    pub n_th: f64,
    /// Thermal photon number of the cavity bath.
    pub n_c: f64,
}

/// Bose–Einstein occupation `1/(exp(ħω/k_B T) − 1)`, zero at `T = 0`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega / (BOLTZMANN * temperature);
    1.0 / x.exp_m1()
}

/// Fabry–Pérot amplitude decay rate `κ = π c / (2 F L)`.
pub fn decay_from_finesse(finesse: f64, cavity_length: f64) -> f64 {
    PI * SPEED_OF_LIGHT / (2.0 * finesse * cavity_length)
}

pub fn derive_parameters(input: &PhysicalInput) -> Result<DerivedParams> {
    input.validate()?;

    let omega_p = 2.0 * PI * SPEED_OF_LIGHT / input.laser_wavelength;
    let kappa = match (input.finesse, input.cavity_decay) {
        (Some(f), _) => decay_from_finesse(f, input.cavity_length),
        (None, Some(k)) => k,
        (None, None) => unreachable!("validated"),
    };
    let drive = (2.0 * input.laser_power * kappa / (HBAR * omega_p)).sqrt();
    let zero_point = (HBAR / (2.0 * input.mirror_mass * input.mirror_frequency)).sqrt();
    let g_mc = input
        .mirror_coupling
        .unwrap_or(SQRT_2 * (omega_p / input.cavity_length) * zero_point);
    let g_ac = match (input.bec_coupling, input.lattice_depth, input.atom_number) {
        (Some(g), _, _) => g,
        (None, Some(u), Some(n)) => u * n.sqrt() / 2.0,
        _ => unreachable!("validated"),
    };
    let omega_a = match (input.bec_frequency, input.recoil_frequency) {
        (Some(w), _) => w,
        (None, Some(wr)) => 4.0 * wr,
        (None, None) => unreachable!("validated"),
    };

    Ok(DerivedParams {
        omega_p,
        kappa,
        drive,
        zero_point,
        g_mc,
        g_ac,
        omega_a,
        omega_m: input.mirror_frequency,
        gamma: input.mirror_damping,
        n_th: thermal_occupation(input.mirror_frequency, input.temperature),
        n_c: input.photon_occupation.unwrap_or(0.0),
    })
}

/// Classical steady state of the three modes at a fixed detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySteadyState {
    /// Intracavity photon number `|⟨c⟩|²`.
    pub photon_number: f64,
    /// Intracavity amplitude ⟨c⟩, serialized as `[re, im]`.
    pub field: Complex64,
    /// Condensate mean ⟨a⟩.
    pub bec_mean: Complex64,
    /// Mirror mean ⟨b⟩.
    pub mirror_mean: Complex64,
    /// Effective mirror coupling `G_mc = √2 g_mc |⟨c⟩|`.
    pub g_mc_eff: f64,
    /// Effective condensate coupling `G_ac = √2 g_ac |⟨c⟩|`.
    pub g_ac_eff: f64,
}

pub fn steady_state_field(derived: &DerivedParams, delta: f64) -> Result<CavitySteadyState> {
    positive("kappa", derived.kappa)?;
    finite("delta", delta)?;
    let kappa = derived.kappa;
    let e = derived.drive;
    let field = Complex64::new(e, 0.0) / Complex64::new(kappa, delta);
    let photon_number = e * e / (kappa * kappa + delta * delta);
    let bec_mean = Complex64::new(-derived.g_ac / (SQRT_2 * derived.omega_a) * photon_number, 0.0);
    let mirror_mean = Complex64::i() * derived.g_mc * photon_number
        / (SQRT_2 * Complex64::new(derived.gamma, derived.omega_m));
    let amplitude = photon_number.sqrt();
    Ok(CavitySteadyState {
        photon_number,
        field,
        bec_mean,
        mirror_mean,
        g_mc_eff: SQRT_2 * derived.g_mc * amplitude,
        g_ac_eff: SQRT_2 * derived.g_ac * amplitude,
    })
}

/// The reduced parameter set entering the linearized dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_m: f64,
    pub omega_a: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub delta: f64,
    /// Effective mirror–cavity coupling G_mc.
    pub g_mc_eff: f64,
    /// Effective condensate–cavity coupling G_ac.
    pub g_ac_eff: f64,
    pub n_th: f64,
    #[serde(default)]
    pub n_c: f64,
}

impl ModelParams {
    pub fn from_steady_state(derived: &DerivedParams, delta: f64, ss: &CavitySteadyState) -> Self {
        ModelParams {
            omega_m: derived.omega_m,
            omega_a: derived.omega_a,
            gamma: derived.gamma,
            kappa: derived.kappa,
            delta,
            g_mc_eff: ss.g_mc_eff,
            g_ac_eff: ss.g_ac_eff,
            n_th: derived.n_th,
            n_c: derived.n_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("omega_m", self.omega_m)?;
        positive("omega_a", self.omega_a)?;
        positive("kappa", self.kappa)?;
        non_negative("gamma", self.gamma)?;
        finite("delta", self.delta)?;
        non_negative("g_mc_eff", self.g_mc_eff)?;
        non_negative("g_ac_eff", self.g_ac_eff)?;
        non_negative("n_th", self.n_th)?;
        non_negative("n_c", self.n_c)
    }
}

/// One self-consistent solution of the detuning / photon-number equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningRoot {
    pub delta: f64,
    pub photon_number: f64,
    /// `|n (κ² + Δ²) − E²| / E²` (absolute when E = 0).
    pub residual: f64,
}

/// Total mean-field frequency shift per photon,
/// `ω_m g_mc² / (γ² + ω_m²) + g_ac² / ω_a`.
pub fn shift_per_photon(d: &DerivedParams) -> f64 {
    d.omega_m * d.g_mc * d.g_mc / (d.gamma * d.gamma + d.omega_m * d.omega_m)
        + d.g_ac * d.g_ac / d.omega_a
}

/// Solves `Δ = Δ₀ − K n` together with `n = E² / (κ² + Δ²)`.
///
/// Eliminating Δ gives the cubic `K² n³ − 2Δ₀K n² + (κ² + Δ₀²) n − E² = 0`.
/// Any real root satisfies `n (κ² + Δ²) = E²` and therefore lies in
/// `(0, E²/κ²]`; there are no negative real roots to discard when `E > 0`.
/// Roots are returned sorted by photon number.
pub fn self_consistent_detuning(derived: &DerivedParams, bare_detuning: f64) -> Result<Vec<DetuningRoot>> {
    positive("kappa", derived.kappa)?;
    finite("bare_detuning", bare_detuning)?;
    let k = shift_per_photon(derived);
    let kappa = derived.kappa;
    let e2 = derived.drive * derived.drive;

    if e2 == 0.0 {
        return Ok(vec![DetuningRoot {
            delta: bare_detuning,
            photon_number: 0.0,
            residual: 0.0,
        }]);
    }

    // Scaled variable x = n / n0 with n0 = E²/κ²; p(x) = a3 x³ + a2 x² + a1 x − 1.
    let n0 = e2 / (kappa * kappa);
    let s = k * n0 / kappa;
    let d = bare_detuning / kappa;
    let (a3, a2, a1) = (s * s, -2.0 * d * s, 1.0 + d * d);
    let p = |x: f64| ((a3 * x + a2) * x + a1) * x - 1.0;
    let dp = |x: f64| (3.0 * a3 * x + 2.0 * a2) * x + a1;

    let mut knots = vec![0.0];
    knots.extend(quadratic_roots(3.0 * a3, 2.0 * a2, a1).into_iter().filter(|&c| c > 0.0 && c < 1.0));
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);

    let mut xs: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (plo, phi) = (p(lo), p(hi));
        let scale = a3.abs() + a2.abs() + a1.abs() + 1.0;
        if phi.abs() <= 1e-14 * scale {
            xs.push(hi);
        } else if plo.signum() != phi.signum() && plo != 0.0 {
            xs.push(bisect(&p, lo, hi));
        }
    }
    // Newton polish; stays within bracket for simple roots.
    for x in xs.iter_mut() {
        for _ in 0..3 {
            let g = dp(*x);
            if g == 0.0 {
                break;
            }
            let step = p(*x) / g;
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));

    Ok(xs
        .into_iter()
        .map(|x| {
            let n = x * n0;
            let delta = bare_detuning - k * n;
            let residual = (n * (kappa * kappa + delta * delta) - e2).abs() / e2;
            DetuningRoot {
                delta,
                photon_number: n,
                residual,
            }
        })
        .collect())
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots of `a x² + b x + c`, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}
