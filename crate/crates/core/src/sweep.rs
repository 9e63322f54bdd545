//! Parameter sweeps over the full pipeline, emitted as CSV or JSON tables.
//!
//! Every grid point re-derives all dependent quantities (zero-point
//! amplitude, couplings, photon number, effective couplings) from the
//! modified [`PhysicalInput`]. Because derivation is a pure function of the
//! input, sweeping any single knob gives the same values as recomputing only
//! its downstream dependents:
//!
//! ```text
//! mirror_mass ─┬─> x0 ─> g_mc ─┐
//! cavity_length┘               ├─> G_mc, G_ac ─> M
//! laser_power, finesse ─> E, κ ┼─> n ─┘
//! effective_detuning ──────────┘
//! temperature ─> n_th ─> D
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::CONSTANTS_VERSION;
use crate::error::{Error, Result};
use crate::params::{PhysicalInput, FREQUENCY_FIELDS};
use crate::pipeline::evaluate;

pub const SCHEMA_VERSION: &str = "bec-mirror-sweep/1";

/// Status code of a successfully evaluated, stable point.
pub const CODE_OK: &str = "OK";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// One sweep axis, `name:min:max:points[:log]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Name as written by the user; used as the column header.
    pub label: String,
    /// Configuration field the axis sets.
    pub field: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: Scale,
}

/// Short names accepted for model-level quantities, mapped to the input
/// field that sets them directly.
const ALIASES: &[(&str, &str)] = &[
    ("delta", "effective_detuning"),
    ("delta0", "bare_detuning"),
    ("g_mc", "mirror_coupling"),
    ("g_ac", "bec_coupling"),
    ("omega_m", "mirror_frequency"),
    ("omega_a", "bec_frequency"),
    ("gamma", "mirror_damping"),
    ("kappa", "cavity_decay"),
    ("n_c", "photon_occupation"),
    ("T", "temperature"),
    ("m", "mirror_mass"),
    ("P", "laser_power"),
    ("L", "cavity_length"),
];

/// Quantities computed from the inputs, which cannot be swept directly.
const DERIVED: &[&str] = &["G_mc", "G_ac", "n_th", "n", "x0", "E"];

pub fn resolve_field(name: &str) -> Result<&'static str> {
    if DERIVED.contains(&name) {
        return Err(Error::validation(
            name,
            "is derived from other inputs; sweep the inputs that determine it",
        ));
    }
    if let Some((_, field)) = ALIASES.iter().find(|(a, _)| *a == name) {
        return Ok(field);
    }
    let mut probe = PhysicalInput::reference();
    if probe.set(name, 1.0).is_ok() {
        // the reference input knows every field name; recover the static str
        return Ok(ALL_FIELDS.iter().find(|f| **f == name).expect("field list is complete"));
    }
    Err(Error::validation(name, "not a configuration field or known alias"))
}

const ALL_FIELDS: &[&str] = &[
    "cavity_length",
    "laser_wavelength",
    "laser_power",
    "finesse",
    "cavity_decay",
    "mirror_mass",
    "mirror_frequency",
    "mirror_damping",
    "temperature",
    "mirror_coupling",
    "bec_coupling",
    "lattice_depth",
    "atom_number",
    "effective_detuning",
    "bare_detuning",
    "recoil_frequency",
    "bec_frequency",
    "photon_occupation",
];

impl Axis {
    pub fn new(label: &str, min: f64, max: f64, points: usize, scale: Scale) -> Result<Self> {
        let field = resolve_field(label)?.to_string();
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::validation(label, "axis bounds must be finite"));
        }
        if points < 2 {
            return Err(Error::validation(label, format!("axis needs at least 2 points, got {points}")));
        }
        if scale == Scale::Log && !(min > 0.0 && max > 0.0) {
            return Err(Error::validation(label, "log axis needs positive bounds"));
        }
        Ok(Axis { label: label.to_string(), field, min, max, points, scale })
    }

    /// Grid values; endpoints are exact.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == n - 1 {
                    return self.max;
                }
                let f = i as f64 / (n - 1) as f64;
                match self.scale {
                    Scale::Linear => self.min + f * (self.max - self.min),
                    Scale::Log => (self.min.ln() + f * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = |why: &str| Error::Parse(format!("axis `{s}`: {why} (expected name:min:max:points[:log])"));
        if !(4..=5).contains(&parts.len()) {
            return Err(bad("wrong number of fields"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad("bounds must be numbers"));
        let points = parts[3].trim().parse::<usize>().map_err(|_| bad("points must be an integer"))?;
        let scale = match parts.get(4).map(|p| p.trim()) {
            None | Some("lin") | Some("linear") => Scale::Linear,
            Some("log") => Scale::Log,
            Some(_) => return Err(bad("scale must be `log` or `lin`")),
        };
        Axis::new(parts[0].trim(), num(parts[1])?, num(parts[2])?, points, scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Base configuration, in rad/s.
    pub base: PhysicalInput,
    pub axes: Vec<Axis>,
    /// Axis values of frequency fields are given in Hz.
    pub axes_in_hz: bool,
}

impl SweepSpec {
    pub fn new(base: PhysicalInput, axes: Vec<Axis>, axes_in_hz: bool) -> Result<Self> {
        if !(1..=2).contains(&axes.len()) {
            return Err(Error::validation("axes", format!("need 1 or 2 axes, got {}", axes.len())));
        }
        if axes.len() == 2 && axes[0].field == axes[1].field {
            return Err(Error::validation("axes", "both axes set the same field"));
        }
        base.validate()?;
        Ok(SweepSpec { base, axes, axes_in_hz })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major order (last axis fastest).
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for vals in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Input for one grid point.
    pub fn input_at(&self, point: &[f64]) -> Result<PhysicalInput> {
        let mut input = self.base.clone();
        for (axis, &v) in self.axes.iter().zip(point) {
            let scale = if self.axes_in_hz && FREQUENCY_FIELDS.contains(&axis.field.as_str()) {
                2.0 * std::f64::consts::PI
            } else {
                1.0
            };
            input.set(&axis.field, v * scale)?;
        }
        Ok(input)
    }

    /// SHA-256 of the canonical JSON form of the sweep definition.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        Sha256::digest(canonical.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// One table row. Quantities that do not exist at a point (for instance
/// E_N of an unstable point) are `None`, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_values: Vec<f64>,
    /// `OK`, `UNSTABLE`, `MARGINAL` or an error code.
    pub code: String,
    pub stable: Option<bool>,
    pub spectral_abscissa: Option<f64>,
    pub reduced_condition: Option<f64>,
    pub reduced_stable: Option<bool>,
    pub photon_number: Option<f64>,
    pub g_mc_eff: Option<f64>,
    pub g_ac_eff: Option<f64>,
    pub nu_minus: Option<f64>,
    pub nu_plus: Option<f64>,
    pub log_negativity: Option<f64>,
    pub sigma: Option<f64>,
    pub det: Option<f64>,
    pub g_ma: Option<f64>,
    pub omega_1: Option<f64>,
    pub omega_2: Option<f64>,
    pub entangling_regime: Option<bool>,
    pub message: Option<String>,
}

impl SweepRow {
    fn failed(axis_values: Vec<f64>, err: &Error) -> Self {
        SweepRow {
            axis_values,
            code: err.code().to_string(),
            stable: None,
            spectral_abscissa: None,
            reduced_condition: None,
            reduced_stable: None,
            photon_number: None,
            g_mc_eff: None,
            g_ac_eff: None,
            nu_minus: None,
            nu_plus: None,
            log_negativity: None,
            sigma: None,
            det: None,
            g_ma: None,
            omega_1: None,
            omega_2: None,
            entangling_regime: None,
            message: Some(err.to_string()),
        }
    }

    /// Whether the point was evaluated (stable or not) rather than failing.
    pub fn evaluated(&self) -> bool {
        matches!(self.code.as_str(), CODE_OK | "UNSTABLE" | "MARGINAL")
    }
}

/// Evaluates one input into a row.
pub fn evaluate_row(input: &PhysicalInput, axis_values: Vec<f64>) -> SweepRow {
    let eval = match evaluate(input) {
        Ok(e) => e,
        Err(e) => return SweepRow::failed(axis_values, &e),
    };
    let s = &eval.stability;
    let code = if s.is_stable {
        CODE_OK
    } else if s.is_marginal {
        "MARGINAL"
    } else {
        "UNSTABLE"
    };
    let ent = eval.analysis.as_ref().map(|a| &a.entanglement);
    let eff = eval.effective.as_ref();
    SweepRow {
        axis_values,
        code: code.to_string(),
        stable: Some(s.is_stable),
        spectral_abscissa: Some(s.spectral_abscissa),
        reduced_condition: s.reduced_condition_value,
        reduced_stable: s.reduced_condition_pass,
        photon_number: Some(eval.point.steady.photon_number),
        g_mc_eff: Some(eval.point.model.g_mc_eff),
        g_ac_eff: Some(eval.point.model.g_ac_eff),
        nu_minus: ent.map(|e| e.nu_minus),
        nu_plus: ent.map(|e| e.nu_plus),
        log_negativity: ent.map(|e| e.log_negativity),
        sigma: ent.map(|e| e.sigma),
        det: ent.map(|e| e.det),
        g_ma: eff.map(|e| e.g_ma),
        omega_1: eff.map(|e| e.omega_1),
        omega_2: eff.map(|e| e.omega_2),
        entangling_regime: eff.map(|e| e.g_ma.abs() >= eval.point.model.omega_m),
        message: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema: String,
    pub constants: String,
    pub config_sha256: String,
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn all_evaluated(&self) -> bool {
        self.rows.iter().all(SweepRow::evaluated)
    }

    /// Column names in emission order.
    pub fn columns(&self) -> Vec<String> {
        self.spec
            .axes
            .iter()
            .map(|a| a.label.clone())
            .chain(FIXED_COLUMNS.iter().map(|c| c.to_string()))
            .collect()
    }
}

const FIXED_COLUMNS: [&str; 18] = [
    "code",
    "stable",
    "spectral_abscissa",
    "reduced_condition",
    "reduced_stable",
    "photon_number",
    "G_mc",
    "G_ac",
    "nu_minus",
    "nu_plus",
    "E_N",
    "sigma",
    "det",
    "G_ma",
    "omega_1",
    "omega_2",
    "entangling_regime",
    "message",
];

/// Evaluates every grid point in parallel; rows keep grid order and
/// per-point failures are recorded in the row.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let rows = spec
        .grid()
        .into_par_iter()
        .map(|point| match spec.input_at(&point) {
            Ok(input) => evaluate_row(&input, point),
            Err(e) => SweepRow::failed(point, &e),
        })
        .collect();
    Ok(SweepResult {
        schema: SCHEMA_VERSION.to_string(),
        constants: CONSTANTS_VERSION.to_string(),
        config_sha256: spec.config_hash(),
        spec: spec.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Parse(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn flag(v: Option<bool>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn emit(result: &SweepResult, format: Format) -> Result<Vec<u8>> {
    if result.rows.is_empty() {
        return Err(Error::validation("result", "sweep result has no rows"));
    }
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(result).map_err(|e| Error::Parse(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => emit_csv(result),
    }
}

fn emit_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let spec_json = serde_json::to_string(&result.spec).map_err(|e| Error::Parse(e.to_string()))?;
    out.extend_from_slice(
        format!(
            "# schema: {}\n# constants: {}\n# config-sha256: {}\n# spec: {}\n",
            result.schema, result.constants, result.config_sha256, spec_json
        )
        .as_bytes(),
    );
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(result.columns()).map_err(io)?;
    for r in &result.rows {
        let mut rec: Vec<String> = r.axis_values.iter().map(|v| format!("{v:?}")).collect();
        rec.extend([
            r.code.clone(),
            flag(r.stable),
            num(r.spectral_abscissa),
            num(r.reduced_condition),
            flag(r.reduced_stable),
            num(r.photon_number),
            num(r.g_mc_eff),
            num(r.g_ac_eff),
            num(r.nu_minus),
            num(r.nu_plus),
            num(r.log_negativity),
            num(r.sigma),
            num(r.det),
            num(r.g_ma),
            num(r.omega_1),
            num(r.omega_2),
            flag(r.entangling_regime),
            r.message.clone().unwrap_or_default(),
        ]);
        w.write_record(&rec).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_to_path(result: &SweepResult, format: Format, path: &Path) -> Result<()> {
    let bytes = emit(result, format)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn parse_json(text: &str) -> Result<SweepResult> {
    let r: SweepResult = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if r.schema != SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported schema `{}`", r.schema)));
    }
    Ok(r)
}

pub fn parse_csv(text: &str) -> Result<SweepResult> {
    let mut meta = std::collections::HashMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim_start().split_once(": ") {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Parse(format!("missing `# {k}:` header")));
    let schema = get("schema")?;
    if schema != SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported schema `{schema}`")));
    }
    let spec: SweepSpec = serde_json::from_str(&get("spec")?).map_err(|e| Error::Parse(e.to_string()))?;
    let n_axes = spec.axes.len();

    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |msg: String| Error::Parse(format!("sweep CSV: {msg}"));
    let header: Vec<String> = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let expected: Vec<String> = spec
        .axes
        .iter()
        .map(|a| a.label.clone())
        .chain(FIXED_COLUMNS.iter().map(|c| c.to_string()))
        .collect();
    if header != expected {
        return Err(bad(format!("unexpected columns {header:?}")));
    }

    let opt_f = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(format!("bad number `{s}`")))
        }
    };
    let opt_b = |s: &str| -> Result<Option<bool>> {
        match s {
            "" => Ok(None),
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            other => Err(bad(format!("bad flag `{other}`"))),
        }
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f: Vec<&str> = rec.iter().collect();
        let axis_values = f[..n_axes]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad axis value `{s}`"))))
            .collect::<Result<_>>()?;
        let c = &f[n_axes..];
        rows.push(SweepRow {
            axis_values,
            code: c[0].to_string(),
            stable: opt_b(c[1])?,
            spectral_abscissa: opt_f(c[2])?,
            reduced_condition: opt_f(c[3])?,
            reduced_stable: opt_b(c[4])?,
            photon_number: opt_f(c[5])?,
            g_mc_eff: opt_f(c[6])?,
            g_ac_eff: opt_f(c[7])?,
            nu_minus: opt_f(c[8])?,
            nu_plus: opt_f(c[9])?,
            log_negativity: opt_f(c[10])?,
            sigma: opt_f(c[11])?,
            det: opt_f(c[12])?,
            g_ma: opt_f(c[13])?,
            omega_1: opt_f(c[14])?,
            omega_2: opt_f(c[15])?,
            entangling_regime: opt_b(c[16])?,
            message: if c[17].is_empty() { None } else { Some(c[17].to_string()) },
        });
    }
    Ok(SweepResult {
        schema,
        constants: get("constants")?,
        config_sha256: get("config-sha256")?,
        spec,
        rows,
    })
}
