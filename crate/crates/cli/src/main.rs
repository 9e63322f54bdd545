use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bec_mirror::constants::check_pinned_version;
use bec_mirror::dynamics::{build_diffusion, build_drift, check_stability_eigen, Mode};
use bec_mirror::effective::effective_model;
use bec_mirror::entanglement::reduce_to_modes;
use bec_mirror::params::{ModelParams, PhysicalInput};
use bec_mirror::pipeline::{analyze_model, operating_point};
use bec_mirror::stochastic::{
    cross_validate, homodyne_output, reconstruct_correlations, simulate_trajectory, standard_probes,
    write_trajectory_csv, CrossValidationOptions, NoiseStream, Scheme, TrajectoryConfig, STANDARD_PHASES,
};
use bec_mirror::sweep::{run_sweep, write_to_path, Axis, Format, SweepSpec};

/// Steady-state mirror–condensate entanglement in a driven optical cavity.
#[derive(Parser)]
#[command(name = "bec-mirror", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Physical configuration (JSON). Defaults to the built-in reference point.
    #[arg(long, conflicts_with = "model")]
    config: Option<PathBuf>,
    /// Model parameters (JSON) used directly, bypassing the physical derivation.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Frequencies in the configuration and on the command line are in Hz.
    #[arg(long)]
    hz: bool,
    /// Override the effective detuning.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Derived parameters, mean fields and model parameters.
    Derive(Source),
    /// Eigenvalue stability report with the reduced condition as a diagnostic.
    Stability(Source),
    /// Steady-state covariance matrix.
    Covariance(Source),
    /// Symplectic eigenvalues, logarithmic negativity and separability.
    Entangle(Source),
    /// Effective mirror–condensate model after eliminating the cavity.
    Effective(Source),
    /// Grid sweep over one or two parameters.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// `name:min:max:points[:log]`, given once or twice.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
    },
    /// Compare the Lyapunov steady state with a Monte-Carlo ensemble.
    SdeVerify {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        mc: MonteCarlo,
    },
    /// Simulate probe-cavity homodyne records and reconstruct the covariance.
    HomodyneSim {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        mc: MonteCarlo,
        /// Write the homodyne records as CSV.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Write the simulated trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutFormat,
    },
}

#[derive(Args, Clone)]
struct MonteCarlo {
    #[arg(long, default_value_t = 20_240_901)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    trajectories: usize,
    /// Trajectory length after burn-in, in units of the slowest decay time.
    #[arg(long, default_value_t = 5000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 25)]
    batches: usize,
    #[arg(long, value_enum, default_value = "exact")]
    scheme: SchemeArg,
}

impl MonteCarlo {
    fn options(&self) -> CrossValidationOptions {
        CrossValidationOptions {
            scheme: match self.scheme {
                SchemeArg::Euler => Scheme::EulerMaruyama,
                SchemeArg::Exact => Scheme::ExactGaussian,
            },
            dt_scale: None,
            trajectories: self.trajectories,
            horizon_scale: self.horizon,
            batches_per_trajectory: self.batches,
            seed: self.seed,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn physical_input(src: &Source) -> Result<PhysicalInput> {
    let mut input = match &src.config {
        Some(p) => PhysicalInput::from_json(&read(p)?).with_context(|| format!("in {}", p.display()))?,
        None => PhysicalInput::reference(),
    };
    if src.hz {
        if src.config.is_none() {
            bail!("--hz applies to a --config file; the reference point is already in rad/s");
        }
        input = input.hz_to_angular();
    }
    if let Some(d) = src.delta {
        let scale = if src.hz { 2.0 * std::f64::consts::PI } else { 1.0 };
        input.set("effective_detuning", d * scale)?;
    }
    input.validate()?;
    Ok(input)
}

fn model(src: &Source) -> Result<ModelParams> {
    match &src.model {
        Some(p) => {
            let mut m: ModelParams = serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
            if src.hz {
                let s = 2.0 * std::f64::consts::PI;
                for f in [&mut m.omega_m, &mut m.omega_a, &mut m.gamma, &mut m.kappa, &mut m.delta, &mut m.g_mc_eff, &mut m.g_ac_eff] {
                    *f *= s;
                }
            }
            if let Some(d) = src.delta {
                m.delta = if src.hz { d * 2.0 * std::f64::consts::PI } else { d };
            }
            m.validate()?;
            Ok(m)
        }
        None => Ok(operating_point(&physical_input(src)?)?.model),
    }
}

fn print(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    check_pinned_version()?;
    match cli.command {
        Command::Derive(src) => {
            if src.model.is_some() {
                bail!("derive needs a physical configuration, not --model");
            }
            let point = operating_point(&physical_input(&src)?)?;
            print(&serde_json::to_value(point)?)?;
        }
        Command::Stability(src) => {
            let p = model(&src)?;
            print(&serde_json::to_value(check_stability_eigen(&build_drift(&p), Some(&p))?)?)?;
        }
        Command::Covariance(src) => {
            let a = analyze_model(&model(&src)?)?;
            print(&json!({ "covariance": a.covariance, "residual": a.residual }))?;
        }
        Command::Entangle(src) => {
            let a = analyze_model(&model(&src)?)?;
            print(&json!({ "reduced": a.reduced, "entanglement": a.entanglement }))?;
        }
        Command::Effective(src) => {
            print(&serde_json::to_value(effective_model(&model(&src)?)?)?)?;
        }
        Command::Sweep { source, axes, out, format } => {
            if source.model.is_some() {
                bail!("sweep runs on a physical configuration; use --config");
            }
            let base = physical_input(&source)?;
            let axes = axes.iter().map(|a| a.parse::<Axis>()).collect::<Result<Vec<_>, _>>()?;
            let spec = SweepSpec::new(base, axes, source.hz)?;
            let result = run_sweep(&spec)?;
            let format = match format {
                OutFormat::Csv => Format::Csv,
                OutFormat::Json => Format::Json,
            };
            write_to_path(&result, format, &out)?;
            let failed = result.rows.iter().filter(|r| !r.evaluated()).count();
            if failed > 0 {
                eprintln!("{failed} of {} points could not be evaluated", result.rows.len());
                return Ok(ExitCode::from(3));
            }
        }
        Command::SdeVerify { source, mc } => {
            let p = model(&source)?;
            let report = cross_validate(&build_drift(&p), &build_diffusion(&p), p.omega_m, &mc.options())?;
            print(&json!({
                "covariance_pass": report.covariance_pass,
                "log_negativity_pass": report.log_negativity_pass,
                "max_z": report.max_z,
                "relative_error": report.relative_error,
                "effective_samples": report.ensemble.effective_samples,
                "lyapunov_log_negativity": report.lyapunov_log_negativity,
                "homodyne_log_negativity": report.homodyne.log_negativity,
                "homodyne_log_negativity_error": report.homodyne.log_negativity_error,
                "lyapunov": report.lyapunov,
                "ensemble": report.ensemble,
            }))?;
            if !(report.covariance_pass && report.log_negativity_pass) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::HomodyneSim { source, mc, records, trajectory, format } => {
            homodyne_sim(&model(&source)?, &mc, records.as_deref(), trajectory.as_deref(), format)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn homodyne_sim(
    p: &ModelParams,
    mc: &MonteCarlo,
    records_out: Option<&Path>,
    trajectory_out: Option<&Path>,
    format: OutFormat,
) -> Result<()> {
    let m = build_drift(p);
    let d = build_diffusion(p);
    let stability = check_stability_eigen(&m, Some(p))?;
    stability.require_stable()?;
    let rate = stability.spectral_abscissa.abs();
    let dt = 0.25 / rate;
    let cfg = TrajectoryConfig {
        dt,
        horizon: 10.0 / rate + mc.horizon / rate,
        noise: NoiseStream::new(mc.seed, 0),
        record_every: 1,
        scheme: match mc.scheme {
            SchemeArg::Euler => Scheme::EulerMaruyama,
            SchemeArg::Exact => Scheme::ExactGaussian,
        },
    };
    let mut traj = simulate_trajectory(&m, &d, None, &cfg)?;
    let start = traj.times.partition_point(|&t| t < 10.0 / rate);
    traj.times.drain(..start);
    traj.samples.drain(..start);
    if let Some(path) = trajectory_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trajectory_csv(&traj, BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut records = Vec::new();
    for (k, probe) in standard_probes(p.omega_m, dt).iter().enumerate() {
        for (h, phase) in STANDARD_PHASES.into_iter().enumerate() {
            let noise = NoiseStream::new(mc.seed, (1u64 << 32) + 2 * k as u64 + h as u64);
            records.push(homodyne_output(&traj, probe, phase, Some(noise))?);
        }
    }
    if let Some(path) = records_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "t,{}", (1..=records.len()).map(|i| format!("X{i}")).collect::<Vec<_>>().join(","))?;
        for i in 0..traj.times.len() {
            write!(w, "{:?}", traj.times[i])?;
            for r in &records {
                write!(w, ",{:?}", r.samples[i])?;
            }
            writeln!(w)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    let estimate = reconstruct_correlations(&records, mc.batches.max(2))?;
    let lyapunov = reduce_to_modes(&analyze_model(p)?.covariance, [Mode::Mirror, Mode::Bec])?;
    match format {
        OutFormat::Json => print(&json!({
            "probes": records.iter().map(|r| json!({ "probe": r.probe, "phase": r.phase, "noise": r.noise, "in_readout_regime": r.in_readout_regime })).collect::<Vec<_>>(),
            "reconstructed": estimate,
            "lyapunov": lyapunov,
        }))?,
        OutFormat::Csv => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "row,col,estimate,std_error,lyapunov")?;
            let l = lyapunov.matrix();
            for i in 0..4 {
                for j in 0..4 {
                    writeln!(
                        out,
                        "{},{},{:?},{:?},{:?}",
                        estimate.covariance.labels[i],
                        estimate.covariance.labels[j],
                        estimate.covariance.matrix[(i, j)],
                        estimate.std_error.matrix[(i, j)],
                        l[(i, j)]
                    )?;
                }
            }
            writeln!(out, "E_N,,{:?},{:?},", estimate.log_negativity, estimate.log_negativity_error)?;
        }
    }
    Ok(())
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<bec_mirror::Error>().map(|e| e.code()).unwrap_or("ERROR");
            eprintln!("error [{code}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
