use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, ValueEnum};
use photonwave_core::closedform;
use photonwave_core::detection::{DetectorBank, DetectorModel, FrequencyResponse, TimeResponse};
use photonwave_core::metrics::{hom_coincidence, worst_case_search, GateSetup, RolePackets, SearchConfig, SearchResult, Shifts};
use photonwave_core::network::{build_cnot, CircuitDescription, CnotReflectivities, LinearCircuit};
use photonwave_core::spectral::{parse_packet_spec, SpectralAmplitude};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{sha256_hex, write_csv, RunManifest};
use crate::sweep::Sweep;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dist {
    Gaussian,
    Lorentzian,
    Dc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Control,
    Target,
    Ancilla,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ports {
    /// Every conditioned port (v1, v2, a1, a2).
    All,
    /// Only the ancilla ports; vacuum ports stay ideal.
    Ancilla,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(group(ArgGroup::new("grid").required(true).args(["tau_sweep", "eps_sweep"])))]
pub struct HomArgs {
    #[arg(long, value_enum)]
    pub dist: Dist,
    #[arg(long)]
    pub kappa: f64,
    /// Bandwidth of the second photon (defaults to kappa).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Conversion efficiency for dc packets (metadata only).
    #[arg(long, default_value_t = 1.0)]
    pub chi: f64,
    #[arg(long)]
    pub tau_sweep: Option<Sweep>,
    #[arg(long)]
    pub eps_sweep: Option<Sweep>,
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateArgs {
    /// Input packet shared by all roles, e.g. `gaussian(kappa=1)`.
    #[arg(long, default_value = "gaussian(kappa=1)")]
    pub packet: String,
    /// Circuit description file; the built-in CNOT when absent.
    #[arg(long)]
    pub circuit: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, env = "PHOTONWAVE_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Golden-section polish of the Monte Carlo minimum.
    #[arg(long)]
    pub refine: bool,
    #[arg(long, value_enum, default_value_t = Ports::All)]
    pub ports: Ports,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotArgs {
    #[arg(long, value_enum)]
    pub shift: Role,
    #[arg(long)]
    pub tau_sweep: Sweep,
    /// Counter model, e.g. `ideal`, `gauss(bw=5)`, `window(half=2)+gauss(bw=5)`.
    #[arg(long, default_value = "ideal")]
    pub detector: String,
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(group(ArgGroup::new("grid").required(true).args(["bandwidth_sweep", "window_sweep"])))]
pub struct DetectorArgs {
    #[arg(long)]
    pub bandwidth_sweep: Option<Sweep>,
    #[arg(long)]
    pub window_sweep: Option<Sweep>,
    #[command(flatten)]
    pub gate: GateArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn packet(dist: Dist, kappa: f64, chi: f64) -> Result<SpectralAmplitude, CliError> {
    Ok(match dist {
        Dist::Gaussian => SpectralAmplitude::gaussian(kappa)?,
        Dist::Lorentzian => SpectralAmplitude::lorentzian(kappa)?,
        Dist::Dc => SpectralAmplitude::down_conversion(kappa, chi)?,
    })
}

fn oracle_bandwidth(dist: Dist) -> fn(f64, f64) -> f64 {
    match dist {
        Dist::Gaussian => closedform::gaussian_bandwidth,
        Dist::Lorentzian => closedform::lorentzian_bandwidth,
        Dist::Dc => closedform::dc_bandwidth,
    }
}

fn oracle_delay(dist: Dist) -> fn(f64, f64) -> f64 {
    match dist {
        Dist::Gaussian => closedform::gaussian_time,
        Dist::Lorentzian => closedform::lorentzian_time,
        Dist::Dc => closedform::dc_time,
    }
}

/// Rows of the `hom` table.
pub fn hom_rows(args: &HomArgs) -> Result<(Vec<&'static str>, Vec<Vec<f64>>), CliError> {
    let eps = args.eps.unwrap_or(args.kappa);
    let first = packet(args.dist, args.kappa, args.chi)?;
    let (grid, by_delay) = match (args.tau_sweep, args.eps_sweep) {
        (Some(s), None) => (s, true),
        (None, Some(s)) => (s, false),
        _ => return Err(usage("give exactly one of --tau-sweep and --eps-sweep")),
    };
    if args.oracle && by_delay && eps != args.kappa {
        return Err(usage("the closed-form delay oracle needs equal bandwidths (omit --eps or set it to --kappa)"));
    }
    let rows: Vec<Vec<f64>> = grid
        .points()
        .into_par_iter()
        .map(|x| -> Result<Vec<f64>, CliError> {
            let (second, oracle) = if by_delay {
                (packet(args.dist, eps, args.chi)?.shifted(x)?, oracle_delay(args.dist)(args.kappa, x))
            } else {
                (packet(args.dist, x, args.chi)?, oracle_bandwidth(args.dist)(x, args.kappa))
            };
            let c = hom_coincidence(&first, &second)?;
            let mut row = vec![x, c];
            if args.oracle {
                row.extend([oracle, (c - oracle).abs()]);
            }
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec!["param", "coincidence"];
    if args.oracle {
        header.extend(["oracle", "abs_err"]);
    }
    Ok((header, rows))
}

fn load_circuit(path: Option<&Path>) -> Result<LinearCircuit, CliError> {
    match path {
        None => Ok(build_cnot(&CnotReflectivities::default())?),
        Some(p) => Ok(CircuitDescription::parse(&std::fs::read_to_string(p)?)?.to_circuit()?),
    }
}

fn bank(model: DetectorModel, ports: Ports, circuit: &LinearCircuit) -> Result<DetectorBank, CliError> {
    Ok(match ports {
        Ports::All => DetectorBank::uniform(model),
        Ports::Ancilla => {
            let r = circuit.roster();
            DetectorBank::default().with_port(r.index("a1")?, model).with_port(r.index("a2")?, model)
        }
    })
}

fn search(gate: &GateArgs, circuit: &LinearCircuit, base: &SpectralAmplitude, shifts: Shifts, model: DetectorModel) -> Result<SearchResult, CliError> {
    let setup = GateSetup::new(circuit.clone(), RolePackets::uniform(base.clone()), shifts, bank(model, gate.ports, circuit)?)?;
    let config = SearchConfig { samples: gate.samples, seed: gate.seed, refine: gate.refine };
    Ok(worst_case_search(&setup, &config)?)
}

fn gate_inputs(gate: &GateArgs) -> Result<(LinearCircuit, SpectralAmplitude), CliError> {
    if gate.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let base_dir = gate.circuit.as_deref().and_then(Path::parent);
    Ok((load_circuit(gate.circuit.as_deref())?, parse_packet_spec(&gate.packet, base_dir)?))
}

pub const CNOT_HEADER: [&str; 11] = [
    "tau",
    "f_min",
    "p_min",
    "argmin_alpha_re",
    "argmin_alpha_im",
    "argmin_beta_re",
    "argmin_beta_im",
    "argmin_gamma_re",
    "argmin_gamma_im",
    "argmin_delta_re",
    "argmin_delta_im",
];

pub fn cnot_rows(args: &CnotArgs) -> Result<Vec<Vec<f64>>, CliError> {
    let (circuit, base) = gate_inputs(&args.gate)?;
    let model: DetectorModel = args.detector.parse()?;
    args.tau_sweep
        .points()
        .into_par_iter()
        .map(|tau| {
            let mut shifts = Shifts::default();
            match args.shift {
                Role::Control => shifts.control = tau,
                Role::Target => shifts.target = tau,
                Role::Ancilla => shifts.ancilla = tau,
            }
            let r = search(&args.gate, &circuit, &base, shifts, model)?;
            let mut row = vec![tau, r.f_min, r.p_min];
            for a in r.argmin_f.amplitudes() {
                row.extend([a.re, a.im]);
            }
            Ok(row)
        })
        .collect()
}

pub fn detector_rows(args: &DetectorArgs) -> Result<Vec<Vec<f64>>, CliError> {
    let (circuit, base) = gate_inputs(&args.gate)?;
    let (grid, make): (Sweep, fn(f64) -> DetectorModel) = match (args.bandwidth_sweep, args.window_sweep) {
        (Some(s), None) => (s, |b| DetectorModel { frequency: FrequencyResponse::GaussianBand { bandwidth: b }, time: TimeResponse::Always }),
        (None, Some(s)) => (s, |h| DetectorModel { frequency: FrequencyResponse::Flat, time: TimeResponse::RectWindow { half_width: h } }),
        _ => return Err(usage("give exactly one of --bandwidth-sweep and --window-sweep")),
    };
    if grid.start <= 0.0 {
        return Err(usage("detector sweeps must start above zero"));
    }
    grid.points()
        .into_par_iter()
        .map(|x| {
            let model = make(x);
            model.frequency.validate()?;
            model.time.validate()?;
            let r = search(&args.gate, &circuit, &base, Shifts::default(), model)?;
            Ok(vec![x, r.f_min, r.p_min])
        })
        .collect()
}

/// Writes `rows` to `out` and the manifest beside it.
pub fn emit<P: Serialize>(command: &str, params: &P, out: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<RunManifest, CliError> {
    let bytes = write_csv(out, header, rows)?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let outputs = BTreeMap::from([(name, sha256_hex(&bytes))]);
    let manifest = RunManifest::new(command, serde_json::to_value(params)?, outputs)?;
    manifest.write(out)?;
    Ok(manifest)
}
