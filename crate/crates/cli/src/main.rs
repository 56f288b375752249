use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use swaproute::characterize::{
    build_plan, calibrate, experiment_seed, infer_plan, run_experiment, CalibrationSet,
    CharacterizationPlan, Experiment, ExperimentRecord, ReadoutPlan, DEFAULT_SHOTS,
};
use swaproute::device::{
    make_boeblingen_like, make_line_like, make_two_path_fixture, line_edges, run_shots, DeviceModel, Program,
};
use swaproute::error::{CharacterizationError, DeviceError, FormatError, RouteError, TomographyError};
use swaproute::jsonl::{parse_jsonl, to_jsonl};
use swaproute::noise::GateLabel;
use swaproute::qstate::{parse_bitstring, PureState};
use swaproute::router::{shortest_route, Route, RouteRequest, RoutedState, WeightMode};
use swaproute::tomography::{expectations_from_counts, reconstruct, tomographic_fidelity, TomographyJob};
use swaproute::verify::{to_csv, verify_series, VerifyError, VerifyOptions, INPUTS};

#[derive(Parser, Debug)]
#[command(name = "swaproute", version, about = "Characterize a register, route states through it, and check the predictions")]
struct Cli {
    /// Device model JSON.
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Shots per circuit; defaults to the plan's value or 8192.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    shots: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory that relative paths are resolved against.
    #[arg(long, global = true, env = "SWAPROUTE_ROOT")]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fixture {
    /// Decay-biased line of `--qubits` qubits.
    Line,
    /// Noiseless line of `--qubits` qubits.
    NoiselessLine,
    /// Decay-biased 20-qubit hexagonal lattice.
    Boeblingen,
    /// Four qubits with two routes from 0 to 3.
    TwoPath,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    StateIndependent,
    StateDependent,
}

impl From<Mode> for WeightMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::StateIndependent => WeightMode::StateIndependent,
            Mode::StateDependent => WeightMode::StateDependent,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic device model.
    Device {
        #[arg(value_enum)]
        kind: Fixture,
        #[arg(long, default_value_t = 5)]
        qubits: usize,
    },
    /// Write the characterization plan as JSON lines and print its budget.
    Plan {
        /// Gates to characterize: cnot12, cnot21, swap, ident.
        #[arg(long, value_delimiter = ',', default_value = "cnot12,cnot21,swap")]
        gates: Vec<String>,
        /// Per-pair readout calibration on these pairs, e.g. `0-1,2-3`.
        #[arg(long, value_delimiter = ',')]
        readout_pairs: Vec<String>,
    },
    /// Execute a plan or a single program on the synthetic device.
    Run {
        #[arg(long, conflicts_with = "program", required_unless_present = "program")]
        plan: Option<PathBuf>,
        /// Program in JSON or text form.
        #[arg(long)]
        program: Option<PathBuf>,
    },
    /// Fit a calibration set from experiment results.
    Calibrate {
        #[arg(long)]
        results: PathBuf,
        /// Plan the results came from; inferred from the results when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Find the best route and print it as JSON.
    Route {
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        src: usize,
        #[arg(long)]
        dst: usize,
        /// Classical input `b0 b1`, e.g. `10`.
        #[arg(long, default_value = "00", conflicts_with = "amplitudes")]
        bits: String,
        /// Single-qubit input `re0,im0,re1,im1` on the source.
        #[arg(long)]
        amplitudes: Option<String>,
        #[arg(long, value_enum, default_value = "state-dependent")]
        mode: Mode,
    },
    /// Compare predicted and tomographic fidelity per hop count, as CSV.
    Verify {
        #[arg(long)]
        calib: PathBuf,
        /// Route JSON; otherwise the state-independent route from `--src` to `--dst`.
        #[arg(long, conflicts_with_all = ["src", "dst"])]
        route: Option<PathBuf>,
        #[arg(long, requires = "dst")]
        src: Option<usize>,
        #[arg(long, requires = "src")]
        dst: Option<usize>,
        /// One of 00, 01, 10, 11, or `all`.
        #[arg(long, default_value = "all")]
        bits: String,
        /// Largest hop count; defaults to the route length.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        hops: Option<u64>,
        /// Skip readout mitigation.
        #[arg(long)]
        raw: bool,
    },
    /// Tomography of a program's output on selected qubits.
    Tomo {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        qubits: Vec<usize>,
        /// Calibration whose readout model mitigates the counts.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Basis state, in target order, to report fidelity against.
        #[arg(long)]
        expect: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Format(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Format(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Format(m) => m,
        }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn device_failure(e: DeviceError) -> Failure {
    match e {
        DeviceError::Parse { .. } => Failure::Format(e.to_string()),
        other => invalid(other),
    }
}

fn tomography_failure(e: TomographyError) -> Failure {
    match e {
        TomographyError::Device(d) => device_failure(d),
        other => invalid(other),
    }
}

fn verify_failure(e: VerifyError) -> Failure {
    match e {
        VerifyError::Tomography(t) => tomography_failure(t),
        VerifyError::Route(r) => invalid(r),
    }
}

struct Workspace {
    root: PathBuf,
    out: Option<PathBuf>,
}

impl Workspace {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn read(&self, p: &Path) -> Result<String, Failure> {
        let full = self.path(p);
        fs::read_to_string(&full).map_err(|e| Failure::Format(format!("cannot read {}: {e}", full.display())))
    }

    fn json<T: serde::de::DeserializeOwned>(&self, p: &Path) -> Result<T, Failure> {
        serde_json::from_str(&self.read(p)?).map_err(|e| Failure::Format(format!("{}: {e}", p.display())))
    }

    fn jsonl<T: serde::de::DeserializeOwned>(&self, p: &Path) -> Result<Vec<T>, Failure> {
        parse_jsonl(&self.read(p)?).map_err(|e: FormatError| Failure::Format(format!("{}: {e}", p.display())))
    }

    /// Writes to `--out` if given, else stdout. Returns whether stdout was used.
    fn emit(&self, text: &str) -> Result<bool, Failure> {
        match &self.out {
            Some(p) => {
                let full = self.path(p);
                fs::write(&full, text).map_err(|e| invalid(format!("cannot write {}: {e}", full.display())))?;
                Ok(false)
            }
            None => {
                print!("{text}");
                Ok(true)
            }
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn parse_gate(s: &str) -> Result<GateLabel, Failure> {
    match s.trim().to_ascii_lowercase().as_str() {
        "cnot" | "cnot12" | "cx" => Ok(GateLabel::Cnot12),
        "cnot21" => Ok(GateLabel::Cnot21),
        "swap" => Ok(GateLabel::Swap),
        "ident" | "id" => Ok(GateLabel::Ident),
        other => GateLabel::parse(other).ok_or_else(|| Failure::Usage(format!("unknown gate {other:?}"))),
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("pair {s:?} should look like 0-1"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn load_device(ws: &Workspace, device: &Option<PathBuf>) -> Result<DeviceModel, Failure> {
    let p = device.as_ref().ok_or_else(|| Failure::Usage("this command needs --device".into()))?;
    ws.json(p)
}

fn routed_state(bits: &str, amplitudes: &Option<String>) -> Result<RoutedState, Failure> {
    match amplitudes {
        Some(a) => {
            let v: Vec<f64> = a
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Failure::Usage(format!("amplitudes {a:?} should be four numbers")))?;
            if v.len() != 4 {
                return Err(Failure::Usage(format!("amplitudes {a:?} should be four numbers")));
            }
            Ok(RoutedState::Qubit([
                swaproute::qstate::Complex64::new(v[0], v[1]),
                swaproute::qstate::Complex64::new(v[2], v[3]),
            ]))
        }
        None => RoutedState::bits(bits).ok_or_else(|| Failure::Usage(format!("bits {bits:?} must be 00, 01, 10 or 11"))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let root = match &cli.root {
        Some(r) => r.clone(),
        None => std::env::current_dir().map_err(invalid)?,
    };
    if !root.is_dir() {
        return Err(Failure::Usage(format!("workspace root {} is not a directory", root.display())));
    }
    let ws = Workspace { root, out: cli.out.clone() };
    match &cli.command {
        Command::Device { kind, qubits } => {
            let dev = match kind {
                Fixture::Line => make_line_like(*qubits, cli.seed),
                Fixture::NoiselessLine => DeviceModel::noiseless(format!("noiseless-line{qubits}"), *qubits, line_edges(*qubits))
                    .map_err(device_failure)?,
                Fixture::Boeblingen => make_boeblingen_like(cli.seed),
                Fixture::TwoPath => make_two_path_fixture(),
            };
            ws.emit(&pretty(&dev))?;
        }
        Command::Plan { gates, readout_pairs } => {
            let dev = load_device(&ws, &cli.device)?;
            let gates: BTreeSet<GateLabel> = gates.iter().filter(|g| !g.trim().is_empty()).map(|g| parse_gate(g)).collect::<Result<_, _>>()?;
            let readout = if readout_pairs.is_empty() {
                ReadoutPlan::PerQubit
            } else {
                ReadoutPlan::PerPair(readout_pairs.iter().map(|p| parse_pair(p)).collect::<Result<_, _>>()?)
            };
            let plan = build_plan(&dev, &gates, cli.shots.unwrap_or(DEFAULT_SHOTS), &readout).map_err(invalid)?;
            let t = plan.totals();
            let summary = format!(
                "circuits {} (gate {}, readout {})\ngates {} (cnot-equivalent {})\nshots {}\n",
                t.circuits, t.gate_circuits, t.readout_circuits, t.gates, t.cnot_equivalent, t.shots
            );
            if ws.emit(&to_jsonl(plan.experiments()))? {
                eprint!("{summary}");
            } else {
                print!("{summary}");
            }
        }
        Command::Run { plan, program } => {
            let dev = load_device(&ws, &cli.device)?;
            if let Some(p) = program {
                let program = Program::parse_any(&ws.read(p)?).map_err(device_failure)?;
                let counts = run_shots(&dev, &program, cli.shots.unwrap_or(DEFAULT_SHOTS), experiment_seed(cli.seed, 0))
                    .map_err(device_failure)?;
                ws.emit(&to_jsonl(&[counts]))?;
                return Ok(());
            }
            let plan = plan.as_ref().expect("clap requires plan or program");
            let mut experiments: Vec<Experiment> = ws.jsonl(plan)?;
            if let Some(s) = cli.shots {
                experiments.iter_mut().for_each(|e| e.shots = s);
            }
            let plan = CharacterizationPlan::new(experiments).map_err(invalid)?;
            let mut records: Vec<ExperimentRecord> = Vec::new();
            let mut errors = Vec::new();
            for (i, e) in plan.experiments().iter().enumerate() {
                match run_experiment(&dev, e, cli.seed, i) {
                    Ok(r) => records.push(r),
                    Err(err) => errors.push(format!("record {}: {err}", i + 1)),
                }
            }
            ws.emit(&to_jsonl(&records))?;
            if !errors.is_empty() {
                return Err(Failure::Validation(errors.join("\n")));
            }
        }
        Command::Calibrate { results, plan } => {
            let dev = load_device(&ws, &cli.device)?;
            let records: Vec<ExperimentRecord> = ws.jsonl(results)?;
            let plan = match plan {
                Some(p) => CharacterizationPlan::new(ws.jsonl(p)?).map_err(invalid)?,
                None => infer_plan(&dev, &records).map_err(invalid)?,
            };
            let calib = calibrate(&dev, &plan, &records).map_err(|e| match e {
                CharacterizationError::Missing(_) => Failure::Validation(e.to_string()),
                other => invalid(other),
            })?;
            if let Ok(err) = calib.max_table_error(dev.ground_truth()) {
                eprintln!("tables {}, max deviation from device model {err:.4}", calib.tables.len());
            }
            ws.emit(&pretty(&calib))?;
        }
        Command::Route { calib, src, dst, bits, amplitudes, mode } => {
            let dev = load_device(&ws, &cli.device)?;
            let calib: CalibrationSet = ws.json(calib)?;
            let req = RouteRequest { source: *src, destination: *dst, state: routed_state(bits, amplitudes)?, mode: (*mode).into() };
            let route = shortest_route(&dev, &calib, &req).map_err(invalid)?;
            ws.emit(&pretty(&route))?;
        }
        Command::Verify { calib, route, src, dst, bits, hops, raw } => {
            let dev = load_device(&ws, &cli.device)?;
            let calib: CalibrationSet = ws.json(calib)?;
            let route: Route = match (route, src, dst) {
                (Some(p), _, _) => ws.json(p)?,
                (None, Some(s), Some(d)) => {
                    let req = RouteRequest {
                        source: *s,
                        destination: *d,
                        state: RoutedState::Bits(0, 0),
                        mode: WeightMode::StateIndependent,
                    };
                    shortest_route(&dev, &calib, &req).map_err(invalid)?
                }
                _ => return Err(Failure::Usage("verify needs --route or both --src and --dst".into())),
            };
            route.check(&dev).map_err(|e: RouteError| invalid(e))?;
            let inputs: Vec<&str> = if bits == "all" { INPUTS.to_vec() } else { vec![bits.as_str()] };
            let opts = VerifyOptions {
                shots: cli.shots.unwrap_or(DEFAULT_SHOTS),
                seed: cli.seed,
                max_hops: hops.map(|h| h as usize).unwrap_or(route.hops()),
                mitigate: !raw,
            };
            let mut rows = Vec::new();
            for b in inputs {
                rows.extend(verify_series(&dev, &calib, &route, b, &opts).map_err(verify_failure)?);
            }
            ws.emit(&to_csv(&rows))?;
        }
        Command::Tomo { program, qubits, calib, expect } => {
            let dev = load_device(&ws, &cli.device)?;
            let program = Program::parse_any(&ws.read(program)?).map_err(device_failure)?;
            dev.check_program(&program).map_err(device_failure)?;
            let job = TomographyJob::new(qubits.clone(), program, cli.shots.unwrap_or(DEFAULT_SHOTS)).map_err(tomography_failure)?;
            let records = job.sample(&dev, cli.seed).map_err(tomography_failure)?;
            let calib: Option<CalibrationSet> = calib.as_ref().map(|p| ws.json(p)).transpose()?;
            let expectations =
                expectations_from_counts(qubits, &records, calib.as_ref().map(|c| &c.confusion)).map_err(tomography_failure)?;
            let recon = reconstruct(&expectations);
            if let Some(bits) = expect {
                let index = parse_bitstring(bits)
                    .filter(|_| bits.len() == qubits.len())
                    .ok_or_else(|| Failure::Usage(format!("--expect {bits:?} needs {} bits", qubits.len())))?;
                let ideal = PureState::basis(qubits.len(), index).map_err(invalid)?;
                eprintln!("fidelity {:.6}", tomographic_fidelity(&ideal, &recon).map_err(tomography_failure)?);
            }
            eprintln!("settings {}, clipped mass {:.3e}", job.circuits(), recon.diagnostics.clipped_mass.max(0.0) + 0.0);
            ws.emit(&pretty(&recon))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
