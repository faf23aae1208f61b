//! Command-line entry point: parameter handling, verification subcommands,
//! sweeps, and report emission.
//!
//! Parameters come from a TOML config file, command-line flags, or both;
//! flags win. Exactly one parameter source is allowed: direct frequencies
//! (omega_c, omega_m, g) or hardware numbers (mass, spring_constant,
//! cavity_length, mode_numbers). Every subcommand assembles a `Report`;
//! errors carry process exit codes (2 validation/config/io, 3 physics
//! domain, 4 convergence) and still land in the report as warning entries.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;

use crate::dynamics;
use crate::fockspace::{build_basis, BasisSpec};
use crate::model::{self, ModelParams};
use crate::perturb::{self, VertexKind};
use crate::report::{self, Report, ResultRow, SeriesPoint, Value, Warning};
use crate::residues::{self, rat_from_f64, Rat};
use crate::spectra;
use crate::{Error, Result};

/// Default coupling grid endpoints for fits against exact diagonalization.
const SWEEP_G_LO: f64 = 1e-3;
const SWEEP_G_HI: f64 = 1e-2;
const SWEEP_POINTS: usize = 6;

const DEFAULT_CUTOFF: usize = 12;

#[derive(Parser, Debug)]
#[command(
    name = "optomech",
    version,
    about = "Verification workbench for a quantized cavity coupled to a mirror on a spring"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Cavity mode frequency (direct source)
    #[arg(long, global = true, value_name = "FREQ")]
    omega_c: Option<f64>,
    /// Mirror frequency (direct source)
    #[arg(long, global = true, value_name = "FREQ")]
    omega_m: Option<f64>,
    /// Coupling strength (direct source)
    #[arg(long, global = true, value_name = "G")]
    g: Option<f64>,
    /// Mirror mass (hardware source)
    #[arg(long, global = true, value_name = "M")]
    mass: Option<f64>,
    /// Spring constant (hardware source)
    #[arg(long, global = true, value_name = "K")]
    spring_constant: Option<f64>,
    /// Cavity length (hardware source)
    #[arg(long, global = true, value_name = "L")]
    cavity_length: Option<f64>,
    /// Comma-separated cavity mode numbers, e.g. 1 or 1,2 (hardware source)
    #[arg(long, global = true, value_name = "N,...")]
    mode_numbers: Option<String>,
    /// Maximum photon occupation kept in the truncated basis
    #[arg(long, global = true, value_name = "N")]
    cutoff_photon: Option<usize>,
    /// Maximum phonon occupation kept in the truncated basis
    #[arg(long, global = true, value_name = "N")]
    cutoff_phonon: Option<usize>,
    /// Drop the pair-creating channel, keeping only the photon-conserving one
    #[arg(long, global = true)]
    rotating_wave: bool,
    /// Drop the vacuum term of the radiation-pressure operator
    #[arg(long, global = true)]
    normal_ordered_force: bool,
    /// Report destination (stdout when absent); written atomically
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format: json (default) or csv (series-producing subcommands)
    #[arg(long, global = true, value_name = "FMT")]
    format: Option<String>,
    /// Swept axis as KEY=START:STOP:N, e.g. g=1e-3:1e-2:6
    #[arg(long, global = true, value_name = "KEY=START:STOP:N")]
    sweep: Option<String>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Echo the derived frequencies and couplings
    Params,
    /// Second-order frequency shifts vs the diagonalization oracle
    Shifts,
    /// Field-strength factors vs the overlap oracles
    Zfactors,
    /// Third-order vertex corrections vs the residue engine
    Vertex {
        /// External energy of the first leg (default: omega_c)
        #[arg(long)]
        e1: Option<f64>,
        /// Second external energy for the mixed vertex (default: omega_c/2)
        #[arg(long)]
        e2: Option<f64>,
    },
    /// One-loop self-energies vs the residue engine
    Loops,
    /// Tree-level conversion amplitudes and their power-law fit
    Amplitude {
        /// Comma-separated phonon numbers to convert, e.g. 2,3,4
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Golden-rule width and the resonant conversion simulation
    Decay {
        /// Density of final states (default: 1/pi)
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Force-force correlation and ground-state force cumulants
    Corr,
    /// Sweep one closed-form scalar along a parameter axis
    Sweep {
        /// Which scalar to sweep; see the report for valid names
        #[arg(long)]
        quantity: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Params => "params",
            Command::Shifts => "shifts",
            Command::Zfactors => "zfactors",
            Command::Vertex { .. } => "vertex",
            Command::Loops => "loops",
            Command::Amplitude { .. } => "amplitude",
            Command::Decay { .. } => "decay",
            Command::Corr => "corr",
            Command::Sweep { .. } => "sweep",
        }
    }

    fn produces_series(&self) -> bool {
        matches!(
            self,
            Command::Decay { .. } | Command::Corr | Command::Sweep { .. }
        )
    }
}

// Config file shape. Sections per subcommand, lower_snake_case keys;
// unknown keys are configuration errors, not silent noise.

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    params: FileParams,
    #[serde(default)]
    vertex: FileVertex,
    #[serde(default)]
    amplitude: FileAmplitude,
    #[serde(default)]
    decay: FileDecay,
    #[serde(default)]
    sweep: FileSweep,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileParams {
    omega_c: Option<f64>,
    omega_m: Option<f64>,
    g: Option<f64>,
    mass: Option<f64>,
    spring_constant: Option<f64>,
    cavity_length: Option<f64>,
    mode_numbers: Option<Vec<u32>>,
    cutoff_photon: Option<usize>,
    cutoff_phonon: Option<usize>,
    rotating_wave: Option<bool>,
    normal_ordered_force: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileVertex {
    e1: Option<f64>,
    e2: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAmplitude {
    k: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDecay {
    rho: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSweep {
    sweep: Option<String>,
    quantity: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct SweepSpec {
    key: String,
    start: f64,
    stop: f64,
    n: usize,
}

impl SweepSpec {
    fn parse(text: &str) -> Result<SweepSpec> {
        let bad = || Error::Config(format!("sweep must look like KEY=START:STOP:N, got {text:?}"));
        let (key, rest) = text.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        if key.is_empty() || parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        if !start.is_finite() || !stop.is_finite() {
            return Err(Error::Config(format!("sweep endpoints must be finite, got {text:?}")));
        }
        Ok(SweepSpec {
            key: key.to_string(),
            start,
            stop,
            n,
        })
    }

    fn grid(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.start],
            // lerp form so both endpoints are hit exactly
            n => (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    self.start * (1.0 - t) + self.stop * t
                })
                .collect(),
        }
    }

    fn echo(&self) -> String {
        format!("{}={}:{}:{}", self.key, self.start, self.stop, self.n)
    }
}

/// Everything a subcommand needs, resolved from file + flags and validated.
#[derive(Debug)]
struct RunConfig {
    params: ModelParams,
    source: &'static str,
    cutoffs: (usize, usize),
    rotating_wave: bool,
    normal_ordered_force: bool,
    sweep: Option<SweepSpec>,
    out: Option<PathBuf>,
    format: Format,
    vertex_e1: f64,
    vertex_e2: f64,
    amplitude_orders: Vec<usize>,
    decay_rho: f64,
    sweep_quantity: Option<String>,
}

fn parse_mode_numbers(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad mode number {part:?}")))
        })
        .collect()
}

impl RunConfig {
    fn resolve(cli: &Cli) -> Result<RunConfig> {
        let file: FileConfig = match &cli.common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let args = &cli.common;
        let fp = &file.params;

        let omega_c = args.omega_c.or(fp.omega_c);
        let omega_m = args.omega_m.or(fp.omega_m);
        let g = args.g.or(fp.g);
        let mass = args.mass.or(fp.mass);
        let spring = args.spring_constant.or(fp.spring_constant);
        let length = args.cavity_length.or(fp.cavity_length);
        let modes: Option<Vec<u32>> = match &args.mode_numbers {
            Some(s) => Some(parse_mode_numbers(s)?),
            None => fp.mode_numbers.clone(),
        };

        let direct_given = omega_c.is_some() || omega_m.is_some() || g.is_some();
        let physical_given =
            mass.is_some() || spring.is_some() || length.is_some() || modes.is_some();
        let (params, source) = match (direct_given, physical_given) {
            (true, true) => {
                return Err(Error::Config(
                    "give either direct frequencies (omega_c/omega_m/g) or hardware numbers \
                     (mass/spring_constant/cavity_length/mode_numbers), not both"
                        .into(),
                ))
            }
            (_, false) => (
                model::direct_params(
                    omega_c.unwrap_or(1.0),
                    omega_m.unwrap_or(0.3),
                    g.unwrap_or(0.01),
                )?,
                "direct",
            ),
            (false, true) => {
                let (Some(m), Some(k), Some(l), Some(ns)) = (mass, spring, length, &modes) else {
                    return Err(Error::Config(
                        "hardware source needs all of mass, spring_constant, cavity_length, \
                         mode_numbers"
                            .into(),
                    ));
                };
                (model::derive_params(m, k, l, ns)?, "physical")
            }
        };

        let format = match args.format.as_deref() {
            None | Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            Some(other) => {
                return Err(Error::Config(format!(
                    "unknown format {other:?}; expected json or csv"
                )))
            }
        };
        if format == Format::Csv && !cli.command.produces_series() {
            return Err(Error::Config(format!(
                "{} emits no series; csv output applies to decay, corr, and sweep",
                cli.command.name()
            )));
        }

        let sweep = match &args.sweep {
            Some(s) => Some(SweepSpec::parse(s)?),
            None => match &file.sweep.sweep {
                Some(s) => Some(SweepSpec::parse(s)?),
                None => None,
            },
        };

        let cutoffs = (
            args.cutoff_photon.or(fp.cutoff_photon).unwrap_or(DEFAULT_CUTOFF),
            args.cutoff_phonon.or(fp.cutoff_phonon).unwrap_or(DEFAULT_CUTOFF),
        );
        if cutoffs.0 == 0 || cutoffs.1 == 0 {
            return Err(Error::Config("cutoffs must keep at least two levels".into()));
        }

        let (vertex_e1, vertex_e2) = match &cli.command {
            Command::Vertex { e1, e2 } => (
                e1.or(file.vertex.e1).unwrap_or(params.omega_c()),
                e2.or(file.vertex.e2).unwrap_or(params.omega_c() / 2.0),
            ),
            _ => (params.omega_c(), params.omega_c() / 2.0),
        };
        let amplitude_orders = match &cli.command {
            Command::Amplitude { k } if !k.is_empty() => k.clone(),
            _ => file.amplitude.k.clone().unwrap_or_else(|| vec![2, 3, 4]),
        };
        let decay_rho = match &cli.command {
            Command::Decay { rho } => rho.or(file.decay.rho),
            _ => file.decay.rho,
        }
        .unwrap_or(std::f64::consts::FRAC_1_PI);
        let sweep_quantity = match &cli.command {
            Command::Sweep { quantity } => quantity.clone().or(file.sweep.quantity.clone()),
            _ => file.sweep.quantity.clone(),
        };

        Ok(RunConfig {
            params,
            source,
            cutoffs,
            rotating_wave: args.rotating_wave || fp.rotating_wave.unwrap_or(false),
            normal_ordered_force: args.normal_ordered_force
                || fp.normal_ordered_force.unwrap_or(false),
            sweep,
            out: args.out.clone(),
            format,
            vertex_e1,
            vertex_e2,
            amplitude_orders,
            decay_rho,
            sweep_quantity,
        })
    }

    /// Effective configuration echoed into the report. Keys serialize
    /// sorted, so the echo is byte-stable.
    fn echo(&self, command: &Command) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        let mut put = |k: &str, v: serde_json::Value| {
            map.insert(k.to_string(), v);
        };
        put("subcommand", command.name().into());
        put("source", self.source.into());
        put("cutoff_photon", self.cutoffs.0.into());
        put("cutoff_phonon", self.cutoffs.1.into());
        put("rotating_wave", self.rotating_wave.into());
        put("normal_ordered_force", self.normal_ordered_force.into());
        put("format", self.format.name().into());
        if let Some(s) = &self.sweep {
            put("sweep", s.echo().into());
        }
        match command {
            Command::Vertex { .. } => {
                put("e1", self.vertex_e1.into());
                put("e2", self.vertex_e2.into());
            }
            Command::Amplitude { .. } => {
                put("orders", self.amplitude_orders.clone().into());
            }
            Command::Decay { .. } => {
                put("rho", self.decay_rho.into());
            }
            Command::Sweep { .. } => {
                if let Some(q) = &self.sweep_quantity {
                    put("quantity", q.as_str().into());
                }
            }
            _ => {}
        }
        serde_json::Value::Object(map)
    }

    fn include_pair(&self) -> bool {
        !self.rotating_wave
    }

    fn single_mode(&self) -> Result<()> {
        if self.params.mode_count() == 1 {
            Ok(())
        } else {
            Err(Error::Validation(
                "this subcommand needs single-mode parameters".into(),
            ))
        }
    }

    /// Coupling grid for fits: the --sweep axis when given (key must be g),
    /// otherwise a default. Linear or geometric spacing by caller's choice.
    fn g_grid(&self, geometric: bool) -> Result<Vec<f64>> {
        if let Some(s) = &self.sweep {
            if s.key != "g" {
                return Err(Error::Config(format!(
                    "this subcommand fits against a coupling sweep; use --sweep g=..., got key {:?}",
                    s.key
                )));
            }
            return Ok(s.grid());
        }
        let grid = if geometric {
            let ratio = (SWEEP_G_HI / SWEEP_G_LO).powf(1.0 / (SWEEP_POINTS - 1) as f64);
            (0..SWEEP_POINTS)
                .map(|i| SWEEP_G_LO * ratio.powi(i as i32))
                .collect()
        } else {
            (0..SWEEP_POINTS)
                .map(|i| {
                    let t = i as f64 / (SWEEP_POINTS - 1) as f64;
                    SWEEP_G_LO * (1.0 - t) + SWEEP_G_HI * t
                })
                .collect()
        };
        Ok(grid)
    }
}

/// Parse argv, run, emit, and hand back the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    run_cli(&cli)
}

fn run_cli(cli: &Cli) -> i32 {
    let rc = match RunConfig::resolve(cli) {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("optomech: {e}");
            let mut map = serde_json::Map::new();
            map.insert("subcommand".into(), cli.command.name().into());
            let mut report = Report::new(serde_json::Value::Object(map), None);
            report.warn(Warning::from_error(&e));
            if let Ok(text) = report::render_json(&report) {
                let _ = report::emit(&text, cli.common.out.as_deref());
            }
            return e.exit_code();
        }
    };

    let mut report = Report::new(rc.echo(&cli.command), Some(&rc.params));
    if let Some(w) = rc.params.weak_coupling_warning() {
        report.warn(Warning::note(w));
    }

    match run_command(&cli.command, &rc, &mut report) {
        Ok(csv) => {
            let text = match (rc.format, csv) {
                (Format::Csv, Some(t)) => t,
                (Format::Csv, None) => {
                    // series-producing subcommand that skipped its series
                    eprintln!("optomech: no series produced; csv output unavailable");
                    let e = Error::Config("no series produced for csv output".into());
                    report.warn(Warning::from_error(&e));
                    match report::render_json(&report) {
                        Ok(t) => {
                            let _ = report::emit(&t, rc.out.as_deref());
                        }
                        Err(_) => {}
                    }
                    return e.exit_code();
                }
                (Format::Json, _) => match report::render_json(&report) {
                    Ok(t) => t,
                    Err(e) => {
                        eprintln!("optomech: {e}");
                        return e.exit_code();
                    }
                },
            };
            match report::emit(&text, rc.out.as_deref()) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("optomech: {e}");
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprintln!("optomech: {e}");
            report.warn(Warning::from_error(&e));
            if let Ok(text) = report::render_json(&report) {
                let _ = report::emit(&text, rc.out.as_deref());
            }
            e.exit_code()
        }
    }
}

fn run_command(cmd: &Command, rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    match cmd {
        Command::Params => cmd_params(rc, report),
        Command::Shifts => cmd_shifts(rc, report),
        Command::Zfactors => cmd_zfactors(rc, report),
        Command::Vertex { .. } => cmd_vertex(rc, report),
        Command::Loops => cmd_loops(rc, report),
        Command::Amplitude { .. } => cmd_amplitude(rc, report),
        Command::Decay { .. } => cmd_decay(rc, report),
        Command::Corr => cmd_corr(rc, report),
        Command::Sweep { .. } => cmd_sweep(rc, report),
    }
}

fn cmd_params(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    let p = &rc.params;
    report.push(ResultRow::plain(
        "omega-c",
        "lowest cavity mode frequency",
        Value::Real(p.omega_c()),
    ));
    for (k, &w) in p.omega_modes.iter().enumerate().skip(1) {
        report.push(ResultRow::plain(
            &format!("omega-mode-{k}"),
            &format!("cavity mode {k} frequency"),
            Value::Real(w),
        ));
    }
    report.push(ResultRow::plain(
        "omega-m",
        "mirror frequency",
        Value::Real(p.omega_m),
    ));
    report.push(ResultRow::plain(
        "g",
        "single-mode coupling",
        Value::Real(p.g),
    ));
    if let Some(ratio) = p.coupling_convention_ratio() {
        // the two published coupling conventions disagree by a factor;
        // surfaced, not reconciled
        report.push_documented(ResultRow::documented(
            "coupling-ratio",
            "pairwise g[0][0] over single-mode g",
            Value::Real(-0.5),
            Value::Real(ratio),
        ));
    }
    Ok(None)
}

fn shift_tolerance(formula: f64, omega_ref: f64) -> f64 {
    1e-3 * formula.abs() + 1e-9 * omega_ref
}

fn cmd_shifts(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    let include_pair = rc.include_pair();
    let sweep = rc.g_grid(false)?;
    let g2 = p.g * p.g;
    let omega_ref = p.omega_c().max(p.omega_m);

    let dm = perturb::delta_omega_m(p, include_pair)?;
    let dc = perturb::delta_omega_c(p, include_pair)?;
    // the vacuum shift comes entirely from the pair-creating channel
    let dg = if include_pair {
        perturb::vacuum_energy_shift(p)?.value.re
    } else {
        0.0
    };

    let mut fits = spectra::level_shift_oracles(
        p,
        rc.cutoffs,
        include_pair,
        &[&[0, 0], &[0, 1], &[1, 0]],
        &sweep,
    )?;
    let photon = fits.pop().expect("three fits");
    let phonon = fits.pop().expect("three fits");
    let vac = fits.pop().expect("three fits");
    for (label, f) in [("vacuum", &vac), ("phonon", &phonon), ("photon", &photon)] {
        if f.residual > 1e-7 * omega_ref {
            report.warn(Warning::note(format!(
                "{label} shift fit residual {:e} is large; cutoffs may be too low",
                f.residual
            )));
        }
    }

    // the closed forms are absolute dressed-level shifts: the |0,1> sum
    // keeps its |2,2> intermediate at full weight, so no vacuum reference
    report.push(ResultRow::compared(
        "eq10",
        "phonon frequency shift at the configured g",
        Value::Real(dm.value.re),
        Value::Real(phonon.c2 * g2),
        shift_tolerance(dm.value.re, omega_ref),
    ));
    report.push(ResultRow::compared(
        "eq16",
        "photon frequency shift at the configured g",
        Value::Real(dc.value.re),
        Value::Real(photon.c2 * g2),
        shift_tolerance(dc.value.re, omega_ref),
    ));
    report.push(ResultRow::compared(
        "eq21",
        "ground-state energy shift at the configured g",
        Value::Real(dg),
        Value::Real(vac.c2 * g2),
        shift_tolerance(dg, omega_ref),
    ));
    Ok(None)
}

fn cmd_zfactors(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    if rc.rotating_wave {
        report.warn(Warning::note(
            "field-strength factors always use both interaction channels; \
             --rotating-wave has no effect here",
        ));
    }

    let zb = perturb::z_factor_phonon(p)?;
    let za = perturb::z_factor_photon(p)?;
    let pt_b = perturb::z_factor_pt_oracle(p, rc.cutoffs, &[0, 1])?;
    let pt_a = perturb::z_factor_pt_oracle(p, rc.cutoffs, &[1, 0])?;
    let es = spectra::solve_single_mode(p, rc.cutoffs, true)?;
    let ov_b = spectra::track_dressed_state(&es, &[0, 1])?.overlap_sq;
    let ov_a = spectra::track_dressed_state(&es, &[1, 0])?.overlap_sq;

    // two independent oracle routes must agree; the diagonalization picks
    // up fourth-order pieces the explicit sum lacks, which scale as the
    // square of the dressing deficit
    let tol = |pt: f64| 1e-6 + 4.0 * (1.0 - pt) * (1.0 - pt);
    report.push(ResultRow::compared(
        "z-phonon-oracle",
        "dressed |0,1> overlap^2: perturbation sum vs diagonalization",
        Value::Real(pt_b),
        Value::Real(ov_b),
        tol(pt_b),
    ));
    report.push(ResultRow::compared(
        "z-photon-oracle",
        "dressed |1,0> overlap^2: perturbation sum vs diagonalization",
        Value::Real(pt_a),
        Value::Real(ov_a),
        tol(pt_a),
    ));

    // published closed forms differ from the overlap oracle in sign and
    // term content; recorded on every run, reconciled on none
    report.push_documented(ResultRow::documented(
        "eq13",
        "published phonon field-strength factor vs overlap oracle",
        Value::Real(zb.value.re),
        Value::Real(ov_b),
    ));
    report.push_documented(ResultRow::documented(
        "eq17",
        "published photon field-strength factor vs overlap oracle",
        Value::Real(za.value.re),
        Value::Real(ov_a),
    ));
    Ok(None)
}

/// Rational images of the configured parameters for the residue engine.
fn rational_params(p: &ModelParams) -> Result<(Rat, Rat, Rat)> {
    Ok((
        rat_from_f64(p.omega_c())?,
        rat_from_f64(p.omega_m)?,
        rat_from_f64(p.g)?,
    ))
}

fn vertex_row(
    report: &mut Report,
    id: &str,
    label: &str,
    printed: Complex64,
    engine: Result<Complex64>,
) {
    match engine {
        Ok(z) => {
            let scale = printed.norm().max(z.norm()).max(f64::MIN_POSITIVE);
            let delta = (printed - z).norm();
            if delta <= 1e-12 * scale {
                report.push(ResultRow::compared(
                    id,
                    label,
                    Value::complex(printed),
                    Value::complex(z),
                    1e-12 * scale,
                ));
            } else {
                report.push_documented(ResultRow::documented(
                    id,
                    label,
                    Value::complex(printed),
                    Value::complex(z),
                ));
            }
        }
        Err(e) => {
            report.push(ResultRow::plain(id, label, Value::complex(printed)));
            report.warn(Warning::note(format!(
                "{id}: residue engine route unavailable at these energies: {e}"
            )));
        }
    }
}

fn cmd_vertex(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    let e1 = rc.vertex_e1;
    let e2 = rc.vertex_e2;

    let pair = perturb::vertex_gamma(VertexKind::Pair, &[e1], p)?;
    let scatter = perturb::vertex_gamma(VertexKind::Scatter, &[e1], p)?;
    let cross = perturb::vertex_gamma(VertexKind::Cross, &[e1, e2], p)?;

    let (wc, wm, g) = rational_params(p)?;
    let r1 = rat_from_f64(e1)?;
    let r2 = rat_from_f64(e2)?;
    let engine = |integrand| residues::evaluate(&integrand).map(|v| residues::to_f64(&v));

    vertex_row(
        report,
        "eq18-dce",
        "pair-creation vertex correction",
        pair.value,
        engine(perturb::diagrams::vertex_pair(&wc, &wm, &g, &r1)),
    );
    vertex_row(
        report,
        "eq18-opto",
        "number-conserving vertex correction",
        scatter.value,
        engine(perturb::diagrams::vertex_scatter(&wc, &wm, &g, &r1)),
    );
    vertex_row(
        report,
        "eq19",
        "mixed-channel vertex correction",
        cross.value,
        engine(perturb::diagrams::vertex_cross(&wc, &wm, &g, &r1, &r2)),
    );
    Ok(None)
}

fn cmd_loops(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    let (eq8, eq9) = perturb::phonon_self_energy(p.omega_m, p)?;
    let (eq15om, eq15dce) = perturb::photon_self_energy(p.omega_c(), p)?;
    let eq20 = perturb::vacuum_energy_shift(p)?;

    let (wc, wm, g) = rational_params(p)?;
    // a loop evaluates to i times the self-energy it feeds
    let sigma = |integrand| -> Result<Complex64> {
        let v = residues::evaluate(&integrand)?;
        Ok(Complex64::i() * residues::to_f64(&v))
    };
    let rows: [(&str, &str, Complex64, Result<Complex64>); 5] = [
        (
            "eq8",
            "phonon self-energy, two-photon channel, on shell",
            eq8.value,
            sigma(perturb::diagrams::phonon_two_photon(&wc, &g, &wm)),
        ),
        (
            "eq9",
            "phonon self-energy, pair channel, on shell",
            eq9.value,
            sigma(perturb::diagrams::phonon_pair(&wc, &wm, &g, &wm)),
        ),
        (
            "eq15-om",
            "photon self-energy, number-conserving channel, on shell",
            eq15om.value,
            sigma(perturb::diagrams::photon_scatter(&wc, &wm, &g, &wc)),
        ),
        (
            "eq15-dce",
            "photon self-energy, pair channel, on shell",
            eq15dce.value,
            sigma(perturb::diagrams::photon_pair(&wc, &wm, &g, &wc)),
        ),
        (
            "eq20",
            "vacuum bubble",
            eq20.value,
            sigma(perturb::diagrams::vacuum_bubble(&wc, &wm, &g)),
        ),
    ];
    for (id, label, formula, oracle) in rows {
        let z = oracle?;
        let scale = formula.norm().max(z.norm()).max(f64::MIN_POSITIVE);
        report.push(ResultRow::compared(
            id,
            label,
            Value::complex(formula),
            Value::complex(z),
            1e-12 * scale,
        ));
    }
    Ok(None)
}

fn cmd_amplitude(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    let orders = &rc.amplitude_orders;
    let gs = rc.g_grid(true)?;
    report.warn(Warning::note(
        "amplitude scaling runs at its own resonant tuning (omega_c = 1, omega_m = 2/k); \
         configured frequencies are not used",
    ));

    // single amplitudes at the configured coupling
    let g = rc.params.g.abs();
    if g > 0.0 {
        for &k in orders {
            let tuned = model::direct_params(1.0, 2.0 / k as f64, g)?;
            let mut initial = vec![0u32; 2];
            initial[1] = k as u32;
            let a = perturb::tree_amplitude(&tuned, (4, k + 3), &initial, &[2, 0], k)?;
            report.push(ResultRow::plain(
                &format!("amplitude-k{k}"),
                &format!("tree amplitude |0,{k}> -> |2,0> at the configured |g|"),
                Value::Real(a),
            ));
        }
    }

    let fits = perturb::amplitude_scaling_fit(orders, &gs)?;
    for f in &fits {
        report.push(ResultRow::compared(
            "eq25",
            &format!("|A| power law in g for k={}", f.order),
            Value::Real(f.order as f64),
            Value::Real(f.slope),
            0.02 * f.order as f64,
        ));
        report.push(ResultRow::plain(
            &format!("prefactor-k{}", f.order),
            &format!("fitted |A|/g^k against the 2^-(k-1) trend, k={}", f.order),
            Value::Real(f.prefactor_ratio),
        ));
    }
    Ok(None)
}

fn cmd_decay(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    let w = perturb::golden_rule_width(p, rc.decay_rho)?;

    // independent route to the matrix element through the assembled operator
    let basis = build_basis(BasisSpec::single_mode(4, 2))?;
    let v = model::split_interaction(&basis, p)?.v_total;
    let el = v.element(&[2, 0], &[0, 1])?;
    let oracle = 2.0 * std::f64::consts::PI * rc.decay_rho * el.norm_sqr();
    let scale = w.width.abs().max(oracle.abs()).max(f64::MIN_POSITIVE);
    report.push(ResultRow::compared(
        "gamma-golden",
        "decay width 2 pi rho |<2,0|V|0,1>|^2",
        Value::Real(w.width),
        Value::Real(oracle),
        1e-12 * scale,
    ));
    if w.is_decaying() {
        report.push(ResultRow::plain(
            "gamma-lifetime",
            "1/width",
            Value::Real(w.lifetime),
        ));
    } else {
        report.push(ResultRow::skipped("gamma-lifetime", "1/width"));
        report.warn(Warning::note("free theory does not decay; lifetime is infinite"));
    }

    let detuning = p.omega_m - 2.0 * p.omega_c();
    if detuning.abs() <= dynamics::RESONANCE_TOL_REL * p.omega_c().max(p.omega_m) && p.g != 0.0 {
        let run = dynamics::resonant_survival(p, rc.cutoffs)?;
        report.push(ResultRow::compared(
            "rabi-degenerate",
            "survival oscillation frequency vs sqrt(2)|g|",
            Value::Real(std::f64::consts::SQRT_2 * p.g.abs()),
            Value::Real(run.frequency),
            1e-4,
        ));
        report.push(ResultRow::plain(
            "conversion-peak",
            "largest |<2,0|psi>|^2 along the grid",
            Value::Real(run.series.max_conversion),
        ));
        report.series = run
            .series
            .times
            .iter()
            .zip(&run.series.survival)
            .map(|(&t, &s)| SeriesPoint {
                param: t,
                value: Value::Real(s),
            })
            .collect();
        if rc.format == Format::Csv {
            let csv = report::render_scalar_csv(&report.config, "t", &report.series)?;
            return Ok(Some(csv));
        }
    } else {
        report.push(ResultRow::skipped(
            "rabi-degenerate",
            "survival oscillation frequency vs sqrt(2)|g|",
        ));
        report.warn(Warning::note(
            "conversion runs on resonance only; set omega_m = 2 omega_c to simulate it",
        ));
    }
    Ok(None)
}

fn cmd_corr(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    rc.single_mode()?;
    let p = &rc.params;
    let study = dynamics::force_force_study(p, rc.cutoffs, rc.normal_ordered_force, None)?;
    let c = p.omega_c() / (2.0 * study.length);

    // the quoted closed-form coefficient sits a factor 2 under the Wick
    // pairing; both are recorded, neither is asserted against the other
    report.push_documented(ResultRow::documented(
        "eq27",
        "force correlator coefficient: quoted omega_c^2/4L^2 vs measured",
        Value::Real(study.quoted_coefficient),
        Value::Real(study.measured_coefficient),
    ));
    let drift = (p.g / p.omega_m).powi(2);
    report.push(ResultRow::compared(
        "ff-wick",
        "force correlator coefficient vs Wick pairing 2(omega_c/2L)^2",
        Value::Real(study.wick_coefficient),
        Value::Real(study.measured_coefficient),
        (1e-6 + 25.0 * drift) * study.wick_coefficient,
    ));
    report.push(ResultRow::compared(
        "ff-phase",
        "correlator phase slope vs -2 omega_c",
        Value::Real(-2.0 * p.omega_c()),
        Value::Real(study.phase_slope),
        1e-6 * (2.0 * p.omega_c()).max(1.0) + 12.0 * p.g * p.g / p.omega_m,
    ));

    let k = dynamics::force_cumulants(p, rc.cutoffs, rc.normal_ordered_force)?;
    let tol_rel = 1e-8 + 25.0 * drift;
    let mean_formula = if rc.normal_ordered_force { 0.0 } else { c };
    report.push(ResultRow::compared(
        "force-mean",
        "ground-state mean of the radiation pressure",
        Value::Real(mean_formula),
        Value::Real(k.mean),
        tol_rel * c + 1e-12,
    ));
    report.push(ResultRow::compared(
        "force-variance",
        "force variance vs 2(omega_c/2L)^2",
        Value::Real(2.0 * c * c),
        Value::Real(k.variance),
        tol_rel * 2.0 * c * c,
    ));
    report.push(ResultRow::compared(
        "force-third",
        "third central force moment vs 8(omega_c/2L)^3",
        Value::Real(8.0 * c * c * c),
        Value::Real(k.third),
        tol_rel * 8.0 * c * c * c,
    ));
    report.push(ResultRow::compared(
        "force-kurtosis",
        "excess kurtosis of the force distribution",
        Value::Real(12.0),
        Value::Real(k.excess_kurtosis),
        tol_rel * 12.0,
    ));

    report.series = study
        .dts
        .iter()
        .zip(&study.values)
        .map(|(&dt, &v)| SeriesPoint {
            param: dt,
            value: Value::complex(v),
        })
        .collect();
    if rc.format == Format::Csv {
        let csv = report::render_scalar_csv(&report.config, "dt", &report.series)?;
        return Ok(Some(csv));
    }
    Ok(None)
}

fn eval_sweep_quantity(quantity: &str, key: &str, x: f64, rc: &RunConfig) -> Result<Value> {
    let base = &rc.params;
    if base.mode_count() != 1 {
        return Err(Error::Validation("sweeps are single-mode".into()));
    }
    let p = match key {
        "g" => model::direct_params(base.omega_c(), base.omega_m, x)?,
        "omega_m" => model::direct_params(base.omega_c(), x, base.g)?,
        "omega_c" => model::direct_params(x, base.omega_m, base.g)?,
        "rho" => base.clone(),
        other => {
            return Err(Error::Config(format!(
                "unknown sweep key {other:?}; expected g, omega_c, omega_m, or rho"
            )))
        }
    };
    let include_pair = rc.include_pair();
    let value = match quantity {
        "delta-omega-m" => Value::complex(perturb::delta_omega_m(&p, include_pair)?.value),
        "delta-omega-c" => Value::complex(perturb::delta_omega_c(&p, include_pair)?.value),
        "vacuum-shift" => Value::complex(perturb::vacuum_energy_shift(&p)?.value),
        "z-phonon" => Value::Real(perturb::z_factor_phonon(&p)?.value.re),
        "z-photon" => Value::Real(perturb::z_factor_photon(&p)?.value.re),
        "gamma" => {
            let rho = if key == "rho" { x } else { rc.decay_rho };
            Value::Real(perturb::golden_rule_width(&p, rho)?.width)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown quantity {other:?}; expected delta-omega-m, delta-omega-c, \
                 vacuum-shift, z-phonon, z-photon, or gamma"
            )))
        }
    };
    Ok(value)
}

fn cmd_sweep(rc: &RunConfig, report: &mut Report) -> Result<Option<String>> {
    let spec = rc
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs --sweep KEY=START:STOP:N".into()))?;
    let quantity = rc
        .sweep_quantity
        .as_deref()
        .ok_or_else(|| Error::Config("sweep needs --quantity NAME".into()))?;

    // fail fast on bad names before touching the grid
    if !spec.grid().is_empty() {
        eval_sweep_quantity(quantity, &spec.key, spec.grid()[0], rc).map(|_| ())?;
    } else if !matches!(spec.key.as_str(), "g" | "omega_c" | "omega_m" | "rho") {
        return Err(Error::Config(format!(
            "unknown sweep key {:?}; expected g, omega_c, omega_m, or rho",
            spec.key
        )));
    }

    let grid = spec.grid();
    let points: Vec<(f64, Result<Value>)> = grid
        .par_iter()
        .map(|&x| (x, eval_sweep_quantity(quantity, &spec.key, x, rc)))
        .collect();
    for (x, r) in points {
        match r {
            Ok(v) => report.series.push(SeriesPoint { param: x, value: v }),
            Err(e) => report.warn(Warning {
                kind: e.kind().into(),
                message: format!("point {}={x} skipped: {e}", spec.key),
            }),
        }
    }
    if rc.format == Format::Csv {
        let csv = report::render_scalar_csv(&report.config, &spec.key, &report.series)?;
        return Ok(Some(csv));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn sweep_spec_parsing() {
        let s = SweepSpec::parse("g=1e-3:1e-2:6").unwrap();
        assert_eq!(s.key, "g");
        assert_eq!(s.n, 6);
        let grid = s.grid();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[0], 1e-3);
        assert_eq!(grid[5], 1e-2);

        assert_eq!(SweepSpec::parse("g=0:1:0").unwrap().grid(), Vec::<f64>::new());
        assert_eq!(SweepSpec::parse("g=0.5:9:1").unwrap().grid(), vec![0.5]);
        assert!(SweepSpec::parse("g=1:2").is_err());
        assert!(SweepSpec::parse("1:2:3").is_err());
        assert!(SweepSpec::parse("g=a:2:3").is_err());
    }

    #[test]
    fn defaults_resolve_to_the_bench_point() {
        let cli = parse(&["optomech", "shifts"]);
        let rc = RunConfig::resolve(&cli).unwrap();
        assert_eq!(rc.params.omega_c(), 1.0);
        assert_eq!(rc.params.omega_m, 0.3);
        assert_eq!(rc.params.g, 0.01);
        assert_eq!(rc.cutoffs, (DEFAULT_CUTOFF, DEFAULT_CUTOFF));
        assert_eq!(rc.format, Format::Json);
        assert!(!rc.rotating_wave);
    }

    #[test]
    fn params_sources_are_exclusive() {
        let cli = parse(&["optomech", "params", "--omega-c", "1.0", "--mass", "5e5"]);
        assert!(matches!(
            RunConfig::resolve(&cli).unwrap_err(),
            Error::Config(_)
        ));

        let cli = parse(&["optomech", "params", "--mass", "5e5"]);
        assert!(matches!(
            RunConfig::resolve(&cli).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn hardware_source_derives_documented_values() {
        let cli = parse(&[
            "optomech",
            "params",
            "--mass",
            "5e5",
            "--spring-constant",
            "4.5e4",
            "--cavity-length",
            "1",
            "--mode-numbers",
            "1",
        ]);
        let rc = RunConfig::resolve(&cli).unwrap();
        assert!((rc.params.omega_m - 0.3).abs() < 1e-15);
        assert!((rc.params.omega_c() - std::f64::consts::PI).abs() < 1e-12);
        assert!((rc.params.g - (-5.736e-3)).abs() < 1e-6);
        assert_eq!(rc.source, "physical");
    }

    #[test]
    fn config_file_merges_under_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[params]\nomega_c = 2.0\nomega_m = 0.5\ng = 0.004\ncutoff_photon = 9\n\n\
             [decay]\nrho = 0.25\n",
        )
        .unwrap();
        let cli = parse(&[
            "optomech",
            "decay",
            "--config",
            path.to_str().unwrap(),
            "--omega-m",
            "0.7",
        ]);
        let rc = RunConfig::resolve(&cli).unwrap();
        assert_eq!(rc.params.omega_c(), 2.0);
        assert_eq!(rc.params.omega_m, 0.7); // flag wins
        assert_eq!(rc.params.g, 0.004);
        assert_eq!(rc.cutoffs.0, 9);
        assert_eq!(rc.decay_rho, 0.25);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[params]\nomega_x = 1.0\n").unwrap();
        let cli = parse(&["optomech", "params", "--config", path.to_str().unwrap()]);
        assert!(matches!(
            RunConfig::resolve(&cli).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn csv_is_limited_to_series_subcommands() {
        let cli = parse(&["optomech", "shifts", "--format", "csv"]);
        assert!(matches!(
            RunConfig::resolve(&cli).unwrap_err(),
            Error::Config(_)
        ));
        let cli = parse(&["optomech", "corr", "--format", "csv"]);
        assert!(RunConfig::resolve(&cli).is_ok());
    }

    #[test]
    fn loops_rows_all_pass_at_the_bench_point() {
        let cli = parse(&["optomech", "loops"]);
        let rc = RunConfig::resolve(&cli).unwrap();
        let mut report = Report::new(rc.echo(&cli.command), Some(&rc.params));
        cmd_loops(&rc, &mut report).unwrap();
        assert_eq!(report.results.len(), 5);
        for row in &report.results {
            assert_eq!(row.status, report::Status::Pass, "{}", row.id);
        }
        let ids: Vec<&str> = report.results.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["eq8", "eq9", "eq15-om", "eq15-dce", "eq20"]);
    }

    #[test]
    fn vertex_rows_document_the_known_gaps() {
        let cli = parse(&["optomech", "vertex"]);
        let rc = RunConfig::resolve(&cli).unwrap();
        let mut report = Report::new(rc.echo(&cli.command), Some(&rc.params));
        cmd_vertex(&rc, &mut report).unwrap();
        let by_id = |id: &str| {
            report
                .results
                .iter()
                .find(|r| r.id == id)
                .unwrap_or_else(|| panic!("missing {id}"))
        };
        // on-shell pair vertex agrees with the engine; the other two differ
        assert_eq!(by_id("eq18-dce").status, report::Status::Pass);
        assert_eq!(by_id("eq18-opto").status, report::Status::DeltaDocumented);
        assert_eq!(by_id("eq19").status, report::Status::DeltaDocumented);
    }

    #[test]
    fn sweep_grid_evaluates_closed_forms() {
        let cli = parse(&[
            "optomech",
            "sweep",
            "--quantity",
            "delta-omega-m",
            "--sweep",
            "g=0.001:0.003:3",
        ]);
        let rc = RunConfig::resolve(&cli).unwrap();
        let mut report = Report::new(rc.echo(&cli.command), Some(&rc.params));
        cmd_sweep(&rc, &mut report).unwrap();
        assert_eq!(report.series.len(), 3);
        // closed form scales as g^2
        let v0 = match report.series[0].value {
            Value::Real(x) => x,
            _ => panic!("expected a real shift"),
        };
        let v2 = match report.series[2].value {
            Value::Real(x) => x,
            _ => panic!("expected a real shift"),
        };
        assert!((v2 / v0 - 9.0).abs() < 1e-9);

        // empty sweep stays a valid report with an empty series
        let cli = parse(&[
            "optomech",
            "sweep",
            "--quantity",
            "gamma",
            "--sweep",
            "rho=0:1:0",
        ]);
        let rc = RunConfig::resolve(&cli).unwrap();
        let mut report = Report::new(rc.echo(&cli.command), Some(&rc.params));
        cmd_sweep(&rc, &mut report).unwrap();
        assert!(report.series.is_empty());
        assert!(report::render_json(&report).is_ok());
    }

    #[test]
    fn sweep_requires_axis_and_quantity() {
        let cli = parse(&["optomech", "sweep", "--quantity", "gamma"]);
        let rc = RunConfig::resolve(&cli).unwrap();
        let mut report = Report::new(serde_json::Value::Null, None);
        assert!(matches!(
            cmd_sweep(&rc, &mut report).unwrap_err(),
            Error::Config(_)
        ));

        let cli = parse(&["optomech", "sweep", "--sweep", "g=1e-3:1e-2:4"]);
        let rc = RunConfig::resolve(&cli).unwrap();
        assert!(matches!(
            cmd_sweep(&rc, &mut report).unwrap_err(),
            Error::Config(_)
        ));
    }
}
