//! The `sandwich` command line.
//!
//! Exit codes: 0 success, 1 computation failed (including non-converged
//! fits and refused unstable configurations), 2 bad input.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::characterization::{
    fit_airy, fit_thickness, ringdown_finesse, AiryMode, THICKNESS_SCAN_MAX,
};
use crate::cooling::{heatmap, intracavity_photons, stability_check, SweepAxis};
use crate::coupling::{
    coupling_map, coupling_summary, line_scan, locate_max_coupling, single_membrane_max_coupling,
};
use crate::error::{Error, Result};
use crate::io::config::{Anchor, RunConfig};
use crate::io::data::{self, fmt, CsvOut};
use crate::io::units::{parse_quantity, Dimension};
use crate::mechanics::{fit_side_lengths, MembraneSpec};
use crate::spectrum::{reference_mode, Parity};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "SANDWICH_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "sandwich", version, about = "Two-membrane cavity optomechanics toolkit")]
pub struct Cli {
    /// Worker threads for grid scans (overrides SANDWICH_WORKERS).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Named parameter set (baseline, scan-com, scan-q1, cooling-low, cooling-high, power-sweep).
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON config merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. --set geometry.length="45 mm". Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Main output file (stdout if absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ParityArg {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Direction {
    /// Move q1, q2 fixed.
    Q1,
    /// Move q2, q1 fixed.
    Q2,
    /// Centre of mass, separation fixed.
    Com,
    /// Separation, centre of mass fixed.
    Rel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Detuning,
    Power,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AiryModeArg {
    Spectral,
    LengthScan,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// δω/FSR and (G1, G2) over the (q1, q2) grid as CSV.
    ShiftMap {
        #[command(flatten)]
        common: Common,
        /// JSON summary file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        parity: Option<ParityArg>,
    },
    /// Straight-line slice through the (q1, q2) plane.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        /// Centre of the line as `q1,q2`, e.g. `-266nm,266nm`.
        #[arg(long, allow_hyphen_values = true)]
        anchor: Option<String>,
        /// Line length, e.g. `1064nm`.
        #[arg(long)]
        span: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        parity: Option<ParityArg>,
    },
    /// Fit measured data; writes a JSON report.
    Fit {
        #[command(subcommand)]
        kind: FitCommand,
    },
    /// Single-membrane, maximal and saturated couplings.
    CouplingSummary {
        #[command(flatten)]
        common: Common,
        /// Membrane separation for the saturated coupling (default q2 − q1).
        #[arg(long)]
        separation: Option<String>,
    },
    /// Displacement spectral noise heatmap over detuning or power.
    Cooling {
        #[command(flatten)]
        common: Common,
        /// JSON file with per-column effective rates.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Emit NaN columns for unstable points instead of refusing.
        #[arg(long)]
        allow_unstable: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum FitCommand {
    /// Airy fringe fit; CSV columns `x_m,intensity`.
    Airy {
        #[command(flatten)]
        common: Common,
        data: PathBuf,
        #[arg(long, value_enum, default_value = "spectral")]
        mode: AiryModeArg,
        #[arg(long)]
        init_length: Option<String>,
        #[arg(long)]
        init_finesse: Option<f64>,
    },
    /// Exponential ring-down; CSV columns `time_s,intensity`.
    Ringdown {
        #[command(flatten)]
        common: Common,
        data: PathBuf,
        /// Cavity length (overrides geometry.length).
        #[arg(long)]
        length: Option<String>,
    },
    /// Membrane thickness; CSV columns `wavelength_m,reflectivity[,sigma]`.
    Thickness {
        #[command(flatten)]
        common: Common,
        data: PathBuf,
        /// Constant refractive index (overrides geometry.index and clears the dispersion table).
        #[arg(long)]
        index: Option<f64>,
        #[arg(long)]
        max_thickness: Option<String>,
    },
    /// Membrane side lengths; CSV columns `frequency_hz,membrane,m,n[,q]`.
    MembraneModes {
        #[command(flatten)]
        common: Common,
        data: PathBuf,
        #[arg(long)]
        stress: Option<String>,
        #[arg(long)]
        density: Option<String>,
    },
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    result: T,
    warnings: Vec<String>,
}

fn report<T: Serialize>(path: Option<&Path>, command: &str, config: &RunConfig, result: T, warnings: Vec<String>) -> Result<()> {
    let r = Report { command, version: env!("CARGO_PKG_VERSION"), config, result, warnings };
    data::write_json(sink(path)?, &r)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

fn quoted(path: &str, value: &str) -> String {
    format!("{path}={}", serde_json::Value::String(value.to_string()))
}

fn resolve(common: &Common, flags: Vec<String>) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    overrides.extend(flags);
    RunConfig::resolve(common.preset.as_deref(), common.config.as_deref(), &overrides)
}

fn parity_flag(p: Option<ParityArg>) -> Option<String> {
    p.map(|p| match p {
        ParityArg::Even => "scan.parity=\"even\"".to_string(),
        ParityArg::Odd => "scan.parity=\"odd\"".to_string(),
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        // reader went away (`| head`); nothing left to report
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::InvalidArgument("worker count must be at least 1".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    configure_workers(cli.workers)?;
    match cli.command {
        Command::ShiftMap { common, report: rep, steps, parity } => {
            let mut flags: Vec<String> = parity_flag(parity).into_iter().collect();
            if let Some(n) = steps {
                flags.push(format!("scan.q1.steps={n}"));
                flags.push(format!("scan.q2.steps={n}"));
            }
            let cfg = resolve(&common, flags)?;
            shift_map(&cfg, common.out.as_deref(), rep.as_deref())
        }
        Command::Scan { common, report: rep, direction, anchor, span, steps, parity } => {
            let mut flags: Vec<String> = parity_flag(parity).into_iter().collect();
            if let Some(d) = direction {
                let v = match d {
                    Direction::Q1 => "[1,0]",
                    Direction::Q2 => "[0,1]",
                    Direction::Com => "[1,1]",
                    Direction::Rel => "[-1,1]",
                };
                flags.push(format!("scan.line.direction={v}"));
            }
            if let Some(a) = anchor {
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::InvalidArgument(format!("--anchor expects q1,q2, got `{a}`")));
                }
                let q1 = parse_quantity(parts[0], Dimension::Length)?;
                let q2 = parse_quantity(parts[1], Dimension::Length)?;
                flags.push(format!("scan.line.anchor={{\"point\":[{q1:e},{q2:e}]}}"));
            }
            if let Some(s) = span {
                flags.push(quoted("scan.line.span", &s));
            }
            if let Some(n) = steps {
                flags.push(format!("scan.line.steps={n}"));
            }
            let cfg = resolve(&common, flags)?;
            scan(&cfg, common.out.as_deref(), rep.as_deref())
        }
        Command::Fit { kind } => fit(kind),
        Command::CouplingSummary { common, separation } => {
            let cfg = resolve(&common, Vec::new())?;
            let sep = separation.map(|s| parse_quantity(&s, Dimension::Length)).transpose()?;
            summary(&cfg, sep, common.out.as_deref())
        }
        Command::Cooling { common, report: rep, axis, allow_unstable } => {
            let mut flags = Vec::new();
            if let Some(a) = axis {
                let name = match a {
                    AxisArg::Detuning => "detuning",
                    AxisArg::Power => "power",
                };
                flags.push(format!("cooling.sweep.axis=\"{name}\""));
            }
            let cfg = resolve(&common, flags)?;
            cooling(&cfg, allow_unstable, common.out.as_deref(), rep.as_deref())
        }
    }
}

#[derive(Serialize)]
struct ShiftMapSummary {
    ell: i64,
    parity: Parity,
    fsr_rad_s: f64,
    rows: usize,
    branch_edge_samples: usize,
    max_abs_gradient_rad_s_per_m: f64,
}

fn shift_map(cfg: &RunConfig, out: Option<&Path>, rep: Option<&Path>) -> Result<()> {
    let params = cfg.shift_params()?;
    let parity = cfg.parity();
    let field = coupling_map(&params, &cfg.grid(), parity)?;
    let mut w = CsvOut::new(sink(out)?, &["q1_m", "q2_m", "domega_over_fsr", "g1_rad_s_per_m", "g2_rad_s_per_m", "flag"])?;
    for idx in 0..field.delta_omega.len() {
        let (q1, q2) = field.position(idx);
        w.row([
            fmt(q1),
            fmt(q2),
            fmt(field.delta_omega[idx] / field.fsr),
            fmt(field.g1[idx]),
            fmt(field.g2[idx]),
            field.flags[idx].as_str().to_string(),
        ])?;
    }
    w.finish()?;
    if let Some(path) = rep {
        let (ell, _) = reference_mode(cfg.geometry.length, cfg.geometry.wavelength);
        let summary = ShiftMapSummary {
            ell,
            parity,
            fsr_rad_s: field.fsr,
            rows: field.delta_omega.len(),
            branch_edge_samples: field.flags.iter().filter(|f| **f != crate::coupling::SampleFlag::Ok).count(),
            max_abs_gradient_rad_s_per_m: field.max_abs_gradient(),
        };
        report(Some(path), "shift-map", cfg, summary, Vec::new())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScanSummary {
    anchor: [f64; 2],
    direction: [f64; 2],
    membrane_reflectivity: f64,
    max_abs_slope_rad_s_per_m: f64,
    single_membrane_max_rad_s_per_m: f64,
    slope_ratio: f64,
}

fn scan(cfg: &RunConfig, out: Option<&Path>, rep: Option<&Path>) -> Result<()> {
    let params = cfg.shift_params()?;
    let parity = cfg.parity();
    let line = &cfg.scan.line;
    let anchor = match line.anchor {
        Anchor::Point(p) => p,
        Anchor::MaxCoupling => {
            let m = locate_max_coupling(&params, &cfg.grid(), parity)?;
            [m.q1, m.q2]
        }
    };
    let norm = line.direction[0].hypot(line.direction[1]);
    let d = [line.direction[0] / norm, line.direction[1] / norm];
    let start = (anchor[0] - 0.5 * line.span * d[0], anchor[1] - 0.5 * line.span * d[1]);
    let points = line_scan(&params, parity, start, (d[0], d[1]), line.span, line.steps)?;
    let fsr = params.fsr();
    let mut w = CsvOut::new(
        sink(out)?,
        &["s_m", "q1_m", "q2_m", "domega_over_fsr", "g1_rad_s_per_m", "g2_rad_s_per_m", "slope_rad_s_per_m"],
    )?;
    let opt = |v: Option<f64>| fmt(v.unwrap_or(f64::NAN));
    for p in &points {
        w.row([fmt(p.s - 0.5 * line.span), fmt(p.q1), fmt(p.q2), fmt(p.delta_omega / fsr), opt(p.g1), opt(p.g2), opt(p.slope)])?;
    }
    w.finish()?;
    if let Some(path) = rep {
        let rm = cfg.membrane().element(cfg.geometry.wavelength)?.reflectivity();
        let single = single_membrane_max_coupling(rm, cfg.geometry.length, cfg.geometry.wavelength)?;
        let max_slope = points.iter().filter_map(|p| p.slope).map(f64::abs).fold(0.0, f64::max);
        let summary = ScanSummary {
            anchor,
            direction: d,
            membrane_reflectivity: rm,
            max_abs_slope_rad_s_per_m: max_slope,
            single_membrane_max_rad_s_per_m: single,
            slope_ratio: max_slope / single,
        };
        report(Some(path), "scan", cfg, summary, Vec::new())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    membrane_reflectivity: f64,
    separation_m: f64,
    g_single_max_rad_s_per_m: f64,
    g_max_rad_s_per_m: f64,
    gain: f64,
    g_saturation_rad_s_per_m: f64,
    located: crate::coupling::MaxCoupling,
    located_gain: f64,
}

fn summary(cfg: &RunConfig, separation: Option<f64>, out: Option<&Path>) -> Result<()> {
    let g = &cfg.geometry;
    let rm = cfg.membrane().element(g.wavelength)?.reflectivity();
    let sep = separation.unwrap_or(g.q2 - g.q1);
    let s = coupling_summary(rm, g.length, g.wavelength, sep)?;
    let params = cfg.shift_params()?;
    let located = locate_max_coupling(&params, &cfg.grid(), cfg.parity())?;
    let result = Summary {
        membrane_reflectivity: rm,
        separation_m: sep,
        g_single_max_rad_s_per_m: s.g_sing_max,
        g_max_rad_s_per_m: s.g_max,
        gain: s.gain,
        g_saturation_rad_s_per_m: s.g_sat,
        located_gain: located.g1.abs() / s.g_sing_max,
        located,
    };
    report(out, "coupling-summary", cfg, result, Vec::new())
}

#[derive(Serialize)]
struct CoolingColumn {
    value: f64,
    intracavity_photons: f64,
    rates: Vec<crate::cooling::EffectiveRates>,
    stable: bool,
}

#[derive(Serialize)]
struct CoolingSummary {
    axis: SweepAxis,
    sweep_unit: &'static str,
    density: &'static str,
    columns: Vec<CoolingColumn>,
}

fn cooling(cfg: &RunConfig, allow_unstable: bool, out: Option<&Path>, rep: Option<&Path>) -> Result<()> {
    let model = cfg.optomechanics();
    let hz = cfg.cooling.frequency.values();
    let omega: Vec<f64> = hz.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let sweep = cfg.sweep_values();
    let axis = cfg.cooling.sweep.axis;
    let map = heatmap(&model, &omega, axis, &sweep, allow_unstable)?;
    let labels = crate::coupling::Axis::new(cfg.cooling.sweep.start, cfg.cooling.sweep.stop, cfg.cooling.sweep.steps).values();
    let (name, unit) = match axis {
        SweepAxis::Detuning => ("detuning_over_mean", "mean mechanical frequency"),
        SweepAxis::Power => ("power_w", "W"),
    };
    let mut header = vec!["frequency_hz".to_string()];
    header.extend(labels.iter().map(|v| format!("dsn_m2_per_hz[{name}={}]", fmt(*v))));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = CsvOut::new(sink(out)?, &header_refs)?;
    for (i, f) in hz.iter().enumerate() {
        let mut row = vec![fmt(*f)];
        row.extend(map.values.iter().map(|col| fmt(col[i])));
        w.row(row)?;
    }
    w.finish()?;
    if let Some(path) = rep {
        let mut warnings = Vec::new();
        for (i, e) in &map.unstable {
            warnings.push(format!("column {i} unstable: eigenvalue {e}"));
        }
        let columns = labels
            .iter()
            .zip(&sweep)
            .enumerate()
            .map(|(i, (label, v))| {
                let c = match axis {
                    SweepAxis::Detuning => model.with_detuning(*v),
                    SweepAxis::Power => model.with_power(*v),
                };
                Ok(CoolingColumn {
                    value: *label,
                    intracavity_photons: intracavity_photons(&c)?,
                    rates: map.rates[i].clone(),
                    stable: stability_check(&c)?.stable,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if columns.iter().flat_map(|c| &c.rates).any(|r| !r.weak_coupling) {
            warnings.push("enhanced coupling exceeds κ/20 somewhere; weak-coupling rates are indicative only".into());
        }
        let summary = CoolingSummary {
            axis,
            sweep_unit: unit,
            density: "one-sided displacement spectral density (symmetrized), m²/Hz",
            columns,
        };
        report(Some(path), "cooling", cfg, summary, warnings)?;
    }
    Ok(())
}

fn fit(kind: FitCommand) -> Result<()> {
    match kind {
        FitCommand::Airy { common, data: path, mode, init_length, init_finesse } => {
            let cfg = resolve(&common, Vec::new())?;
            let (x, y) = data::read_xy(data::open(&path)?, "x_m", "intensity")?;
            let mode = match mode {
                AiryModeArg::Spectral => AiryMode::Spectral,
                AiryModeArg::LengthScan => AiryMode::LengthScan { wavelength: cfg.geometry.wavelength },
            };
            let init = match (init_length, init_finesse) {
                (Some(l), Some(f)) => Some((parse_quantity(&l, Dimension::Length)?, f)),
                (None, None) => None,
                _ => return Err(Error::InvalidArgument("--init-length and --init-finesse go together".into())),
            };
            let result = fit_airy(&x, &y, mode, init)?;
            report(common.out.as_deref(), "fit airy", &cfg, result, Vec::new())
        }
        FitCommand::Ringdown { common, data: path, length } => {
            let flags = length.map(|l| quoted("geometry.length", &l)).into_iter().collect();
            let cfg = resolve(&common, flags)?;
            let (t, y) = data::read_xy(data::open(&path)?, "time_s", "intensity")?;
            let result = ringdown_finesse(&t, &y, cfg.geometry.length)?;
            let converged = result.converged;
            let warnings = result.warnings.clone();
            report(common.out.as_deref(), "fit ringdown", &cfg, result, warnings)?;
            if converged {
                Ok(())
            } else {
                Err(Error::Fit("ring-down fit did not converge".into()))
            }
        }
        FitCommand::Thickness { common, data: path, index, max_thickness } => {
            let mut flags = Vec::new();
            if let Some(n) = index {
                flags.push(format!("geometry.index={n:e}"));
                flags.push("materials.dispersion=[]".into());
            }
            let cfg = resolve(&common, flags)?;
            let max = max_thickness.map(|m| parse_quantity(&m, Dimension::Length)).transpose()?.unwrap_or(THICKNESS_SCAN_MAX);
            let points = data::read_reflectivity(data::open(&path)?)?;
            let result = fit_thickness(&points, &cfg.dispersion(), max)?;
            report(common.out.as_deref(), "fit thickness", &cfg, result, Vec::new())
        }
        FitCommand::MembraneModes { common, data: path, stress, density } => {
            let mut flags = Vec::new();
            if let Some(s) = stress {
                flags.push(quoted("materials.stress", &s));
            }
            if let Some(d) = density {
                flags.push(quoted("materials.density", &d));
            }
            let cfg = resolve(&common, flags)?;
            let peaks = data::read_peaks(data::open(&path)?)?;
            let m = &cfg.materials;
            let fits = fit_side_lengths(&peaks, m.stress, m.density, None)?;
            #[derive(Serialize)]
            struct MembraneResult {
                fit: crate::mechanics::SideLengthFit,
                fundamental_hz: f64,
                effective_mass_kg: f64,
            }
            let mut warnings = Vec::new();
            let mut converged = true;
            let results: Vec<MembraneResult> = fits
                .into_iter()
                .map(|fit| {
                    let spec = MembraneSpec { lx: fit.lx, ly: fit.ly, stress: m.stress, density: m.density, thickness: m.thickness };
                    warnings.extend(fit.warnings.iter().map(|w| format!("membrane {}: {w}", fit.membrane)));
                    converged &= fit.converged;
                    MembraneResult { fundamental_hz: spec.frequency_hz(1, 1), effective_mass_kg: spec.effective_mass(), fit }
                })
                .collect();
            report(common.out.as_deref(), "fit membrane-modes", &cfg, results, warnings)?;
            if converged {
                Ok(())
            } else {
                Err(Error::Fit("side-length fit did not converge".into()))
            }
        }
    }
}
