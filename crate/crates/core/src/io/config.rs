//! Run configuration: a preset, deep-merged with a JSON file, then with
//! `path=value` overrides. Quantities may be bare SI numbers or strings with
//! a unit suffix.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::f64::consts::PI;
use std::path::Path;

use super::units::{parse_quantity, Dimension};
use crate::characterization::Dispersion;
use crate::cooling::{CoupledMode, OptomechanicalConfig, SweepAxis};
use crate::coupling::{Axis, GridSpec};
use crate::error::{Error, Result};
use crate::scatter::{CavityGeometry, Membrane};
use crate::spectrum::{Parity, ShiftFunctionParams};

pub const PRESETS: &[&str] = &["baseline", "scan-com", "scan-q1", "cooling-low", "cooling-high", "power-sweep"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub geometry: GeometryBlock,
    pub materials: MaterialsBlock,
    pub scan: ScanBlock,
    pub cooling: CoolingBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub wavelength: f64,
    pub length: f64,
    pub mirror_reflectivity: f64,
    /// Membrane thickness (both membranes).
    pub thickness: f64,
    pub index: f64,
    #[serde(default)]
    pub index_imag: f64,
    /// Membrane positions used by single-point commands.
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsBlock {
    /// `(wavelength, n)` rows; empty means `geometry.index` at every wavelength.
    #[serde(default)]
    pub dispersion: Vec<[f64; 2]>,
    pub stress: f64,
    pub density: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    /// Mode parity; `null` uses the parity of `ℓ = round(2L/λ)`.
    pub parity: Option<Parity>,
    pub q1: Axis,
    pub q2: Axis,
    pub line: LineBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Point of largest `|G1|` on the scan grid.
    MaxCoupling,
    Point([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineBlock {
    /// The line is centred on this point.
    pub anchor: Anchor,
    /// `(dq1, dq2)`; normalized before use.
    pub direction: [f64; 2],
    pub span: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingBlock {
    /// κ/2π, Hz.
    pub kappa: f64,
    pub input_fraction: f64,
    /// Δ in units of the mean mechanical frequency.
    pub detuning: f64,
    pub power: f64,
    pub wavelength: f64,
    pub temperature: f64,
    #[serde(default)]
    pub quantum_noise: bool,
    pub modes: Vec<ModeBlock>,
    /// Spectrum grid, Hz.
    pub frequency: Axis,
    pub sweep: SweepBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeBlock {
    /// Hz.
    pub frequency: f64,
    /// γ/2π, Hz.
    pub linewidth: f64,
    pub effective_mass: f64,
    /// g0/2π, Hz.
    pub g0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axis: SweepAxis,
    /// Detuning in units of the mean mechanical frequency, or power in W.
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

fn baseline() -> RunConfig {
    let wavelength = 1064e-9;
    let grid = GridSpec::centred(wavelength, 201);
    let cooling = OptomechanicalConfig::low_power_pair();
    RunConfig {
        preset: "baseline".into(),
        geometry: GeometryBlock {
            wavelength,
            length: 0.09,
            mirror_reflectivity: 0.99994,
            thickness: 104e-9,
            index: 2.17,
            index_imag: 0.0,
            q1: -0.25 * wavelength,
            q2: 0.25 * wavelength,
        },
        materials: MaterialsBlock { dispersion: Vec::new(), stress: 0.825e9, density: 3100.0, thickness: 100e-9 },
        scan: ScanBlock {
            parity: Some(Parity::Even),
            q1: grid.q1,
            q2: grid.q2,
            line: LineBlock { anchor: Anchor::MaxCoupling, direction: [1.0, 0.0], span: wavelength, steps: 401 },
        },
        cooling: cooling_block(&cooling, Axis::new(234.5e3, 237.9e3, 500), SweepBlock {
            axis: SweepAxis::Detuning,
            start: 0.5,
            stop: 1.5,
            steps: 80,
        }),
    }
}

fn cooling_block(cfg: &OptomechanicalConfig, frequency: Axis, sweep: SweepBlock) -> CoolingBlock {
    let mean = cfg.mean_mechanical_frequency();
    CoolingBlock {
        kappa: cfg.kappa / (2.0 * PI),
        input_fraction: cfg.input_fraction,
        detuning: cfg.detuning / mean,
        power: cfg.power,
        wavelength: cfg.wavelength,
        temperature: cfg.temperature,
        quantum_noise: cfg.quantum_noise,
        modes: cfg
            .modes
            .iter()
            .map(|m| ModeBlock {
                frequency: m.omega / (2.0 * PI),
                linewidth: m.gamma / (2.0 * PI),
                effective_mass: m.effective_mass,
                g0: m.g0 / (2.0 * PI),
            })
            .collect(),
        frequency,
        sweep,
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = baseline();
        cfg.preset = name.to_string();
        match name {
            "baseline" => {}
            "scan-com" => {
                cfg.scan.line.direction = [1.0, 1.0];
            }
            "scan-q1" => {
                cfg.scan.line.direction = [1.0, 0.0];
            }
            "cooling-low" => {}
            "cooling-high" => {
                let c = OptomechanicalConfig::high_power_pair();
                cfg.cooling = cooling_block(&c, Axis::new(234.5e3, 238.2e3, 500), cfg.cooling.sweep.clone());
            }
            "power-sweep" => {
                cfg.cooling.detuning = 1.0;
                cfg.cooling.sweep = SweepBlock { axis: SweepAxis::Power, start: 0.0, stop: 400e-6, steps: 80 };
            }
            other => {
                return Err(Error::Config {
                    field: "preset".into(),
                    message: format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                })
            }
        }
        Ok(cfg)
    }

    /// Preset, then `file`, then `overrides` (`dotted.path=value`), later
    /// sources winning. The preset is `preset`, else the file's `preset`
    /// key, else `baseline`.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let file_value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    line: e.line() as u64,
                    message: format!("{}: {e}", path.display()),
                })?;
                if !value.is_object() {
                    return Err(Error::Config { field: "<root>".into(), message: "config must be a JSON object".into() });
                }
                Some(value)
            }
            None => None,
        };
        let name = preset
            .map(str::to_string)
            .or_else(|| file_value.as_ref().and_then(|v| v.get("preset")).and_then(Value::as_str).map(str::to_string))
            .unwrap_or_else(|| "baseline".into());
        let mut merged = serde_json::to_value(Self::preset(&name)?).expect("config serializes");
        if let Some(v) = file_value {
            deep_merge(&mut merged, v);
        }
        merged["preset"] = Value::String(name);
        for item in overrides {
            apply_override(&mut merged, item)?;
        }
        normalize_units(&mut merged, "")?;
        let cfg: RunConfig = serde_json::from_value(merged)
            .map_err(|e| Error::Config { field: "<root>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Config { field: field.into(), message });
        let g = &self.geometry;
        if !(g.wavelength > 0.0) {
            return bad("geometry.wavelength", "must be positive".into());
        }
        if !(g.length > 0.0) {
            return bad("geometry.length", "must be positive".into());
        }
        if !(g.mirror_reflectivity > 0.0 && g.mirror_reflectivity < 1.0) {
            return bad("geometry.mirror_reflectivity", "must lie in (0, 1)".into());
        }
        if !(g.thickness >= 0.0) || !(g.index >= 1.0) {
            return bad("geometry.thickness", "thickness must be ≥ 0 and index ≥ 1".into());
        }
        for (name, axis) in [("scan.q1", &self.scan.q1), ("scan.q2", &self.scan.q2), ("cooling.frequency", &self.cooling.frequency)] {
            if axis.steps < 2 || !(axis.stop > axis.start) {
                return bad(name, "needs start < stop and steps ≥ 2".into());
            }
        }
        let line = &self.scan.line;
        if line.steps < 2 || !(line.span > 0.0) || line.direction[0].hypot(line.direction[1]) == 0.0 {
            return bad("scan.line", "needs span > 0, steps ≥ 2 and a non-zero direction".into());
        }
        let s = &self.cooling.sweep;
        if s.steps < 2 || !(s.stop > s.start) {
            return bad("cooling.sweep", "needs start < stop and steps ≥ 2".into());
        }
        if self.cooling.modes.is_empty() {
            return bad("cooling.modes", "at least one mode is required".into());
        }
        Ok(())
    }

    pub fn membrane(&self) -> Membrane {
        Membrane { thickness: self.geometry.thickness, index: num_complex::Complex64::new(self.geometry.index, self.geometry.index_imag) }
    }

    pub fn cavity(&self) -> Result<CavityGeometry> {
        let g = &self.geometry;
        CavityGeometry::new(g.length, g.q1, g.q2, [self.membrane(); 2], g.mirror_reflectivity)
    }

    pub fn shift_params(&self) -> Result<ShiftFunctionParams> {
        ShiftFunctionParams::from_membranes([self.membrane(); 2], self.geometry.length, self.geometry.wavelength)
    }

    pub fn parity(&self) -> Parity {
        self.scan.parity.unwrap_or_else(|| {
            let (ell, _) = crate::spectrum::reference_mode(self.geometry.length, self.geometry.wavelength);
            Parity::of(ell)
        })
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { q1: self.scan.q1, q2: self.scan.q2 }
    }

    pub fn dispersion(&self) -> Dispersion {
        if self.materials.dispersion.is_empty() {
            Dispersion::Constant(self.geometry.index)
        } else {
            Dispersion::Table(self.materials.dispersion.iter().map(|r| (r[0], r[1])).collect())
        }
    }

    /// Optomechanical model at the configured detuning and power.
    pub fn optomechanics(&self) -> OptomechanicalConfig {
        let c = &self.cooling;
        let modes: Vec<CoupledMode> = c
            .modes
            .iter()
            .map(|m| CoupledMode {
                omega: 2.0 * PI * m.frequency,
                gamma: 2.0 * PI * m.linewidth,
                effective_mass: m.effective_mass,
                g0: 2.0 * PI * m.g0,
            })
            .collect();
        let mut cfg = OptomechanicalConfig {
            kappa: 2.0 * PI * c.kappa,
            input_fraction: c.input_fraction,
            detuning: 0.0,
            power: c.power,
            wavelength: c.wavelength,
            temperature: c.temperature,
            modes,
            quantum_noise: c.quantum_noise,
        };
        cfg.detuning = c.detuning * cfg.mean_mechanical_frequency();
        cfg
    }

    /// Sweep values in model units: rad/s for detuning, W for power.
    pub fn sweep_values(&self) -> Vec<f64> {
        let s = &self.cooling.sweep;
        let axis = Axis::new(s.start, s.stop, s.steps).values();
        match s.axis {
            SweepAxis::Detuning => {
                let mean = self.optomechanics().mean_mechanical_frequency();
                axis.into_iter().map(|v| v * mean).collect()
            }
            SweepAxis::Power => axis,
        }
    }
}

/// Objects merge key by key; anything else is replaced.
pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (path, raw) = item.split_once('=').ok_or_else(|| Error::Config {
        field: item.into(),
        message: "override must look like path.to.field=value".into(),
    })?;
    let path = path.trim();
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut slot = &mut *root;
    for key in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config { field: path.into(), message: "no such field".into() })?;
    }
    *slot = value;
    Ok(())
}

fn dimension_of(path: &str) -> Option<Dimension> {
    use Dimension::*;
    let d = match path {
        "geometry.wavelength" | "geometry.length" | "geometry.thickness" | "geometry.q1" | "geometry.q2" => Length,
        "materials.thickness" => Length,
        "materials.stress" => Pressure,
        "materials.density" => Density,
        "scan.q1.start" | "scan.q1.stop" | "scan.q2.start" | "scan.q2.stop" | "scan.line.span" => Length,
        "scan.line.anchor.point.*" => Length,
        "materials.dispersion.*.0" => Length,
        "cooling.kappa" | "cooling.frequency.start" | "cooling.frequency.stop" => Frequency,
        "cooling.power" => Power,
        "cooling.wavelength" => Length,
        "cooling.temperature" => Temperature,
        "cooling.modes.*.frequency" | "cooling.modes.*.linewidth" | "cooling.modes.*.g0" => Frequency,
        "cooling.modes.*.effective_mass" => Mass,
        "cooling.sweep.start" | "cooling.sweep.stop" => Any,
        _ => return None,
    };
    Some(d)
}

/// Replaces unit strings with SI numbers, in place.
fn normalize_units(value: &mut Value, path: &str) -> Result<()> {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match value {
        Value::Object(map) => {
            let keys: Vec<String> = map.keys().cloned().collect();
            for k in keys {
                normalize_units(map.get_mut(&k).expect("key exists"), &join(&k))?;
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                // `*` matches any element; inside a row the column index is kept
                let key = if path.ends_with('*') { i.to_string() } else { "*".to_string() };
                normalize_units(v, &join(&key))?;
            }
        }
        Value::String(s) => {
            if let Some(dim) = dimension_of(path) {
                let v = parse_quantity(s, dim).map_err(|e| Error::Config { field: path.into(), message: e.to_string() })?;
                *value = number(v, path)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn number(v: f64, path: &str) -> Result<Value> {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| Error::Config { field: path.into(), message: format!("{v} is not finite") })
}

/// Resolved config as a JSON object, for embedding in reports.
pub fn to_json(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Object(Map::new()))
}
