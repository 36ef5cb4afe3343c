//! Optomechanical couplings `G_j = ∂δω/∂q_j` as gradients of the mode shift,
//! plus the closed-form single-membrane, maximum-gain and saturation limits.
//!
//! Couplings are in rad/s per metre throughout; see
//! [`crate::constants::to_mhz_per_nm`] for the 2π×MHz/nm convention.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{free_spectral_range, SPEED_OF_LIGHT};
use crate::error::{ensure_finite, Error, Result};
use crate::fitting::nelder_mead;
use crate::spectrum::{shift_at_k, shift_gradient_at_k, Parity, ShiftFunctionParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(start: f64, stop: f64, steps: usize) -> Self {
        Self { start, stop, steps }
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.steps - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.stop
        } else {
            self.start + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        ensure_finite(name, self.start)?;
        ensure_finite(name, self.stop)?;
        if self.steps < 2 || self.stop <= self.start {
            return Err(Error::InvalidArgument(format!(
                "{name} axis needs start < stop and at least 2 steps"
            )));
        }
        Ok(())
    }
}

/// Rectangular `(q1, q2)` grid; rows run over `q1` (outer), columns over `q2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q1: Axis,
    pub q2: Axis,
}

impl GridSpec {
    /// One wavelength centred on the origin along both axes; 201 steps give
    /// the coarsest allowed step `λ/200`.
    pub fn centred(wavelength: f64, steps: usize) -> Self {
        let axis = Axis::new(-0.5 * wavelength, 0.5 * wavelength, steps);
        Self { q1: axis, q2: axis }
    }

    pub fn len(&self) -> usize {
        self.q1.steps * self.q2.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, wavelength: f64) -> Result<()> {
        self.q1.validate("q1")?;
        self.q2.validate("q2")?;
        let limit = wavelength / 200.0 * (1.0 + 1e-9);
        if self.q1.step() > limit || self.q2.step() > limit {
            return Err(Error::InvalidArgument(format!(
                "grid step must not exceed lambda/200 = {:e} m",
                wavelength / 200.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFlag {
    Ok,
    /// The arcsine argument touches ±1 near this sample: the gradient is
    /// singular or the finite difference straddles the edge.
    BranchEdge,
}

impl SampleFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleFlag::Ok => "ok",
            SampleFlag::BranchEdge => "branch-edge",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingField {
    pub grid: GridSpec,
    pub parity: Parity,
    pub fsr: f64,
    /// `δω` in rad/s, row-major with `q1` outer.
    pub delta_omega: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    /// `G_Q = G1 + G2`.
    pub g_com: Vec<f64>,
    /// `G_q = (G2 − G1)/2`.
    pub g_rel: Vec<f64>,
    pub flags: Vec<SampleFlag>,
}

impl CouplingField {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.grid.q2.steps + j
    }

    pub fn position(&self, idx: usize) -> (f64, f64) {
        let n2 = self.grid.q2.steps;
        (self.grid.q1.value(idx / n2), self.grid.q2.value(idx % n2))
    }

    pub fn max_abs_gradient(&self) -> f64 {
        self.g1
            .iter()
            .zip(&self.g2)
            .zip(&self.flags)
            .filter(|(_, f)| **f == SampleFlag::Ok)
            .map(|((a, b), _)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

/// `(G1, G2)` in rad/s per metre from the analytic derivative of `ℋ` at the
/// reference wavenumber; `None` on a branch edge.
pub fn shift_gradient(params: &ShiftFunctionParams, q1: f64, q2: f64, parity: Parity) -> Option<[f64; 2]> {
    let fsr = params.fsr();
    shift_gradient_at_k(params, params.wavenumber(), q1, q2, parity)
        .derivatives
        .map(|[a, b]| [fsr * a, fsr * b])
}

/// Finite-difference step used by [`coupling_map`], as a fraction of `λ`.
const FD_STEP: f64 = 1e-5;

fn sample(params: &ShiftFunctionParams, q1: f64, q2: f64, parity: Parity) -> (f64, f64, f64, SampleFlag) {
    let fsr = params.fsr();
    let k = params.wavenumber();
    let h = FD_STEP * params.wavelength;
    let value = shift_at_k(params, k, q1, q2, parity);
    let g1 = fsr * (shift_at_k(params, k, q1 + h, q2, parity) - shift_at_k(params, k, q1 - h, q2, parity)) / (2.0 * h);
    let g2 = fsr * (shift_at_k(params, k, q1, q2 + h, parity) - shift_at_k(params, k, q1, q2 - h, parity)) / (2.0 * h);
    let scale = fsr / params.wavelength;
    let flag = match shift_gradient(params, q1, q2, parity) {
        Some([a1, a2]) if (a1 - g1).abs() <= 1e-5 * a1.abs().max(scale) && (a2 - g2).abs() <= 1e-5 * a2.abs().max(scale) => {
            SampleFlag::Ok
        }
        _ => SampleFlag::BranchEdge,
    };
    (fsr * value, g1, g2, flag)
}

/// Samples `δω`, `G1`, `G2` on `grid`. Gradients come from central differences
/// of `ℋ`; samples where they disagree with the analytic derivative (which
/// only happens next to an arcsine branch edge) are flagged.
pub fn coupling_map(params: &ShiftFunctionParams, grid: &GridSpec, parity: Parity) -> Result<CouplingField> {
    params.validate()?;
    grid.validate(params.wavelength)?;
    let q1s = grid.q1.values();
    let q2s = grid.q2.values();
    let rows: Vec<Vec<(f64, f64, f64, SampleFlag)>> = q1s
        .par_iter()
        .map(|&q1| q2s.iter().map(|&q2| sample(params, q1, q2, parity)).collect())
        .collect();
    let n = grid.len();
    let mut field = CouplingField {
        grid: *grid,
        parity,
        fsr: params.fsr(),
        delta_omega: Vec::with_capacity(n),
        g1: Vec::with_capacity(n),
        g2: Vec::with_capacity(n),
        g_com: Vec::with_capacity(n),
        g_rel: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
    };
    for (d, g1, g2, flag) in rows.into_iter().flatten() {
        field.delta_omega.push(d);
        field.g1.push(g1);
        field.g2.push(g2);
        field.g_com.push(g1 + g2);
        field.g_rel.push(0.5 * (g2 - g1));
        field.flags.push(flag);
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxCoupling {
    pub q1: f64,
    pub q2: f64,
    pub g1: f64,
    pub g2: f64,
    pub g_com: f64,
    pub g_rel: f64,
}

/// Point of largest `|G1|`: grid argmax (ties go to the smallest `|q2 − q1|`)
/// refined by Nelder-Mead on the analytic gradient.
pub fn locate_max_coupling(params: &ShiftFunctionParams, grid: &GridSpec, parity: Parity) -> Result<MaxCoupling> {
    params.validate()?;
    grid.validate(params.wavelength)?;
    let q1s = grid.q1.values();
    let q2s = grid.q2.values();
    let mut best: Option<(f64, f64, f64)> = None;
    for &q1 in &q1s {
        for &q2 in &q2s {
            let Some([g1, _]) = shift_gradient(params, q1, q2, parity) else { continue };
            let a = g1.abs();
            best = match best {
                None => Some((a, q1, q2)),
                Some((b, p1, p2)) => {
                    let tie = (a - b).abs() <= 1e-9 * b;
                    if (!tie && a > b) || (tie && (q2 - q1).abs() < (p2 - p1).abs()) {
                        Some((a, q1, q2))
                    } else {
                        Some((b, p1, p2))
                    }
                }
            };
        }
    }
    let (_, q1, q2) = best.ok_or_else(|| Error::Degenerate("no regular sample on the grid".into()))?;
    let lam = params.wavelength;
    let scale = params.fsr() / lam;
    let objective = |x: &[f64]| match shift_gradient(params, x[0] * lam, x[1] * lam, parity) {
        Some([g1, _]) => -g1.abs() / scale,
        None => 0.0,
    };
    let refined = nelder_mead(objective, &[q1 / lam, q2 / lam], &[2e-3, 2e-3], 1e-13, 4000);
    let (q1, q2) = (refined.x[0] * lam, refined.x[1] * lam);
    let [g1, g2] = shift_gradient(params, q1, q2, parity)
        .ok_or_else(|| Error::Degenerate("refinement ended on a branch edge".into()))?;
    Ok(MaxCoupling { q1, q2, g1, g2, g_com: g1 + g2, g_rel: 0.5 * (g2 - g1) })
}

/// Nodes and weights of 3-point Gauss-Legendre on `[-1, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurlReport {
    /// Largest cell circulation divided by the cell edge length, rad/s per m.
    pub max_curl: f64,
    pub max_gradient: f64,
    pub cells_checked: usize,
    pub cells_skipped: usize,
}

/// Circulation of `(G1, G2)` around every grid cell, integrated edge by edge
/// with 3-point Gauss-Legendre and divided by the edge length. Cells touching
/// a branch edge are skipped.
pub fn cell_curl(params: &ShiftFunctionParams, grid: &GridSpec, parity: Parity) -> Result<CurlReport> {
    params.validate()?;
    grid.validate(params.wavelength)?;
    let q1s = grid.q1.values();
    let q2s = grid.q2.values();
    let cells: Vec<Option<(f64, f64)>> = (0..q1s.len() - 1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let q1s = &q1s;
            let q2s = &q2s;
            (0..q2s.len() - 1).map(move |j| {
                let (a1, b1) = (q1s[i], q1s[i + 1]);
                let (a2, b2) = (q2s[j], q2s[j + 1]);
                // line integral of component `c` along a straight edge
                let edge = |from: (f64, f64), to: (f64, f64), c: usize| -> Option<(f64, f64)> {
                    let half = [(to.0 - from.0) * 0.5, (to.1 - from.1) * 0.5];
                    let mid = [(to.0 + from.0) * 0.5, (to.1 + from.1) * 0.5];
                    let mut sum = 0.0;
                    let mut peak: f64 = 0.0;
                    for (x, w) in GAUSS3 {
                        let g = shift_gradient(params, mid[0] + x * half[0], mid[1] + x * half[1], parity)?;
                        sum += w * g[c] * half[c];
                        peak = peak.max(g[0].hypot(g[1]));
                    }
                    Some((sum, peak))
                };
                let bottom = edge((a1, a2), (b1, a2), 0)?;
                let right = edge((b1, a2), (b1, b2), 1)?;
                let top = edge((b1, b2), (a1, b2), 0)?;
                let left = edge((a1, b2), (a1, a2), 1)?;
                let circulation = bottom.0 + right.0 + top.0 + left.0;
                let h = (b1 - a1).max(b2 - a2);
                let peak = bottom.1.max(right.1).max(top.1).max(left.1);
                Some((circulation.abs() / h, peak))
            })
        })
        .collect();
    let mut report = CurlReport { max_curl: 0.0, max_gradient: 0.0, cells_checked: 0, cells_skipped: 0 };
    for cell in cells {
        match cell {
            Some((curl, peak)) => {
                report.cells_checked += 1;
                report.max_curl = report.max_curl.max(curl);
                report.max_gradient = report.max_gradient.max(peak);
            }
            None => report.cells_skipped += 1,
        }
    }
    Ok(report)
}

/// One point of a straight-line scan through the `(q1, q2)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinePoint {
    /// Signed distance along the line from its start, m.
    pub s: f64,
    pub q1: f64,
    pub q2: f64,
    pub delta_omega: f64,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    /// Derivative of `δω` along the (unit) scan direction.
    pub slope: Option<f64>,
}

/// `δω` and couplings along `start + s·direction`, `s ∈ [0, span]`.
pub fn line_scan(
    params: &ShiftFunctionParams,
    parity: Parity,
    start: (f64, f64),
    direction: (f64, f64),
    span: f64,
    steps: usize,
) -> Result<Vec<LinePoint>> {
    params.validate()?;
    let norm = direction.0.hypot(direction.1);
    if !(norm > 0.0 && span > 0.0 && steps >= 2) {
        return Err(Error::InvalidArgument("line scan needs a direction, positive span and >= 2 steps".into()));
    }
    let (d1, d2) = (direction.0 / norm, direction.1 / norm);
    let fsr = params.fsr();
    Ok((0..steps)
        .map(|i| {
            let s = span * i as f64 / (steps - 1) as f64;
            let (q1, q2) = (start.0 + s * d1, start.1 + s * d2);
            let g = shift_gradient(params, q1, q2, parity);
            LinePoint {
                s,
                q1,
                q2,
                delta_omega: fsr * crate::spectrum::shift_function(params, q1, q2, parity),
                g1: g.map(|g| g[0]),
                g2: g.map(|g| g[1]),
                slope: g.map(|g| g[0] * d1 + g[1] * d2),
            }
        })
        .collect())
}

fn check_reflectivity(rm: f64) -> Result<()> {
    ensure_finite("membrane reflectivity", rm)?;
    if !(0.0..1.0).contains(&rm) {
        return Err(Error::Domain(format!("membrane reflectivity must lie in [0, 1), got {rm}")));
    }
    Ok(())
}

/// Coupling of a single membrane at `q` in a cavity of length `length`,
/// `G = (FSR/λ)·dℋ_sing/dq̃`.
pub fn single_membrane_coupling(rm: f64, q: f64, length: f64, wavelength: f64, parity: Parity) -> Result<f64> {
    check_reflectivity(rm)?;
    let x = 4.0 * PI * q / wavelength;
    let c = rm.sqrt() * x.cos();
    let scale = free_spectral_range(length) / wavelength;
    Ok(-parity.sign() * scale * 4.0 * rm.sqrt() * x.sin() / (1.0 - c * c).sqrt())
}

/// `(FSR/λ)·4√R_m`, reached halfway between node and antinode.
pub fn single_membrane_max_coupling(rm: f64, length: f64, wavelength: f64) -> Result<f64> {
    check_reflectivity(rm)?;
    Ok(free_spectral_range(length) / wavelength * 4.0 * rm.sqrt())
}

/// Largest enhancement of the two-membrane coupling over the single-membrane
/// value, `1/(1 − √R_m)`.
pub fn max_gain(rm: f64) -> Result<f64> {
    ensure_finite("membrane reflectivity", rm)?;
    if rm >= 1.0 {
        return Err(Error::Domain(
            "gain formula is not valid for R_m >= 1; the coupling saturates (see saturation_coupling)".into(),
        ));
    }
    if rm < 0.0 {
        return Err(Error::Domain(format!("membrane reflectivity must be non-negative, got {rm}")));
    }
    Ok(1.0 / (1.0 - rm.sqrt()))
}

/// `[√R_m + (−1)^ℓ cos(2π(q̃1 + q̃2))]/(1 − R_m)` with `q̃_j = q_j/λ`.
pub fn position_dependent_gain(rm: f64, q1_over_lambda: f64, q2_over_lambda: f64, parity: Parity) -> Result<f64> {
    check_reflectivity(rm)?;
    Ok((rm.sqrt() + parity.sign() * (2.0 * PI * (q1_over_lambda + q2_over_lambda)).cos()) / (1.0 - rm))
}

/// Saturated coupling `2πc/(λq)` for membrane separation `q`.
pub fn saturation_coupling(wavelength: f64, separation: f64) -> Result<f64> {
    ensure_finite("wavelength", wavelength)?;
    ensure_finite("separation", separation)?;
    if separation <= 0.0 || wavelength <= 0.0 {
        return Err(Error::Domain("saturation coupling needs positive wavelength and separation".into()));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / (wavelength * separation))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingSummary {
    pub g_sing_max: f64,
    pub g_max: f64,
    pub gain: f64,
    pub g_sat: f64,
}

pub fn coupling_summary(rm: f64, length: f64, wavelength: f64, separation: f64) -> Result<CouplingSummary> {
    let g_sing_max = single_membrane_max_coupling(rm, length, wavelength)?;
    let gain = max_gain(rm)?;
    Ok(CouplingSummary {
        g_sing_max,
        g_max: gain * g_sing_max,
        gain,
        g_sat: saturation_coupling(wavelength, separation)?,
    })
}
