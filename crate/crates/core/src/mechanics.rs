//! Drum modes of stressed rectangular membranes,
//! `f_mn = (v/2)·√((m/Lx)² + (n/Ly)²)` with `v = √(σ/ρ)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::HBAR;
use crate::error::{ensure_finite, Error, Result};
use crate::fitting::{least_squares, FitProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembraneSpec {
    pub lx: f64,
    pub ly: f64,
    /// Tensile stress, Pa.
    pub stress: f64,
    /// kg/m³.
    pub density: f64,
    pub thickness: f64,
}

impl MembraneSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lx", self.lx),
            ("ly", self.ly),
            ("stress", self.stress),
            ("density", self.density),
            ("thickness", self.thickness),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::InvalidArgument(format!("membrane {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn wave_speed(&self) -> f64 {
        (self.stress / self.density).sqrt()
    }

    /// `ρ·h·Lx·Ly/4`, the same for every mode.
    pub fn effective_mass(&self) -> f64 {
        self.density * self.thickness * self.lx * self.ly / 4.0
    }

    /// Frequency of mode `(m, n)` in Hz.
    pub fn frequency_hz(&self, m: u32, n: u32) -> f64 {
        mode_frequency_hz(self.wave_speed(), self.lx, self.ly, m, n)
    }
}

fn mode_frequency_hz(speed: f64, lx: f64, ly: f64, m: u32, n: u32) -> f64 {
    0.5 * speed * ((m as f64 / lx).powi(2) + (n as f64 / ly).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub membrane: usize,
    pub m: u32,
    pub n: u32,
    /// rad/s.
    pub omega: f64,
    /// Energy damping rate, rad/s.
    pub damping: Option<f64>,
    pub effective_mass: f64,
}

impl MechanicalMode {
    pub fn frequency_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    pub fn quality_factor(&self) -> Option<f64> {
        self.damping.filter(|g| *g > 0.0).map(|g| self.omega / g)
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = Some(damping);
        self
    }
}

/// All modes with `1 ≤ m, n ≤ max_index`, sorted by frequency (ties by `(m, n)`).
pub fn mode_frequencies(spec: &MembraneSpec, membrane: usize, max_index: u32) -> Result<Vec<MechanicalMode>> {
    spec.validate()?;
    if max_index < 1 {
        return Err(Error::InvalidArgument("max index must be at least 1".into()));
    }
    let mass = spec.effective_mass();
    let mut modes: Vec<MechanicalMode> = (1..=max_index)
        .flat_map(|m| (1..=max_index).map(move |n| (m, n)))
        .map(|(m, n)| MechanicalMode {
            membrane,
            m,
            n,
            omega: 2.0 * PI * spec.frequency_hz(m, n),
            damping: None,
            effective_mass: mass,
        })
        .collect();
    modes.sort_by(|a, b| a.omega.total_cmp(&b.omega).then((a.m, a.n).cmp(&(b.m, b.n))));
    Ok(modes)
}

/// `√(ħ/(2 m_eff ω))`.
pub fn zero_point_fluctuation(mode: &MechanicalMode) -> Result<f64> {
    if !(mode.effective_mass > 0.0 && mode.omega > 0.0) {
        return Err(Error::InvalidArgument("effective mass and frequency must be positive".into()));
    }
    Ok((HBAR / (2.0 * mode.effective_mass * mode.omega)).sqrt())
}

/// A measured peak with its mode assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frequency_hz: f64,
    pub membrane: usize,
    pub m: u32,
    pub n: u32,
    pub quality_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeResidual {
    pub m: u32,
    pub n: u32,
    pub measured_hz: f64,
    pub model_hz: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideLengthFit {
    pub membrane: usize,
    pub lx: f64,
    pub ly: f64,
    pub uncertainties: Option<[f64; 2]>,
    pub residuals: Vec<ModeResidual>,
    /// RMS relative frequency error.
    pub rms_relative_error: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Largest per-mode relative error accepted without a warning.
pub const SIDE_FIT_WARNING: f64 = 0.01;

/// Fits `(Lx, Ly)` per membrane to assigned peaks with `σ`, `ρ` held fixed.
///
/// `f² ∝ m²/Lx² + n²/Ly²` is linear in `(1/Lx², 1/Ly²)`, which gives the
/// start values; the final fit minimizes relative frequency errors.
/// `init` (per membrane, in membrane order) replaces the linear start.
pub fn fit_side_lengths(
    peaks: &[Peak],
    stress: f64,
    density: f64,
    init: Option<&[(f64, f64)]>,
) -> Result<Vec<SideLengthFit>> {
    ensure_finite("stress", stress)?;
    ensure_finite("density", density)?;
    if stress <= 0.0 || density <= 0.0 {
        return Err(Error::InvalidArgument("stress and density must be positive".into()));
    }
    let speed = (stress / density).sqrt();
    let mut ids: Vec<usize> = peaks.iter().map(|p| p.membrane).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut fits = Vec::with_capacity(ids.len());
    for (slot, &id) in ids.iter().enumerate() {
        let own: Vec<&Peak> = peaks.iter().filter(|p| p.membrane == id).collect();
        for p in &own {
            ensure_finite("peak frequency", p.frequency_hz)?;
            if p.frequency_hz <= 0.0 || p.m == 0 || p.n == 0 {
                return Err(Error::InvalidArgument(format!("bad peak {p:?}")));
            }
        }
        if own.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "membrane {id}: need at least 3 assigned peaks, got {}",
                own.len()
            )));
        }
        let ratio = |p: &Peak| (p.m as f64 / p.n as f64).powi(2);
        let r0 = ratio(own[0]);
        if own.iter().all(|p| (ratio(p) - r0).abs() <= 1e-12 * r0) {
            return Err(Error::Underdetermined(format!(
                "membrane {id}: all assigned modes have the same m:n shape, Lx and Ly cannot be separated"
            )));
        }

        let (lx0, ly0) = match init.and_then(|i| i.get(slot)) {
            Some(&v) => v,
            None => linear_start(&own, speed).ok_or_else(|| {
                Error::Fit(format!("membrane {id}: linear start gives non-physical side lengths"))
            })?,
        };
        let residual = |p: &[f64]| -> Vec<f64> {
            own.iter()
                .map(|pk| mode_frequency_hz(speed, p[0], p[1], pk.m, pk.n) / pk.frequency_hz - 1.0)
                .collect()
        };
        let problem = FitProblem::new(residual, vec![lx0, ly0]);
        let fit = least_squares(&problem)?;
        let (lx, ly) = (fit.params[0], fit.params[1]);
        let residuals: Vec<ModeResidual> = own
            .iter()
            .map(|pk| {
                let model = mode_frequency_hz(speed, lx, ly, pk.m, pk.n);
                ModeResidual {
                    m: pk.m,
                    n: pk.n,
                    measured_hz: pk.frequency_hz,
                    model_hz: model,
                    relative_error: model / pk.frequency_hz - 1.0,
                }
            })
            .collect();
        let rms = (residuals.iter().map(|r| r.relative_error.powi(2)).sum::<f64>() / residuals.len() as f64).sqrt();
        let mut warnings = Vec::new();
        if !fit.converged {
            warnings.push(format!("fit did not converge ({:?})", fit.termination));
        }
        let worst = residuals.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max);
        if worst > SIDE_FIT_WARNING {
            warnings.push(format!(
                "largest relative frequency error {worst:.3e} exceeds {SIDE_FIT_WARNING}; check the mode assignment"
            ));
        }
        fits.push(SideLengthFit {
            membrane: id,
            lx,
            ly,
            uncertainties: fit.uncertainties().map(|u| [u[0], u[1]]),
            residuals,
            rms_relative_error: rms,
            converged: fit.converged,
            warnings,
        });
    }
    Ok(fits)
}

fn linear_start(peaks: &[&Peak], speed: f64) -> Option<(f64, f64)> {
    // 4f²/v² = m²·a + n²·b with a = 1/Lx², b = 1/Ly²
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in peaks {
        let (x1, x2) = ((p.m as f64).powi(2), (p.n as f64).powi(2));
        let y = 4.0 * p.frequency_hz.powi(2) / (speed * speed);
        // weight by 1/y² so every peak counts with its relative error
        let w = 1.0 / (y * y);
        s11 += w * x1 * x1;
        s12 += w * x1 * x2;
        s22 += w * x2 * x2;
        t1 += w * x1 * y;
        t2 += w * x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (t1 * s22 - t2 * s12) / det;
    let b = (s11 * t2 - s12 * t1) / det;
    (a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()).then(|| (1.0 / a.sqrt(), 1.0 / b.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment {
    pub measured_hz: f64,
    /// Index into the predicted mode list.
    pub mode: usize,
    pub relative_difference: f64,
    /// Another predicted mode lies within `tolerance` of the peak.
    pub ambiguous: bool,
}

/// Assigns each measured peak to the nearest unused predicted mode, peaks
/// taken in ascending frequency. Flags every choice where a second candidate
/// lies within the relative `tolerance`.
pub fn greedy_assign(measured_hz: &[f64], predicted: &[MechanicalMode], tolerance: f64) -> Vec<Assignment> {
    let mut order: Vec<usize> = (0..measured_hz.len()).collect();
    order.sort_by(|&a, &b| measured_hz[a].total_cmp(&measured_hz[b]));
    let mut used = vec![false; predicted.len()];
    let mut out = Vec::new();
    for i in order {
        let f = measured_hz[i];
        let mut ranked: Vec<(usize, f64)> = predicted
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, m)| (j, (m.frequency_hz() / f - 1.0).abs()))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some(&(j, d)) = ranked.first() else { break };
        used[j] = true;
        let ambiguous = ranked.get(1).is_some_and(|&(_, d2)| d2 <= tolerance.max(d));
        out.push(Assignment { measured_hz: f, mode: j, relative_difference: d, ambiguous });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lx: f64, ly: f64) -> MembraneSpec {
        MembraneSpec { lx, ly, stress: 0.825e9, density: 3100.0, thickness: 100e-9 }
    }

    #[test]
    fn fundamental() {
        let s = spec(1.519e-3, 1.536e-3);
        assert!((s.frequency_hz(1, 1) / 238.8e3 - 1.0).abs() < 0.005);
    }

    #[test]
    fn square_degeneracy_and_scaling() {
        let s = spec(1.5e-3, 1.5e-3);
        assert_eq!(s.frequency_hz(1, 2), s.frequency_hz(2, 1));
        let big = spec(3.0e-3, 3.0e-3);
        for (m, n) in [(1, 1), (2, 3), (4, 1)] {
            assert!((big.frequency_hz(m, n) - 0.5 * s.frequency_hz(m, n)).abs() < 1e-9);
        }
        let r = spec(1.2e-3, 1.7e-3);
        let t = spec(1.7e-3, 1.2e-3);
        assert_eq!(r.frequency_hz(2, 3), t.frequency_hz(3, 2));
    }

    #[test]
    fn sorted_modes() {
        let modes = mode_frequencies(&spec(1.519e-3, 1.536e-3), 0, 4).unwrap();
        assert_eq!(modes.len(), 16);
        assert!(modes.windows(2).all(|w| w[0].omega <= w[1].omega));
        assert_eq!((modes[0].m, modes[0].n), (1, 1));
        let q = modes[0].with_damping(2.0 * PI * 1.64).quality_factor().unwrap();
        assert!((q - modes[0].frequency_hz() / 1.64).abs() < 1e-6 * q);
    }

    #[test]
    fn zpf() {
        let mode = MechanicalMode {
            membrane: 0,
            m: 1,
            n: 1,
            omega: 2.0 * PI * 236e3,
            damping: None,
            effective_mass: 1.9e-10,
        };
        let x = zero_point_fluctuation(&mode).unwrap();
        assert!((x / 4.3e-16 - 1.0).abs() < 0.02, "{x}");
        let heavy = MechanicalMode { effective_mass: 4.0 * mode.effective_mass, ..mode };
        assert!((zero_point_fluctuation(&heavy).unwrap() - 0.5 * x).abs() < 1e-30);
    }

    fn synthetic(s: &MembraneSpec, id: usize) -> Vec<Peak> {
        [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]
            .iter()
            .map(|&(m, n)| Peak { frequency_hz: s.frequency_hz(m, n), membrane: id, m, n, quality_factor: None })
            .collect()
    }

    #[test]
    fn noiseless_roundtrip() {
        let s = spec(1.522e-3, 1.525e-3);
        let fits = fit_side_lengths(&synthetic(&s, 0), s.stress, s.density, None).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].lx / s.lx - 1.0).abs() < 1e-10);
        assert!((fits[0].ly / s.ly - 1.0).abs() < 1e-10);
        assert!(fits[0].residuals.iter().all(|r| r.relative_error.abs() < 1e-10));
    }

    #[test]
    fn one_shape_is_underdetermined() {
        let s = spec(1.522e-3, 1.525e-3);
        let peaks: Vec<Peak> = [(1, 1), (2, 2), (3, 3)]
            .iter()
            .map(|&(m, n)| Peak { frequency_hz: s.frequency_hz(m, n), membrane: 0, m, n, quality_factor: None })
            .collect();
        assert!(matches!(fit_side_lengths(&peaks, s.stress, s.density, None), Err(Error::Underdetermined(_))));
    }

    #[test]
    fn greedy_flags_close_modes() {
        let a = mode_frequencies(&spec(1.519e-3, 1.536e-3), 0, 2).unwrap();
        let b = mode_frequencies(&spec(1.520e-3, 1.535e-3), 1, 2).unwrap();
        let all: Vec<MechanicalMode> = a.into_iter().chain(b).collect();
        let out = greedy_assign(&[all[0].frequency_hz()], &all, 1e-3);
        assert_eq!(out.len(), 1);
        assert!(out[0].ambiguous);
    }
}
