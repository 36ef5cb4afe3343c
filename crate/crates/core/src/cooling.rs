//! Linearized optomechanics: one driven cavity mode, N mechanical modes.
//!
//! State ordering is `(X, Y, q_1, p_1, …, q_N, p_N)` with dimensionless
//! quadratures (`x_j = √2·x_zpf·q_j`). With `G_j = 2 g0_j √n_cav`:
//!
//! ```text
//! Ẋ = −κ/2·X + Δ·Y
//! Ẏ = −κ/2·Y − Δ·X + Σ G_j q_j
//! q̇_j = ω_j p_j
//! ṗ_j = −ω_j q_j − γ_j p_j + G_j X
//! ```
//!
//! `Δ > 0` is a pump red of the cavity (cooling side).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{BOLTZMANN, HBAR, SPEED_OF_LIGHT};
use crate::error::{ensure_finite, Error, Result};
use crate::mechanics::MechanicalMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledMode {
    /// rad/s.
    pub omega: f64,
    /// Intrinsic energy damping, rad/s.
    pub gamma: f64,
    pub effective_mass: f64,
    /// Single-photon coupling, rad/s.
    pub g0: f64,
}

impl CoupledMode {
    pub fn from_mechanical(mode: &MechanicalMode, g0: f64) -> Result<Self> {
        let gamma = mode
            .damping
            .ok_or_else(|| Error::InvalidArgument("mechanical mode has no damping rate".into()))?;
        Ok(Self { omega: mode.omega, gamma, effective_mass: mode.effective_mass, g0 })
    }

    pub fn zero_point_fluctuation(&self) -> f64 {
        (HBAR / (2.0 * self.effective_mass * self.omega)).sqrt()
    }

    /// Classical thermal occupation `k_B T/ħω`.
    pub fn thermal_occupation(&self, temperature: f64) -> f64 {
        BOLTZMANN * temperature / (HBAR * self.omega)
    }

    /// `k_B T/(m ω²)`, the equipartition variance in m².
    pub fn thermal_variance(&self, temperature: f64) -> f64 {
        BOLTZMANN * temperature / (self.effective_mass * self.omega * self.omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptomechanicalConfig {
    /// Intensity decay rate, rad/s.
    pub kappa: f64,
    /// Input-coupling fraction η.
    pub input_fraction: f64,
    /// rad/s, positive = red detuned.
    pub detuning: f64,
    /// W.
    pub power: f64,
    /// m.
    pub wavelength: f64,
    /// K.
    pub temperature: f64,
    pub modes: Vec<CoupledMode>,
    /// Adds vacuum noise to the cavity ports and ½ to each thermal occupation.
    #[serde(default)]
    pub quantum_noise: bool,
}

/// Mass of the fundamental mode for a 3100 kg/m³, 100 nm thick,
/// 1.519 mm × 1.536 mm membrane (`ρhLxLy/4`).
pub const DEFAULT_EFFECTIVE_MASS: f64 = 3100.0 * 100e-9 * 1.519e-3 * 1.536e-3 / 4.0;

impl OptomechanicalConfig {
    /// Two fundamental modes at 130 µW, κ = 2π×83 kHz, Δ = ω̄_m.
    pub fn low_power_pair() -> Self {
        let two_pi = 2.0 * PI;
        let modes = vec![
            CoupledMode {
                omega: two_pi * 235.810e3,
                gamma: two_pi * 1.64,
                effective_mass: DEFAULT_EFFECTIVE_MASS,
                g0: two_pi * 0.30,
            },
            CoupledMode {
                omega: two_pi * 236.580e3,
                gamma: two_pi * 9.37,
                effective_mass: DEFAULT_EFFECTIVE_MASS,
                g0: two_pi * 0.28,
            },
        ];
        let mut cfg = Self {
            kappa: two_pi * 83e3,
            input_fraction: 0.5,
            detuning: 0.0,
            power: 130e-6,
            wavelength: 1064e-9,
            temperature: 300.0,
            modes,
            quantum_noise: false,
        };
        cfg.detuning = cfg.mean_mechanical_frequency();
        cfg
    }

    /// 380 µW with the refitted frequencies and couplings.
    pub fn high_power_pair() -> Self {
        let two_pi = 2.0 * PI;
        let mut cfg = Self::low_power_pair();
        cfg.power = 380e-6;
        cfg.modes[0].omega = two_pi * 235.950e3;
        cfg.modes[0].g0 = two_pi * 0.12;
        cfg.modes[1].omega = two_pi * 236.750e3;
        cfg.modes[1].g0 = two_pi * 0.22;
        cfg.detuning = cfg.mean_mechanical_frequency();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("input_fraction", self.input_fraction),
            ("detuning", self.detuning),
            ("power", self.power),
            ("wavelength", self.wavelength),
            ("temperature", self.temperature),
        ] {
            ensure_finite(name, v)?;
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.input_fraction > 0.0 && self.input_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "input fraction must lie in (0, 1], got {}",
                self.input_fraction
            )));
        }
        if self.power < 0.0 || self.temperature < 0.0 || self.wavelength <= 0.0 {
            return Err(Error::InvalidArgument("power, temperature must be ≥ 0 and wavelength > 0".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("at least one mechanical mode is required".into()));
        }
        for (j, m) in self.modes.iter().enumerate() {
            for (name, v) in [("omega", m.omega), ("gamma", m.gamma), ("effective_mass", m.effective_mass), ("g0", m.g0)] {
                ensure_finite(name, v)?;
            }
            if m.omega <= 0.0 || m.gamma <= 0.0 || m.effective_mass <= 0.0 || m.g0 < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "mode {j}: omega, gamma, mass must be positive and g0 ≥ 0"
                )));
            }
        }
        Ok(())
    }

    pub fn mean_mechanical_frequency(&self) -> f64 {
        self.modes.iter().map(|m| m.omega).sum::<f64>() / self.modes.len() as f64
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self { detuning, ..self.clone() }
    }

    pub fn with_power(&self, power: f64) -> Self {
        Self { power, ..self.clone() }
    }

    fn dimension(&self) -> usize {
        2 + 2 * self.modes.len()
    }
}

/// `n_cav = (ηκP/ħω_L)/((κ/2)² + Δ²)`.
pub fn intracavity_photons(cfg: &OptomechanicalConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(photons_unchecked(cfg))
}

fn photons_unchecked(cfg: &OptomechanicalConfig) -> f64 {
    let omega_l = 2.0 * PI * SPEED_OF_LIGHT / cfg.wavelength;
    let flux = cfg.input_fraction * cfg.kappa * cfg.power / (HBAR * omega_l);
    flux / ((0.5 * cfg.kappa).powi(2) + cfg.detuning.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveRates {
    /// Enhanced coupling `g0·√n_cav`, rad/s.
    pub coupling: f64,
    pub gamma_opt: f64,
    pub delta_omega_opt: f64,
    /// `γ + Γ_opt`.
    pub total_damping: f64,
    /// `ω + δω_opt`.
    pub shifted_frequency: f64,
    /// `coupling < κ/20`; outside this the weak-coupling rates are only indicative.
    pub weak_coupling: bool,
}

/// Coupling below which the weak-coupling rates are treated as reliable.
pub const WEAK_COUPLING_FRACTION: f64 = 1.0 / 20.0;

/// Weak-coupling optical damping and spring for mode `j`.
pub fn effective_rates(cfg: &OptomechanicalConfig, j: usize) -> Result<EffectiveRates> {
    cfg.validate()?;
    let mode = cfg
        .modes
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("mode index {j} out of range")))?;
    let g = mode.g0 * photons_unchecked(cfg).sqrt();
    let (gamma_opt, delta_omega_opt) = sideband_rates(g, cfg.kappa, cfg.detuning, mode.omega);
    Ok(EffectiveRates {
        coupling: g,
        gamma_opt,
        delta_omega_opt,
        total_damping: mode.gamma + gamma_opt,
        shifted_frequency: mode.omega + delta_omega_opt,
        weak_coupling: g < WEAK_COUPLING_FRACTION * cfg.kappa,
    })
}

/// `(Γ_opt, δω_opt)` for enhanced coupling `g`.
pub fn sideband_rates(g: f64, kappa: f64, detuning: f64, omega: f64) -> (f64, f64) {
    let hk2 = (0.5 * kappa).powi(2);
    let (dm, dp) = (detuning - omega, detuning + omega);
    let (lm, lp) = (1.0 / (hk2 + dm * dm), 1.0 / (hk2 + dp * dp));
    let g2 = g * g;
    (g2 * kappa * (lm - lp), -g2 * (dm * lm + dp * lp))
}

/// Drift matrix for the state `(X, Y, q_1, p_1, …)`.
pub fn drift_matrix(cfg: &OptomechanicalConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    Ok(drift_unchecked(cfg))
}

fn drift_unchecked(cfg: &OptomechanicalConfig) -> DMatrix<f64> {
    let n = cfg.dimension();
    let half_kappa = 0.5 * cfg.kappa;
    let root_n = photons_unchecked(cfg).sqrt();
    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = -half_kappa;
    a[(0, 1)] = cfg.detuning;
    a[(1, 0)] = -cfg.detuning;
    a[(1, 1)] = -half_kappa;
    for (j, m) in cfg.modes.iter().enumerate() {
        let (q, p) = (2 + 2 * j, 3 + 2 * j);
        let big_g = 2.0 * m.g0 * root_n;
        a[(1, q)] = big_g;
        a[(q, p)] = m.omega;
        a[(p, q)] = -m.omega;
        a[(p, p)] = -m.gamma;
        a[(p, 0)] = big_g;
    }
    a
}

/// Diagonal of the symmetrized diffusion matrix.
fn diffusion(cfg: &OptomechanicalConfig) -> Vec<f64> {
    let mut d = vec![0.0; cfg.dimension()];
    if cfg.quantum_noise {
        d[0] = 0.5 * cfg.kappa;
        d[1] = 0.5 * cfg.kappa;
    }
    let extra = if cfg.quantum_noise { 0.5 } else { 0.0 };
    for (j, m) in cfg.modes.iter().enumerate() {
        d[3 + 2 * j] = 2.0 * m.gamma * (m.thermal_occupation(cfg.temperature) + extra);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalue with the largest real part.
    pub leading: Complex64,
}

pub fn stability_check(cfg: &OptomechanicalConfig) -> Result<StabilityReport> {
    let a = drift_matrix(cfg)?;
    let mut eigenvalues: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    let leading = eigenvalues[0];
    Ok(StabilityReport { stable: leading.re < 0.0, eigenvalues, leading })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpectrum {
    /// Angular frequencies, rad/s.
    pub omega: Vec<f64>,
    /// One-sided displacement spectral density per mode, m²/Hz; `per_mode[j][i]`.
    pub per_mode: Vec<Vec<f64>>,
    /// Sum of the per-mode densities.
    pub total: Vec<f64>,
    pub rates: Vec<EffectiveRates>,
    pub stability: StabilityReport,
}

impl NoiseSpectrum {
    /// `∫ DSN_j df` over the grid (trapezoid in Hz), m².
    pub fn mode_area(&self, j: usize) -> f64 {
        trapezoid_hz(&self.omega, &self.per_mode[j])
    }

    pub fn peak(&self, j: usize) -> Option<PeakShape> {
        let hz: Vec<f64> = self.omega.iter().map(|w| w / (2.0 * PI)).collect();
        peak_shape(&hz, &self.per_mode[j])
    }
}

fn trapezoid_hz(omega: &[f64], y: &[f64]) -> f64 {
    omega
        .windows(2)
        .zip(y.windows(2))
        .map(|(w, v)| 0.5 * (v[0] + v[1]) * (w[1] - w[0]) / (2.0 * PI))
        .sum()
}

/// One-sided DSN of every mode over `omega` (rad/s) from the full linear response.
///
/// The two-sided symmetrized spectrum `S = M·D·M†`, `M = (A + iΩ)⁻¹`, is
/// folded onto positive frequencies: `DSN_j = 4·x_zpf²·S_{q_j q_j}`.
pub fn displacement_spectrum(cfg: &OptomechanicalConfig, omega: &[f64]) -> Result<NoiseSpectrum> {
    let stability = stability_check(cfg)?;
    if !stability.stable {
        return Err(Error::Unstable { eigenvalue: stability.leading });
    }
    for &w in omega {
        ensure_finite("frequency", w)?;
    }
    let per_mode = spectrum_unchecked(cfg, omega)?;
    let total = (0..omega.len()).map(|i| per_mode.iter().map(|s| s[i]).sum()).collect();
    let rates = (0..cfg.modes.len()).map(|j| effective_rates(cfg, j)).collect::<Result<_>>()?;
    Ok(NoiseSpectrum { omega: omega.to_vec(), per_mode, total, rates, stability })
}

fn spectrum_unchecked(cfg: &OptomechanicalConfig, omega: &[f64]) -> Result<Vec<Vec<f64>>> {
    let a = drift_unchecked(cfg).map(|v| Complex64::new(v, 0.0));
    let d = diffusion(cfg);
    let n = a.nrows();
    let modes = cfg.modes.len();
    let scale: Vec<f64> = cfg.modes.iter().map(|m| 4.0 * m.zero_point_fluctuation().powi(2)).collect();
    let mut out = vec![Vec::with_capacity(omega.len()); modes];
    for &w in omega {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += Complex64::new(0.0, w);
        }
        let inv = shifted
            .try_inverse()
            .ok_or_else(|| Error::Degenerate(format!("response matrix singular at Ω = {w}")))?;
        for (j, row) in out.iter_mut().enumerate() {
            let q = 2 + 2 * j;
            let s: f64 = (0..n).map(|l| inv[(q, l)].norm_sqr() * d[l]).sum();
            row.push(scale[j] * s);
        }
    }
    Ok(out)
}

/// Weak-coupling Lorentzian for mode `j` driven by its own thermal bath.
pub fn effective_lorentzian(cfg: &OptomechanicalConfig, j: usize, omega: &[f64]) -> Result<Vec<f64>> {
    let rates = effective_rates(cfg, j)?;
    let m = cfg.modes[j];
    let extra = if cfg.quantum_noise { 0.5 } else { 0.0 };
    let force = 2.0 * m.gamma * (m.thermal_occupation(cfg.temperature) + extra);
    let scale = 4.0 * m.zero_point_fluctuation().powi(2);
    let we2 = rates.shifted_frequency.powi(2);
    Ok(omega
        .iter()
        .map(|&w| {
            let re = we2 - w * w;
            let im = w * rates.total_damping;
            scale * m.omega * m.omega * force / (re * re + im * im)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakShape {
    pub centre: f64,
    pub height: f64,
    /// Full width at half maximum, same units as the abscissa.
    pub fwhm: f64,
}

/// Height, position and FWHM of the highest peak, with linear interpolation
/// at the half-maximum crossings. `None` if either crossing is off the grid.
pub fn peak_shape(x: &[f64], y: &[f64]) -> Option<PeakShape> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let (imax, &height) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * height;
    let mut lo = None;
    for i in (0..imax).rev() {
        if y[i] <= half {
            lo = Some(x[i] + (half - y[i]) / (y[i + 1] - y[i]) * (x[i + 1] - x[i]));
            break;
        }
    }
    let mut hi = None;
    for i in imax + 1..y.len() {
        if y[i] <= half {
            hi = Some(x[i - 1] + (y[i - 1] - half) / (y[i - 1] - y[i]) * (x[i] - x[i - 1]));
            break;
        }
    }
    // parabolic vertex for the centre
    let centre = if imax > 0 && imax + 1 < y.len() {
        let (y0, y1, y2) = (y[imax - 1], y[imax], y[imax + 1]);
        let den = y0 - 2.0 * y1 + y2;
        let h = x[imax + 1] - x[imax];
        if den != 0.0 {
            x[imax] + 0.5 * h * (y0 - y2) / den
        } else {
            x[imax]
        }
    } else {
        x[imax]
    };
    Some(PeakShape { centre, height, fwhm: hi? - lo? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Detuning,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub axis: SweepAxis,
    /// rad/s.
    pub omega: Vec<f64>,
    /// Detuning in rad/s or power in W.
    pub sweep: Vec<f64>,
    /// Total DSN, `values[column][row]`; NaN for unstable columns.
    pub values: Vec<Vec<f64>>,
    pub rates: Vec<Vec<EffectiveRates>>,
    pub unstable: Vec<(usize, Complex64)>,
}

/// Total DSN over `omega` for every sweep value. Unstable columns are an
/// error unless `allow_unstable`, in which case they are filled with NaN.
pub fn heatmap(
    cfg: &OptomechanicalConfig,
    omega: &[f64],
    axis: SweepAxis,
    sweep: &[f64],
    allow_unstable: bool,
) -> Result<Heatmap> {
    cfg.validate()?;
    let columns: Vec<Result<(Vec<f64>, Vec<EffectiveRates>, Option<Complex64>)>> = sweep
        .par_iter()
        .map(|&v| {
            let c = match axis {
                SweepAxis::Detuning => cfg.with_detuning(v),
                SweepAxis::Power => cfg.with_power(v),
            };
            let rates = (0..c.modes.len()).map(|j| effective_rates(&c, j)).collect::<Result<Vec<_>>>()?;
            match displacement_spectrum(&c, omega) {
                Ok(s) => Ok((s.total, rates, None)),
                Err(Error::Unstable { eigenvalue }) if allow_unstable => {
                    Ok((vec![f64::NAN; omega.len()], rates, Some(eigenvalue)))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(sweep.len());
    let mut rates = Vec::with_capacity(sweep.len());
    let mut unstable = Vec::new();
    for (i, col) in columns.into_iter().enumerate() {
        let (v, r, u) = col?;
        values.push(v);
        rates.push(r);
        if let Some(e) = u {
            unstable.push((i, e));
        }
    }
    Ok(Heatmap { axis, omega: omega.to_vec(), sweep: sweep.to_vec(), values, rates, unstable })
}

/// Evenly spaced grid from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Solves the Lyapunov equation for the stationary covariance by direct
/// vectorization; used as a cross-check on spectrum areas.
pub fn stationary_covariance(cfg: &OptomechanicalConfig) -> Result<DMatrix<f64>> {
    let report = stability_check(cfg)?;
    if !report.stable {
        return Err(Error::Unstable { eigenvalue: report.leading });
    }
    let a = drift_unchecked(cfg);
    let n = a.nrows();
    let d = diffusion(cfg);
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AV + VAᵀ) = (I⊗A + A⊗I) vec(V)
    let big = eye.kronecker(&a) + a.kronecker(&eye);
    let mut rhs = DVector::zeros(n * n);
    for (i, di) in d.iter().enumerate() {
        rhs[i * n + i] = -di;
    }
    let v = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("Lyapunov system is singular".into()))?;
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}
