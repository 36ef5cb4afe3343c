//! Optical characterization: two-membrane Airy fringes, finesse and
//! reflectivity, membrane thickness, cavity ring-down and misalignment loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::constants::SPEED_OF_LIGHT;
use crate::error::{ensure_finite, Error, Result};
use crate::fitting::{find_root_bracketed, least_squares, minimize_bracketed, FitProblem, FitResult};
use crate::scatter::ScatteringElement;

/// Normalized transmission `1/(1 + [2𝓕 sin(Δ/2)/π]²)`.
pub fn airy_transmission(finesse: f64, delta: f64) -> f64 {
    let x = 2.0 * finesse * (0.5 * delta).sin() / PI;
    1.0 / (1.0 + x * x)
}

/// Coefficient of finesse `4R/(1−R)²`.
pub fn coefficient_of_finesse(reflectivity: f64) -> f64 {
    4.0 * reflectivity / (1.0 - reflectivity).powi(2)
}

/// Far-field divergence `λ/(πw₀)` of a Gaussian beam with waist `waist`.
pub fn diffraction_angle(wavelength: f64, waist: f64) -> f64 {
    wavelength / (PI * waist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinesseEstimate {
    pub finesse: f64,
    /// True when `(1−R)/(2√R) > 1` and the arcsine argument was clamped to 1;
    /// the value is then the lower bound 1 rather than a finesse.
    pub clamped: bool,
}

/// Smallest reflectivity for which the finesse formula is defined, `3 − 2√2`.
pub const MIN_FINESSE_REFLECTIVITY: f64 = 0.171_572_875_253_809_9;

/// `𝓕 = (π/2)/arcsin[(1−R)/(2√R)]` for two identical membranes of
/// intensity reflectivity `rm`.
pub fn finesse_from_reflectivity(rm: f64) -> Result<FinesseEstimate> {
    ensure_finite("reflectivity", rm)?;
    if !(rm > 0.0 && rm < 1.0) {
        return Err(Error::Domain(format!("reflectivity must lie in (0, 1), got {rm}")));
    }
    let arg = (1.0 - rm) / (2.0 * rm.sqrt());
    Ok(FinesseEstimate { finesse: FRAC_PI_2 / arg.min(1.0).asin(), clamped: arg > 1.0 })
}

/// Inverse of [`finesse_from_reflectivity`] on its unclamped branch.
pub fn reflectivity_from_finesse(finesse: f64) -> Result<f64> {
    ensure_finite("finesse", finesse)?;
    if finesse < 1.0 {
        return Err(Error::Domain(format!("finesse below 1 has no reflectivity, got {finesse}")));
    }
    if finesse == 1.0 {
        return Ok(MIN_FINESSE_REFLECTIVITY);
    }
    let f = |r: f64| FRAC_PI_2 / ((1.0 - r) / (2.0 * r.sqrt())).min(1.0).asin() - finesse;
    find_root_bracketed(f, (MIN_FINESSE_REFLECTIVITY, 1.0 - 1e-15), 1e-16)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AiryMode {
    /// `x` is the wavelength (m), `Δ = 4πL_c/λ`; fits `L_c`.
    Spectral,
    /// `x` is a membrane displacement (m) at fixed `wavelength`,
    /// `Δ = 4π(x − x₀)/λ`; fits the offset `x₀`.
    LengthScan { wavelength: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct AiryFit {
    pub mode: AiryMode,
    /// `L_c` (spectral) or the offset `x₀` (length scan), m.
    pub length: f64,
    pub finesse: f64,
    pub uncertainties: Option<[f64; 2]>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Lengths that reproduce the data equally well (length scans: `x₀ + mλ/2`).
    pub aliases: Vec<f64>,
}

fn airy_phase(mode: AiryMode, length: f64, x: f64) -> f64 {
    match mode {
        AiryMode::Spectral => 4.0 * PI * length / x,
        AiryMode::LengthScan { wavelength } => 4.0 * PI * (x - length) / wavelength,
    }
}

fn airy_residuals(mode: AiryMode, x: &[f64], y: &[f64], p: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(&xi, &yi)| airy_transmission(p[1], airy_phase(mode, p[0], xi)) - yi).collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn check_samples(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("x and intensity columns differ in length".into()));
    }
    for (a, b) in x.iter().zip(y) {
        ensure_finite("sample", *a)?;
        ensure_finite("sample", *b)?;
    }
    Ok(())
}

/// Centred moving average over `2·half + 1` samples (shrinking at the ends).
fn smooth(y: &[f64], half: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half + 1).min(y.len()));
            y[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

/// Brightest sample of every excursion above `hi`; an excursion ends only
/// when the signal falls below `lo`, so noise on the flanks is not counted.
fn fringe_peaks(y: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut current: Option<usize> = None;
    for (i, &v) in y.iter().enumerate() {
        match current {
            None if v > hi => current = Some(i),
            Some(b) if v > y[b] => current = Some(i),
            Some(b) if v < lo => {
                peaks.push(b);
                current = None;
            }
            _ => {}
        }
    }
    peaks.extend(current);
    peaks
}

/// Least-squares fit of the Airy model to normalized intensities.
///
/// Start values (from a 7-point moving average of the data): the finesse
/// from the fringe contrast, the length from the mean fringe spacing (spectral) or the brightest sample (length scan),
/// each polished by a coarse scan before Levenberg-Marquardt. `init`
/// overrides the heuristic `(length, finesse)`.
pub fn fit_airy(x: &[f64], intensity: &[f64], mode: AiryMode, init: Option<(f64, f64)>) -> Result<AiryFit> {
    check_samples(x, intensity)?;
    if x.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 samples".into()));
    }
    let smoothed = smooth(intensity, 3);
    let (y_min, y_max) = smoothed.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let contrast_finesse = FRAC_PI_2 * (1.0 / y_min.clamp(1e-6, 0.999) - 1.0).sqrt();
    let x_min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let (length0, finesse0) = match mode {
        AiryMode::Spectral => {
            if x_min <= 0.0 {
                return Err(Error::InvalidArgument("wavelengths must be positive".into()));
            }
            let span = y_max - y_min;
            let peaks = fringe_peaks(&smoothed, y_min + 0.35 * span, y_min + 0.65 * span);
            if peaks.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "need at least 2 fringes, found {} peak(s)",
                    peaks.len()
                )));
            }
            let (a, b) = (x[peaks[0]], x[*peaks.last().unwrap()]);
            let spacing_estimate = (peaks.len() - 1) as f64 / (2.0 * (1.0 / a - 1.0 / b).abs());
            let (l0, f0) = init.unwrap_or((spacing_estimate, contrast_finesse));
            // coarse scan in L_c: phase steps of at most 0.1 rad over the band
            let dl = 0.1 * x_min / (4.0 * PI);
            let n = ((0.2 * l0 / dl).ceil() as usize).clamp(10, 200_000);
            let mut best = (f64::INFINITY, l0);
            for i in 0..=n {
                let l = l0 * (0.9 + 0.2 * i as f64 / n as f64);
                let c = sum_sq(&airy_residuals(mode, x, intensity, &[l, f0]));
                if c < best.0 {
                    best = (c, l);
                }
            }
            (best.1, f0)
        }
        AiryMode::LengthScan { wavelength } => {
            ensure_finite("wavelength", wavelength)?;
            if wavelength <= 0.0 {
                return Err(Error::InvalidArgument("wavelength must be positive".into()));
            }
            if x_max - x_min < 0.5 * wavelength {
                return Err(Error::InvalidArgument("length scan must cover at least one fringe period (lambda/2)".into()));
            }
            let brightest = intensity.iter().enumerate().fold(0, |b, (i, v)| if *v > intensity[b] { i } else { b });
            let (x0, f0) = init.unwrap_or((x[brightest], contrast_finesse));
            let mut best = (f64::INFINITY, x0);
            for i in 0..200 {
                let o = x0 + (i as f64 / 200.0 - 0.5) * 0.5 * wavelength;
                let c = sum_sq(&airy_residuals(mode, x, intensity, &[o, f0]));
                if c < best.0 {
                    best = (c, o);
                }
            }
            (best.1, f0)
        }
    };

    let fit = airy_least_squares(mode, x, intensity, length0, finesse0)?;
    if !fit.converged {
        return Err(Error::Fit(format!(
            "Airy fit did not converge ({:?}, residual norm {:e})",
            fit.termination, fit.residual_norm
        )));
    }
    let (length, finesse) = (fit.params[0], fit.params[1].abs());

    let aliases = match mode {
        AiryMode::LengthScan { wavelength } => (-2..=2).map(|m| length + m as f64 * 0.5 * wavelength).collect(),
        AiryMode::Spectral => {
            let centre = 0.5 * (x_min + x_max);
            let mut equal = Vec::new();
            for m in [-1.0, 1.0] {
                let alias = length + m * 0.5 * centre;
                if alias <= 0.0 {
                    continue;
                }
                if let Ok(a) = airy_least_squares(mode, x, intensity, alias, finesse) {
                    let tol = 1e-6 * fit.residual_norm.powi(2) + 1e-24;
                    if a.residual_norm.powi(2) <= fit.residual_norm.powi(2) + tol {
                        equal.push(a.params[0]);
                    }
                }
            }
            if !equal.is_empty() {
                equal.insert(0, length);
                return Err(Error::Ambiguity { aliases: equal });
            }
            Vec::new()
        }
    };

    let uncertainties = fit.uncertainties().map(|u| [u[0], u[1]]);
    Ok(AiryFit {
        mode,
        length,
        finesse,
        uncertainties,
        covariance: fit.covariance,
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        aliases,
    })
}

fn airy_least_squares(mode: AiryMode, x: &[f64], y: &[f64], length: f64, finesse: f64) -> Result<FitResult> {
    let scale = match mode {
        AiryMode::Spectral => length.abs().max(1e-9),
        AiryMode::LengthScan { wavelength } => wavelength,
    };
    let problem = FitProblem::new(|p: &[f64]| airy_residuals(mode, x, y, p), vec![length, finesse])
        .with_scales(vec![scale, finesse.abs().max(0.1)]);
    least_squares(&problem)
}

/// Refractive index as a function of wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dispersion {
    Constant(f64),
    /// `(wavelength m, index)` pairs, linearly interpolated; no extrapolation.
    Table(Vec<(f64, f64)>),
}

impl Dispersion {
    pub fn index(&self, wavelength: f64) -> Result<f64> {
        match self {
            Dispersion::Constant(n) => Ok(*n),
            Dispersion::Table(rows) => {
                let mut rows = rows.clone();
                rows.sort_by(|a, b| a.0.total_cmp(&b.0));
                let tol = 1e-12 * wavelength;
                if let Some(r) = rows.iter().find(|r| (r.0 - wavelength).abs() <= tol) {
                    return Ok(r.1);
                }
                for w in rows.windows(2) {
                    if w[0].0 <= wavelength && wavelength <= w[1].0 {
                        let t = (wavelength - w[0].0) / (w[1].0 - w[0].0);
                        return Ok(w[0].1 + t * (w[1].1 - w[0].1));
                    }
                }
                Err(Error::InvalidArgument(format!("wavelength {wavelength:e} m outside the dispersion table")))
            }
        }
    }
}

/// One measured membrane reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectivityPoint {
    pub wavelength: f64,
    pub reflectivity: f64,
    /// One-sigma uncertainty; unweighted when absent.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThicknessFit {
    pub thickness: f64,
    pub uncertainty: Option<f64>,
    pub residual_norm: f64,
    /// Every local minimum found by the scan, refined, smallest first.
    pub candidates: Vec<(f64, f64)>,
}

/// Default upper end of the thickness scan.
pub const THICKNESS_SCAN_MAX: f64 = 500e-9;

/// Thickness whose slab reflectivity `|r(λ, L_m, n(λ))|²` best matches the
/// measured points, found by a dense scan over `[0, max_thickness]` and
/// refined by Brent and Levenberg-Marquardt.
///
/// The reflectivity is periodic in `L_m` (period `λ/2n`) and double valued
/// around each maximum, so a single point has several exact solutions. Among
/// minima of equal cost the smallest thickness is returned.
pub fn fit_thickness(points: &[ReflectivityPoint], dispersion: &Dispersion, max_thickness: f64) -> Result<ThicknessFit> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no reflectivity points".into()));
    }
    ensure_finite("max thickness", max_thickness)?;
    if max_thickness <= 0.0 {
        return Err(Error::InvalidArgument("max thickness must be positive".into()));
    }
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        ensure_finite("wavelength", p.wavelength)?;
        ensure_finite("reflectivity", p.reflectivity)?;
        let w = match p.sigma {
            Some(s) if s > 0.0 && s.is_finite() => 1.0 / s,
            Some(s) => return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}"))),
            None => 1.0,
        };
        rows.push((p.wavelength, p.reflectivity, w, Complex64::new(dispersion.index(p.wavelength)?, 0.0)));
    }
    let residuals = |lm: f64| -> Vec<f64> {
        rows.iter()
            .map(|&(lam, r, w, n)| {
                let model = ScatteringElement::slab(lam, lm.max(0.0), n).map(|s| s.reflectivity()).unwrap_or(f64::NAN);
                w * (model - r)
            })
            .collect()
    };
    let cost = |lm: f64| sum_sq(&residuals(lm));

    let step = 0.05e-9;
    let n = (max_thickness / step).ceil() as usize;
    let samples: Vec<f64> = (0..=n).map(|i| cost(i as f64 * step)).collect();
    let mut minima = Vec::new();
    if samples[0] <= samples[1] {
        minima.push(0);
    }
    for i in 1..n {
        if samples[i] < samples[i - 1] && samples[i] <= samples[i + 1] {
            minima.push(i);
        }
    }
    if minima.is_empty() {
        return Err(Error::Fit(format!("no minimum of the thickness cost in [0, {max_thickness:e}] m")));
    }
    let mut candidates = Vec::new();
    for i in minima {
        let (lm, c) = if i == 0 {
            let (lm, c) = minimize_bracketed(cost, (0.0, step), 1e-15)?;
            if samples[0] <= c { (0.0, samples[0]) } else { (lm, c) }
        } else {
            minimize_bracketed(cost, ((i - 1) as f64 * step, (i + 1) as f64 * step), 1e-15)?
        };
        candidates.push((lm, c));
    }
    let floor = 1e-20 * rows.len() as f64;
    let best_cost = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let &(mut thickness, _) = candidates
        .iter()
        .find(|c| c.1 - best_cost <= 1e-9 * best_cost + floor)
        .expect("candidate list is non-empty");
    if thickness >= max_thickness - step {
        return Err(Error::Fit("best thickness sits on the upper end of the scan".into()));
    }

    let mut uncertainty = None;
    let mut residual_norm = cost(thickness).sqrt();
    if thickness > 0.0 {
        let problem = FitProblem::new(|p: &[f64]| residuals(p[0]), vec![thickness]).with_scales(vec![1e-9]);
        let fit = least_squares(&problem)?;
        if fit.residual_norm <= residual_norm {
            thickness = fit.params[0];
            residual_norm = fit.residual_norm;
        }
        uncertainty = fit.uncertainties().map(|u| u[0]);
    }
    Ok(ThicknessFit { thickness, uncertainty, residual_norm, candidates })
}

/// `𝓕 = πτc/L`.
pub fn finesse_from_decay_time(tau: f64, length: f64) -> f64 {
    PI * tau * SPEED_OF_LIGHT / length
}

#[derive(Debug, Clone, Serialize)]
pub struct RingdownFit {
    pub tau: f64,
    /// Amplitude at the first sample time.
    pub amplitude: f64,
    pub offset: f64,
    pub finesse: f64,
    /// Intensity decay rate `1/τ`, rad/s.
    pub kappa: f64,
    pub uncertainties: Option<[f64; 3]>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Fits `A e^{−(t−t₀)/τ} + B` (with `t₀` the first sample time) and converts
/// `τ` to finesse and linewidth for a cavity of length `length`.
///
/// Start values: `B` from the mean of the last tenth of the trace, `A` from
/// the first sample, `τ` from the first crossing of `B + A/e`.
pub fn ringdown_finesse(time: &[f64], intensity: &[f64], length: f64) -> Result<RingdownFit> {
    check_samples(time, intensity)?;
    ensure_finite("length", length)?;
    if length <= 0.0 {
        return Err(Error::InvalidArgument("cavity length must be positive".into()));
    }
    let n = time.len();
    if n < 4 {
        return Err(Error::InvalidArgument("need at least 4 samples".into()));
    }
    if time.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time must be strictly increasing".into()));
    }
    let t0 = time[0];
    let tail = (n / 10).max(1);
    let b0 = intensity[n - tail..].iter().sum::<f64>() / tail as f64;
    let a0 = intensity[0] - b0;
    if a0 <= 0.0 {
        return Err(Error::InvalidArgument("trace does not decay".into()));
    }
    let crossing = intensity.iter().position(|&v| v - b0 < a0 / std::f64::consts::E).unwrap_or(n - 1);
    let tau0 = (time[crossing] - t0).max(time[1] - t0);

    let problem = FitProblem::new(
        |p: &[f64]| {
            time.iter().zip(intensity).map(|(&t, &y)| p[0] * (-(t - t0) / p[1]).exp() + p[2] - y).collect()
        },
        vec![a0, tau0, b0],
    )
    .with_scales(vec![a0.abs(), tau0, a0.abs()])
    .with_bounds(vec![(f64::NEG_INFINITY, f64::INFINITY), (1e-3 * tau0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)]);
    let fit = least_squares(&problem)?;
    let (amplitude, tau, offset) = (fit.params[0], fit.params[1], fit.params[2]);
    if !(tau > 0.0) {
        return Err(Error::Fit(format!("fitted decay time {tau:e} is not positive")));
    }

    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!("fit did not converge ({:?})", fit.termination));
    }
    // Block means of the data must not rise by more than the noise allows.
    let sigma = fit.residual_norm / ((n as f64 - 3.0).max(1.0)).sqrt();
    let blocks = 10.min(n / 2);
    let size = n / blocks;
    let means: Vec<f64> = (0..blocks)
        .map(|b| intensity[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let allowance = 4.0 * sigma * (2.0 / size as f64).sqrt() + 1e-12 * a0.abs();
    if means.windows(2).any(|w| w[1] > w[0] + allowance) {
        warnings.push("trace is not monotonically decaying beyond the noise level".into());
    }
    if time[n - 1] - t0 < 2.0 * tau {
        warnings.push("trace shorter than two decay times; offset poorly constrained".into());
    }

    Ok(RingdownFit {
        tau,
        amplitude,
        offset,
        finesse: finesse_from_decay_time(tau, length),
        kappa: 1.0 / tau,
        uncertainties: fit.uncertainties().map(|u| [u[0], u[1], u[2]]),
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MisalignmentLoss {
    /// `1/δ𝓕 = 1/𝓕 − 1/𝓕₀`, a fractional round-trip loss.
    pub loss: f64,
    pub delta_finesse: f64,
    /// Wedge angle between the membranes that explains the loss, rad.
    pub theta_wedge: f64,
}

impl MisalignmentLoss {
    pub fn loss_ppm(&self) -> f64 {
        self.loss * 1e6
    }
}

/// Extra loss of a cavity of finesse `finesse` compared with the empty
/// cavity `empty_finesse`, and the membrane wedge angle
/// `θ_dif·√(2π/(F_m·δ𝓕))` it corresponds to.
pub fn misalignment_loss(finesse: f64, empty_finesse: f64, coefficient: f64, theta_dif: f64) -> Result<MisalignmentLoss> {
    for (name, v) in [
        ("finesse", finesse),
        ("empty finesse", empty_finesse),
        ("coefficient of finesse", coefficient),
        ("diffraction angle", theta_dif),
    ] {
        ensure_finite(name, v)?;
    }
    if !(finesse > 0.0 && finesse < empty_finesse) {
        return Err(Error::Domain(format!(
            "need 0 < F < F0, got F = {finesse}, F0 = {empty_finesse}"
        )));
    }
    if coefficient <= 0.0 {
        return Err(Error::Domain("coefficient of finesse must be positive".into()));
    }
    let loss = 1.0 / finesse - 1.0 / empty_finesse;
    let delta_finesse = 1.0 / loss;
    Ok(MisalignmentLoss {
        loss,
        delta_finesse,
        theta_wedge: theta_dif * (2.0 * PI / (coefficient * delta_finesse)).sqrt(),
    })
}
