//! Cavity mode frequencies.
//!
//! With `k = ℓπ/L + δk` the mode condition `𝒟 = 0` (for `R = 1`) can be
//! inverted into `kL = ℓπ + πℋ(k; q1, q2)`. [`shift_at_k`] evaluates `ℋ`,
//! [`solve_mode`] solves the self-consistent equation and
//! [`oracle_mode_minima`] locates the same modes by brute force on `|𝒟(k)|²`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::constants::free_spectral_range;
use crate::error::{ensure_finite, Error, Result};
use crate::fitting::{find_root_bracketed, minimize_bracketed};
use crate::scatter::{resonance_denominator, CavityGeometry, Membrane, ScatteringElement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(ell: i64) -> Self {
        if ell.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// `(−1)^ℓ`.
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Membrane data entering the shift function.
///
/// `signs[j]` is `±1` according to `r_j = ±√R_j e^{iφ_j}`; it is `+1` for any
/// slab thinner than half a wavelength inside the material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftFunctionParams {
    pub reflectivities: [f64; 2],
    pub phases: [f64; 2],
    pub signs: [f64; 2],
    pub length: f64,
    pub wavelength: f64,
}

impl ShiftFunctionParams {
    pub fn new(reflectivities: [f64; 2], phases: [f64; 2], length: f64, wavelength: f64) -> Result<Self> {
        let p = Self { reflectivities, phases, signs: [1.0, 1.0], length, wavelength };
        p.validate()?;
        Ok(p)
    }

    pub fn identical(reflectivity: f64, phase: f64, length: f64, wavelength: f64) -> Result<Self> {
        Self::new([reflectivity; 2], [phase; 2], length, wavelength)
    }

    /// One membrane; the second slot holds a transparent element (`r = 0, t = −i`).
    pub fn single_membrane(reflectivity: f64, phase: f64, length: f64, wavelength: f64) -> Result<Self> {
        Self::new([reflectivity, 0.0], [phase, -FRAC_PI_2], length, wavelength)
    }

    /// Reads `R_j`, `φ_j` off the slabs of `geom` at `wavelength`.
    pub fn from_geometry(geom: &CavityGeometry, wavelength: f64) -> Result<Self> {
        Self::from_membranes(geom.membranes, geom.length, wavelength)
    }

    pub fn from_membranes(membranes: [Membrane; 2], length: f64, wavelength: f64) -> Result<Self> {
        let e: [ScatteringElement; 2] = [membranes[0].element(wavelength)?, membranes[1].element(wavelength)?];
        let p = Self {
            reflectivities: [e[0].reflectivity(), e[1].reflectivity()],
            phases: [e[0].phase(), e[1].phase()],
            signs: [e[0].reflection_sign(), e[1].reflection_sign()],
            length,
            wavelength,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("length", self.length)?;
        ensure_finite("wavelength", self.wavelength)?;
        if self.length <= 0.0 || self.wavelength <= 0.0 {
            return Err(Error::InvalidArgument("length and wavelength must be positive".into()));
        }
        for j in 0..2 {
            ensure_finite("phase", self.phases[j])?;
            let r = self.reflectivities[j];
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!("membrane reflectivity must lie in [0, 1), got {r}")));
            }
            if self.signs[j].abs() != 1.0 {
                return Err(Error::InvalidArgument("reflection signs must be ±1".into()));
            }
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn fsr(&self) -> f64 {
        free_spectral_range(self.length)
    }

    fn amplitudes(&self) -> [f64; 2] {
        [self.signs[0] * self.reflectivities[0].sqrt(), self.signs[1] * self.reflectivities[1].sqrt()]
    }
}

/// Longitudinal index closest to `wavelength` and the wavelength `2L/ℓ` of
/// that empty-cavity mode.
pub fn reference_mode(length: f64, wavelength: f64) -> (i64, f64) {
    let ell = (2.0 * length / wavelength).round() as i64;
    (ell, 2.0 * length / ell as f64)
}

/// Intermediate quantities of the shift function at one `(k, q1, q2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftTerms {
    /// `𝓕̃`, the argument of the arcsine.
    pub f_tilde: f64,
    pub theta: f64,
    pub norm: f64,
    pub u: f64,
    pub x1: f64,
    pub y: f64,
}

pub fn shift_terms(params: &ShiftFunctionParams, k: f64, q1: f64, q2: f64) -> ShiftTerms {
    let [a1, a2] = params.amplitudes();
    let [p1, p2] = params.phases;
    let x1 = 2.0 * k * q1 - p2;
    let y = 2.0 * k * q2 + p1;
    let u = 2.0 * k * (q2 - q1) + p1 + p2;
    let s = a1 * a2;
    // (1 − |s|)² > 0 because both reflectivities are below one
    let norm = (1.0 + s * s - 2.0 * s * u.cos()).sqrt();
    debug_assert!(norm >= (1.0 - s.abs()) * (1.0 - 1e-12));
    ShiftTerms {
        f_tilde: (a1 * x1.sin() - a2 * y.sin()) / norm,
        theta: (s * u.sin()).atan2(1.0 - s * u.cos()),
        norm,
        u,
        x1,
        y,
    }
}

fn arcsine_argument(f: f64) -> f64 {
    assert!(f.abs() <= 1.0 + 1e-12, "shift function argument out of range: {f}");
    f.clamp(-1.0, 1.0)
}

/// `ℋ` evaluated at an explicit wavenumber `k`.
pub fn shift_at_k(params: &ShiftFunctionParams, k: f64, q1: f64, q2: f64, parity: Parity) -> f64 {
    let t = shift_terms(params, k, q1, q2);
    (parity.sign() * arcsine_argument(t.f_tilde).asin() - t.theta - params.phases[0] - params.phases[1]) / PI
}

/// Zeroth-order shift `ℋ` at the reference wavenumber `2π/λ`; the mode shift is
/// `δω = (πc/L)·ℋ`.
pub fn shift_function(params: &ShiftFunctionParams, q1: f64, q2: f64, parity: Parity) -> f64 {
    shift_at_k(params, params.wavenumber(), q1, q2, parity)
}

/// `ℋ` for identical membranes written in centre-of-mass `Q = (q1+q2)/2` and
/// relative `q = q2 − q1` coordinates.
pub fn identical_shift(reflectivity: f64, phase: f64, k: f64, com: f64, rel: f64, parity: Parity) -> f64 {
    let a = reflectivity.sqrt();
    let u = 2.0 * (k * rel + phase);
    let norm = (1.0 + reflectivity * reflectivity - 2.0 * reflectivity * u.cos()).sqrt();
    let f = -2.0 * a * (2.0 * k * com).cos() * (k * rel + phase).sin() / norm;
    let theta = (reflectivity * u.sin()).atan2(1.0 - reflectivity * u.cos());
    (parity.sign() * arcsine_argument(f).asin() - theta - 2.0 * phase) / PI
}

/// Shift of a cavity holding one membrane with its phase absorbed into the
/// reference: `ℋ_sing = (−1)^ℓ arcsin(√R cos 4πq̃)/π` with `q̃ = q/λ`.
pub fn single_membrane_shift(reflectivity: f64, q_over_lambda: f64, parity: Parity) -> f64 {
    parity.sign() * (reflectivity.sqrt() * (4.0 * PI * q_over_lambda).cos()).asin() / PI
}

/// `ℋ` together with its partial derivatives in `q1`, `q2` (per metre) at
/// fixed `k`. Derivatives are `None` where `|𝓕̃| = 1`, i.e. on an arcsine
/// branch edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftGradient {
    pub value: f64,
    pub derivatives: Option<[f64; 2]>,
}

pub fn shift_gradient_at_k(params: &ShiftFunctionParams, k: f64, q1: f64, q2: f64, parity: Parity) -> ShiftGradient {
    let [a1, a2] = params.amplitudes();
    let t = shift_terms(params, k, q1, q2);
    let f = arcsine_argument(t.f_tilde);
    let value = (parity.sign() * f.asin() - t.theta - params.phases[0] - params.phases[1]) / PI;
    let root = (1.0 - f * f).sqrt();
    if root < 1e-12 {
        return ShiftGradient { value, derivatives: None };
    }
    let s = a1 * a2;
    let p = t.f_tilde * t.norm;
    let n2 = t.norm * t.norm;
    let dn_du = s * t.u.sin() / t.norm;
    let dtheta_du = (s * t.u.cos() - s * s) / n2;
    let dp = [2.0 * k * a1 * t.x1.cos(), -2.0 * k * a2 * t.y.cos()];
    let du = [-2.0 * k, 2.0 * k];
    let mut d = [0.0; 2];
    for j in 0..2 {
        let df = dp[j] / t.norm - p / n2 * dn_du * du[j];
        d[j] = (parity.sign() * df / root - dtheta_du * du[j]) / PI;
    }
    ShiftGradient { value, derivatives: Some(d) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSolution {
    pub ell: i64,
    /// Wavenumber of the mode, rad/m.
    pub k: f64,
    /// `c·(k − ℓπ/L)`, rad/s.
    pub delta_omega: f64,
    /// Zeroth-order value `(πc/L)·ℋ(ℓπ/L)`, rad/s.
    pub explicit_delta_omega: f64,
    pub parity: Parity,
    pub iterations: usize,
}

impl ModeSolution {
    pub fn shift_over_fsr(&self, length: f64) -> f64 {
        self.delta_omega / free_spectral_range(length)
    }
}

/// Solves `kL = ℓπ + πℋ(k)` for mode `ell` with the membrane data of `params`
/// held fixed.
///
/// Damped Newton in `x = (k − ℓπ/L)L/π` with a central-difference slope, then
/// Brent on `[−2, 2]` if Newton stalls.
pub fn solve_mode(params: &ShiftFunctionParams, q1: f64, q2: f64, ell: i64) -> Result<ModeSolution> {
    params.validate()?;
    if ell <= 1000 {
        return Err(Error::InvalidArgument(format!("mode index must exceed 1000, got {ell}")));
    }
    ensure_finite("q1", q1)?;
    ensure_finite("q2", q2)?;
    const MAX_ITERATIONS: usize = 50;
    const STEP: f64 = 1e-6;
    let parity = Parity::of(ell);
    let length = params.length;
    let k0 = ell as f64 * PI / length;
    let k_of = |x: f64| k0 + x * PI / length;
    let residual = |x: f64| x - shift_at_k(params, k_of(x), q1, q2, parity);

    let explicit = shift_at_k(params, k0, q1, q2, parity);
    let mut x = explicit;
    let mut fx = residual(x);
    let mut iterations = 0;
    let mut converged = fx.abs() < 1e-14;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let slope = (residual(x + STEP) - residual(x - STEP)) / (2.0 * STEP);
        if !slope.is_finite() || slope.abs() < 1e-6 {
            break;
        }
        let mut dx = -fx / slope;
        let mut improved = false;
        for _ in 0..30 {
            let trial = residual(x + dx);
            if trial.abs() < fx.abs() || trial == 0.0 {
                x += dx;
                fx = trial;
                improved = true;
                break;
            }
            dx *= 0.5;
        }
        if !improved || dx.abs() < 1e-15 || fx.abs() < 1e-14 {
            converged = fx.abs() < 1e-12;
            break;
        }
    }
    if !converged {
        x = find_root_bracketed(residual, (-2.0, 2.0), 1e-14).map_err(|_| Error::NoConvergence {
            iterations,
            residual: fx.abs(),
        })?;
    }
    let fsr = free_spectral_range(length);
    Ok(ModeSolution {
        ell,
        k: k_of(x),
        delta_omega: x * fsr,
        explicit_delta_omega: explicit * fsr,
        parity,
        iterations,
    })
}

/// `sin(kL+φ1+φ2) − √(R1R2) sin(kL−2kq) − √R1 sin(2kq1−φ2) + √R2 sin(2kq2+φ1)`,
/// equal to `𝒟/(−2i)` up to a unit phase when the mirrors are perfect.
pub fn reduced_mode_function(params: &ShiftFunctionParams, k: f64, q1: f64, q2: f64) -> f64 {
    let [a1, a2] = params.amplitudes();
    let [p1, p2] = params.phases;
    let l = params.length;
    (k * l + p1 + p2).sin() - a1 * a2 * (k * l - 2.0 * k * (q2 - q1)).sin() - a1 * (2.0 * k * q1 - p2).sin()
        + a2 * (2.0 * k * q2 + p1).sin()
}

/// Samples per free spectral range used by [`oracle_mode_minima`].
pub const ORACLE_SAMPLES_PER_FSR: usize = 2000;

/// All local minima of `|𝒟(k)|²` in `k_window` (rad/m), found by a dense scan
/// and refined with Brent's minimizer. Ground truth for [`solve_mode`].
pub fn oracle_mode_minima(geom: &CavityGeometry, k_window: (f64, f64)) -> Result<Vec<f64>> {
    geom.validate()?;
    let (k_lo, k_hi) = k_window;
    ensure_finite("k_lo", k_lo)?;
    ensure_finite("k_hi", k_hi)?;
    if geom.mirror_reflectivity >= 1.0 {
        return Err(Error::InvalidArgument("oracle needs mirror reflectivity below one".into()));
    }
    let fsr_k = PI / geom.length;
    let span = (k_hi - k_lo) / fsr_k;
    if !(k_lo > 0.0 && span > 0.0 && span <= 3.0 + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "window must be positive and span at most 3 FSR, spans {span:.3}"
        )));
    }
    let n = ((span * ORACLE_SAMPLES_PER_FSR as f64).ceil() as usize).max(16);
    let step = span / n as f64;
    let cost = |x: f64| -> f64 {
        let k = k_lo + x * fsr_k;
        resonance_denominator(geom, 2.0 * PI / k).map(|d| d.norm_sqr()).unwrap_or(f64::INFINITY)
    };
    let samples: Vec<f64> = (0..=n).map(|i| cost(i as f64 * step)).collect();
    let mut indices = Vec::new();
    for i in 1..n {
        if samples[i] < samples[i - 1] && samples[i] <= samples[i + 1] {
            indices.push(i);
        }
    }
    for w in indices.windows(2) {
        if w[1] - w[0] <= 2 {
            return Err(Error::Resolution(format!(
                "minima at samples {} and {} are closer than two grid steps",
                w[0], w[1]
            )));
        }
    }
    let mut minima = Vec::with_capacity(indices.len());
    for i in indices {
        let lo = (i - 1) as f64 * step;
        let hi = (i + 1) as f64 * step;
        let (x, _) = minimize_bracketed(cost, (lo, hi), 1e-13)?;
        minima.push(k_lo + x * fsr_k);
    }
    Ok(minima)
}

/// Shift of mode `ell` according to the oracle: the `|𝒟|²` minimum within
/// `±1.5` FSR of `ℓπ/L` closest to `guess` (in FSR units), as `δω/FSR`.
pub fn oracle_shift(geom: &CavityGeometry, ell: i64, guess: f64) -> Result<f64> {
    let fsr_k = PI / geom.length;
    let k0 = ell as f64 * fsr_k;
    let minima = oracle_mode_minima(geom, (k0 - 1.5 * fsr_k, k0 + 1.5 * fsr_k))?;
    minima
        .into_iter()
        .map(|k| (k - k0) / fsr_k)
        .min_by(|a, b| (a - guess).abs().total_cmp(&(b - guess).abs()))
        .ok_or_else(|| Error::Resolution("no minimum of |D|^2 in window".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 0.09;

    fn baseline_params() -> (ShiftFunctionParams, i64) {
        let (ell, lam) = reference_mode(L, 1064e-9);
        let m = Membrane::new(104e-9, 2.17);
        (ShiftFunctionParams::from_membranes([m, m], L, lam).unwrap(), ell)
    }

    #[test]
    fn reference_mode_index() {
        let (ell, lam) = reference_mode(L, 1064e-9);
        assert_eq!(ell, 169_173);
        assert_eq!(Parity::of(ell), Parity::Odd);
        assert!((lam - 1064e-9).abs() < 1e-11);
    }

    #[test]
    fn no_membranes_no_shift() {
        let p = ShiftFunctionParams::new([0.0, 0.0], [0.3, -0.1], L, 1064e-9).unwrap();
        let t = shift_terms(&p, p.wavenumber(), -1e-6, 3e-6);
        assert_eq!(t.f_tilde, 0.0);
        assert_eq!(t.theta, 0.0);
        let h = shift_function(&p, -1e-6, 3e-6, Parity::Even);
        assert!((h + 0.2 / PI).abs() < 1e-15);
    }

    #[test]
    fn empty_cavity_mode_is_exact() {
        let p = ShiftFunctionParams::new([0.0, 0.0], [0.0, 0.0], L, 1064e-9).unwrap();
        let m = solve_mode(&p, -1e-6, 2e-6, 169_173).unwrap();
        assert_eq!(m.delta_omega, 0.0);
        assert_eq!(m.k, 169_173.0 * PI / L);
    }

    #[test]
    fn identical_specialization() {
        let (p, _) = baseline_params();
        let k = p.wavenumber();
        let phase = p.phases[0];
        let mut x = 0.123_f64;
        for _ in 0..2000 {
            x = (x * 9301.0 + 0.4927).fract();
            let q1 = (x - 0.5) * 4e-6;
            x = (x * 9301.0 + 0.4927).fract();
            let q2 = q1 + x * 4e-6;
            for parity in [Parity::Even, Parity::Odd] {
                let a = shift_at_k(&p, k, q1, q2, parity);
                let b = identical_shift(p.reflectivities[0], phase, k, 0.5 * (q1 + q2), q2 - q1, parity);
                assert!((a - b).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn single_membrane_roots() {
        // R2 = 0, φ2 = −π/2: modes solve −cos(kL+φ) − √R cos(2kq) = 0
        let rm: f64 = 0.408;
        let phi = -0.18;
        let p = ShiftFunctionParams::single_membrane(rm, phi, L, 1064e-9).unwrap();
        for (q, ell) in [(1.3e-7, 169_173), (-2.9e-7, 169_174), (4.1e-6, 169_180)] {
            let m = solve_mode(&p, q, 0.01, ell).unwrap();
            let g = -(m.k * L + phi).cos() - rm.sqrt() * (2.0 * m.k * q).cos();
            assert!(g.abs() < 1e-10, "{g}");
        }
    }

    #[test]
    fn self_consistent_root_satisfies_reduced_equation() {
        let (p, ell) = baseline_params();
        for (q1, q2) in [(-3.1e-6, 20.9e-6), (1e-7, 3e-7), (-40e-6, 60e-6)] {
            let m = solve_mode(&p, q1, q2, ell).unwrap();
            // kL ~ 5e5 rad, so the phases themselves carry ~1e-10 of rounding
            let f = reduced_mode_function(&p, m.k, q1, q2);
            assert!(f.abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn shift_periodic_in_half_wavelength() {
        let (p, _) = baseline_params();
        let lam = p.wavelength;
        for (q1, q2) in [(0.1e-6, 0.4e-6), (-0.7e-6, 0.2e-6)] {
            let a = shift_function(&p, q1, q2, Parity::Even);
            let b = shift_function(&p, q1 + lam / 2.0, q2 + lam / 2.0, Parity::Even);
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inversion_symmetry() {
        let (p, _) = baseline_params();
        for (q1, q2) in [(0.1e-6, 0.4e-6), (-0.7e-6, 0.2e-6)] {
            let a = shift_function(&p, q1, q2, Parity::Odd);
            let b = shift_function(&p, -q2, -q1, Parity::Odd);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_empty_cavity() {
        let g = CavityGeometry::new(L, -1e-3, 1e-3, [Membrane::absent(); 2], 0.99994).unwrap();
        let fsr_k = PI / L;
        let k0 = 169_173.0 * fsr_k;
        let minima = oracle_mode_minima(&g, (k0 - 1.2 * fsr_k, k0 + 1.2 * fsr_k)).unwrap();
        assert_eq!(minima.len(), 3);
        for (i, k) in minima.iter().enumerate() {
            let expect = k0 + (i as f64 - 1.0) * fsr_k;
            assert!(((k - expect) / fsr_k).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_rejects_bad_windows() {
        let g = CavityGeometry::new(L, -1e-3, 1e-3, [Membrane::absent(); 2], 0.99994).unwrap();
        let fsr_k = PI / L;
        let k0 = 169_173.0 * fsr_k;
        assert!(oracle_mode_minima(&g, (k0, k0 + 4.0 * fsr_k)).is_err());
        let perfect = CavityGeometry { mirror_reflectivity: 1.0, ..g };
        assert!(oracle_mode_minima(&perfect, (k0, k0 + fsr_k)).is_err());
    }

    #[test]
    fn solver_agrees_with_oracle() {
        let (p, ell) = baseline_params();
        for (q1, q2) in [(-3.1e-6, 20.9e-6), (-80e-6, 85e-6), (0.2e-6, 0.5e-6)] {
            let g = CavityGeometry::identical(L, q1, q2, 104e-9, 2.17, 0.99994).unwrap();
            let m = solve_mode(&p, q1, q2, ell).unwrap();
            let x = m.shift_over_fsr(L);
            let oracle = oracle_shift(&g, ell, x).unwrap();
            assert!((x - oracle).abs() < 1e-4, "{x} {oracle}");
        }
    }

    #[test]
    fn single_membrane_extremum() {
        let rm: f64 = 0.408;
        let top = single_membrane_shift(rm, 0.0, Parity::Even);
        assert!((top - rm.sqrt().asin() / PI).abs() < 1e-15);
        assert!((single_membrane_shift(rm, 0.25, Parity::Even) + top).abs() < 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let (p, _) = baseline_params();
        let k = p.wavenumber();
        let h = 1e-13;
        for (q1, q2) in [(0.11e-6, 0.37e-6), (-0.52e-6, 0.21e-6)] {
            for parity in [Parity::Even, Parity::Odd] {
                let g = shift_gradient_at_k(&p, k, q1, q2, parity);
                let d = g.derivatives.unwrap();
                let f1 = (shift_at_k(&p, k, q1 + h, q2, parity) - shift_at_k(&p, k, q1 - h, q2, parity)) / (2.0 * h);
                let f2 = (shift_at_k(&p, k, q1, q2 + h, parity) - shift_at_k(&p, k, q1, q2 - h, parity)) / (2.0 * h);
                assert!((d[0] - f1).abs() < 1e-5 * d[0].abs().max(1e3), "{} {}", d[0], f1);
                assert!((d[1] - f2).abs() < 1e-5 * d[1].abs().max(1e3), "{} {}", d[1], f2);
            }
        }
    }
}
