//! One-dimensional plane-wave scattering of the mirror, membrane, membrane,
//! mirror chain.
//!
//! Every element scatters with the symmetric rule
//! `out = i·t·(wave arriving from the other side) − r·(wave arriving on this side)`,
//! so an ideal transparent element has `r = 0, t = −i`. Mirrors are real:
//! `r = −√R`, `t = −√(1−R)`.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringElement {
    pub r: Complex64,
    pub t: Complex64,
}

impl ScatteringElement {
    pub fn new(r: Complex64, t: Complex64) -> Self {
        Self { r, t }
    }

    /// Lossless real mirror of intensity reflectivity `reflectivity`.
    pub fn mirror(reflectivity: f64) -> Result<Self> {
        ensure_finite("mirror reflectivity", reflectivity)?;
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::InvalidArgument(format!(
                "mirror reflectivity must lie in [0, 1], got {reflectivity}"
            )));
        }
        Ok(Self {
            r: Complex64::new(-reflectivity.sqrt(), 0.0),
            t: Complex64::new(-(1.0 - reflectivity).sqrt(), 0.0),
        })
    }

    /// The element that is not there.
    pub fn transparent() -> Self {
        Self { r: Complex64::new(0.0, 0.0), t: -I }
    }

    /// Dielectric slab of the given thickness and (possibly complex) index:
    ///
    /// `r = (n²−1) sin(knL) / D`, `t = 2n / D`, `D = (n²+1) sin(knL) + 2in cos(knL)`.
    pub fn slab(wavelength: f64, thickness: f64, index: Complex64) -> Result<Self> {
        ensure_finite("wavelength", wavelength)?;
        ensure_finite("thickness", thickness)?;
        ensure_finite("index (real part)", index.re)?;
        ensure_finite("index (imaginary part)", index.im)?;
        if wavelength <= 0.0 {
            return Err(Error::InvalidArgument(format!("wavelength must be positive, got {wavelength}")));
        }
        if thickness < 0.0 {
            return Err(Error::InvalidArgument(format!("thickness must be non-negative, got {thickness}")));
        }
        if index.re < 1.0 {
            return Err(Error::InvalidArgument(format!("Re(index) must be >= 1, got {}", index.re)));
        }
        let k = 2.0 * PI / wavelength;
        let arg = index * k * thickness;
        let (s, c) = (arg.sin(), arg.cos());
        let n2 = index * index;
        let d = (n2 + 1.0) * s + 2.0 * I * index * c;
        Ok(Self { r: (n2 - 1.0) * s / d, t: 2.0 * index / d })
    }

    pub fn reflectivity(&self) -> f64 {
        self.r.norm_sqr()
    }

    pub fn transmissivity(&self) -> f64 {
        self.t.norm_sqr()
    }

    /// `arg t`; for a lossless slab this is the phase `φ` entering the mode equation.
    pub fn phase(&self) -> f64 {
        self.t.arg()
    }

    /// Sign of the real reflection amplitude relative to `e^{iφ}`: lossless
    /// slabs have `r = ±√R e^{iφ}`.
    pub fn reflection_sign(&self) -> f64 {
        if (self.r * self.t.conj()).re < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// The same element in the `r → −r` convention used elsewhere in the
    /// literature. Only meant for convention tests.
    pub fn with_flipped_reflection_sign(&self) -> Self {
        Self { r: -self.r, t: self.t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membrane {
    pub thickness: f64,
    pub index: Complex64,
}

impl Membrane {
    pub fn new(thickness: f64, index: f64) -> Self {
        Self { thickness, index: Complex64::new(index, 0.0) }
    }

    pub fn absent() -> Self {
        Self::new(0.0, 1.0)
    }

    pub fn is_lossless(&self) -> bool {
        self.index.im == 0.0
    }

    pub fn element(&self, wavelength: f64) -> Result<ScatteringElement> {
        ScatteringElement::slab(wavelength, self.thickness, self.index)
    }
}

/// Positions are measured from the cavity centre; the mirrors sit at `±L/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    pub length: f64,
    pub q1: f64,
    pub q2: f64,
    pub membranes: [Membrane; 2],
    pub mirror_reflectivity: f64,
}

impl CavityGeometry {
    pub fn new(length: f64, q1: f64, q2: f64, membranes: [Membrane; 2], mirror_reflectivity: f64) -> Result<Self> {
        let geom = Self { length, q1, q2, membranes, mirror_reflectivity };
        geom.validate()?;
        Ok(geom)
    }

    /// Two identical membranes of thickness `thickness` and real index `index`.
    pub fn identical(length: f64, q1: f64, q2: f64, thickness: f64, index: f64, mirror_reflectivity: f64) -> Result<Self> {
        let m = Membrane::new(thickness, index);
        Self::new(length, q1, q2, [m, m], mirror_reflectivity)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("q1", self.q1),
            ("q2", self.q2),
            ("mirror reflectivity", self.mirror_reflectivity),
        ] {
            ensure_finite(name, v)?;
        }
        if self.length <= 0.0 {
            return Err(Error::InvalidArgument(format!("cavity length must be positive, got {}", self.length)));
        }
        let h = 0.5 * self.length;
        if !(-h < self.q1 && self.q1 < self.q2 && self.q2 < h) {
            return Err(Error::InvalidArgument(format!(
                "need -L/2 < q1 < q2 < L/2, got q1 = {}, q2 = {}, L = {}",
                self.q1, self.q2, self.length
            )));
        }
        if !(0.0..=1.0).contains(&self.mirror_reflectivity) {
            return Err(Error::InvalidArgument(format!(
                "mirror reflectivity must lie in [0, 1], got {}",
                self.mirror_reflectivity
            )));
        }
        for m in &self.membranes {
            ensure_finite("membrane thickness", m.thickness)?;
            if m.thickness < 0.0 || m.index.re < 1.0 || !m.index.im.is_finite() {
                return Err(Error::InvalidArgument(format!("bad membrane {m:?}")));
            }
        }
        Ok(())
    }

    /// `(L1, L2, L3)`; `L3` is taken as the remainder so the three sum to `L` exactly.
    pub fn subcavity_lengths(&self) -> (f64, f64, f64) {
        let l1 = self.q1 + 0.5 * self.length;
        let l2 = self.q2 - self.q1;
        (l1, l2, self.length - (l1 + l2))
    }

    pub fn is_lossless(&self) -> bool {
        self.membranes.iter().all(Membrane::is_lossless)
    }

    /// The same geometry with both membranes shifted by `dq`.
    pub fn translated(&self, dq: f64) -> Result<Self> {
        Self::new(self.length, self.q1 + dq, self.q2 + dq, self.membranes, self.mirror_reflectivity)
    }

    /// Cavity inverted about its centre: `(q1, q2) → (−q2, −q1)`.
    pub fn mirrored(&self) -> Self {
        Self {
            q1: -self.q2,
            q2: -self.q1,
            membranes: [self.membranes[1], self.membranes[0]],
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSolution {
    /// `A1..A6`: A1, A2 live in the first subcavity (right/left moving),
    /// A3, A4 in the second, A5, A6 in the third.
    pub amplitudes: [Complex64; 6],
    pub reflected: Complex64,
    pub transmitted: Complex64,
    /// Largest absolute residual of the eight field equations.
    pub max_residual: f64,
}

struct Coefficients {
    k: f64,
    r: Complex64,
    t: Complex64,
    r1: Complex64,
    t1: Complex64,
    r2: Complex64,
    t2: Complex64,
    l1: f64,
    l2: f64,
    l3: f64,
}

fn coefficients(geom: &CavityGeometry, wavelength: f64) -> Result<Coefficients> {
    geom.validate()?;
    let mirror = ScatteringElement::mirror(geom.mirror_reflectivity)?;
    let m1 = geom.membranes[0].element(wavelength)?;
    let m2 = geom.membranes[1].element(wavelength)?;
    let (l1, l2, l3) = geom.subcavity_lengths();
    Ok(Coefficients {
        k: 2.0 * PI / wavelength,
        r: mirror.r,
        t: mirror.t,
        r1: m1.r,
        t1: m1.t,
        r2: m2.r,
        t2: m2.t,
        l1,
        l2,
        l3,
    })
}

type System = (SMatrix<Complex64, 8, 8>, SVector<Complex64, 8>);

fn field_system(c: &Coefficients) -> System {
    let e = |x: f64| Complex64::from_polar(1.0, c.k * x);
    let one = Complex64::new(1.0, 0.0);
    let mut m = SMatrix::<Complex64, 8, 8>::zeros();
    let mut b = SVector::<Complex64, 8>::zeros();
    // unknowns: A1..A6 -> 0..5, A_ref -> 6, A_tran -> 7; A_in = 1
    m[(0, 0)] = one;
    m[(0, 1)] = c.r * e(c.l1);
    b[0] = I * c.t;

    m[(1, 1)] = one;
    m[(1, 3)] = -I * c.t1 * e(c.l2);
    m[(1, 0)] = c.r1 * e(c.l1);

    m[(2, 2)] = one;
    m[(2, 0)] = -I * c.t1 * e(c.l1);
    m[(2, 3)] = c.r1 * e(c.l2);

    m[(3, 3)] = one;
    m[(3, 5)] = -I * c.t2 * e(c.l3);
    m[(3, 2)] = c.r2 * e(c.l2);

    m[(4, 4)] = one;
    m[(4, 2)] = -I * c.t2 * e(c.l2);
    m[(4, 5)] = c.r2 * e(c.l3);

    m[(5, 5)] = one;
    m[(5, 4)] = c.r * e(c.l3);

    m[(6, 6)] = one;
    m[(6, 1)] = -I * c.t * e(c.l1);
    b[6] = -c.r;

    m[(7, 7)] = one;
    m[(7, 4)] = -I * c.t * e(c.l3);
    (m, b)
}

/// Solves the eight coupled field equations for unit input amplitude.
pub fn solve_fields(geom: &CavityGeometry, wavelength: f64) -> Result<FieldSolution> {
    let c = coefficients(geom, wavelength)?;
    let (m, b) = field_system(&c);
    let x = m
        .lu()
        .solve(&b)
        .filter(|x| x.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        .ok_or_else(|| Error::Degenerate(format!("field equations singular at wavelength {wavelength:e}")))?;
    let residual = m * x - b;
    let max_residual = residual.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(FieldSolution {
        amplitudes: [x[0], x[1], x[2], x[3], x[4], x[5]],
        reflected: x[6],
        transmitted: x[7],
        max_residual,
    })
}

/// `e^{2ikL_j}` for the three subcavities; products of these are used for
/// every longer path so that all closed forms share the same rounding.
fn round_trips(c: &Coefficients) -> [Complex64; 3] {
    [c.l1, c.l2, c.l3].map(|l| Complex64::from_polar(1.0, 2.0 * c.k * l))
}

fn denominator(c: &Coefficients) -> Complex64 {
    let [e1, e2, e3] = round_trips(c);
    let (r, r1, r2) = (c.r, c.r1, c.r2);
    let s1 = c.t1 * c.t1 + r1 * r1;
    let s2 = c.t2 * c.t2 + r2 * r2;
    1.0 - r * r * s1 * s2 * e1 * e2 * e3 + r * r2 * s1 * e1 * e2 + r * r * r1 * r2 * e1 * e3 + r * r1 * s2 * e2 * e3
        - r * r1 * e1
        - r1 * r2 * e2
        - r * r2 * e3
}

/// The resonance denominator `𝒟`; cavity modes sit at the zeros of `𝒟` for
/// `R = 1` and at the minima of `|𝒟|²` otherwise.
pub fn resonance_denominator(geom: &CavityGeometry, wavelength: f64) -> Result<Complex64> {
    Ok(denominator(&coefficients(geom, wavelength)?))
}

/// `𝒟` rewritten for lossless membranes in terms of `R, R_j, φ_j`.
///
/// Uses signed amplitudes `r_j = ε_j √R_j e^{iφ_j}` with `ε_j` from
/// [`ScatteringElement::reflection_sign`]. Equals [`resonance_denominator`]
/// whenever both indices are real.
pub fn lossless_denominator(geom: &CavityGeometry, wavelength: f64) -> Result<Complex64> {
    if !geom.is_lossless() {
        return Err(Error::InvalidArgument("lossless denominator needs real indices".into()));
    }
    let m1 = geom.membranes[0].element(wavelength)?;
    let m2 = geom.membranes[1].element(wavelength)?;
    let (l1, l2, l3) = geom.subcavity_lengths();
    let k = 2.0 * PI / wavelength;
    let big_r = geom.mirror_reflectivity;
    let a1 = m1.reflection_sign() * m1.reflectivity().sqrt();
    let a2 = m2.reflection_sign() * m2.reflectivity().sqrt();
    let (f1, f2) = (Complex64::from_polar(1.0, m1.phase()), Complex64::from_polar(1.0, m2.phase()));
    let [e1, e2, e3] = [l1, l2, l3].map(|l| Complex64::from_polar(1.0, 2.0 * k * l));
    let sr = big_r.sqrt();
    Ok(1.0 - big_r * e1 * e2 * e3 * f1 * f1 * f2 * f2 - sr * a2 * e1 * e2 * f1 * f1 * f2
        + big_r * a1 * a2 * e1 * e3 * f1 * f2
        - sr * a1 * e2 * e3 * f1 * f2 * f2
        + sr * a1 * e1 * f1
        - a1 * a2 * e2 * f1 * f2
        + sr * a2 * e3 * f2)
}

/// Whole-cavity amplitude transmission `τ_c = t² t₁ t₂ e^{ikL} / 𝒟`.
pub fn cavity_transmission(geom: &CavityGeometry, wavelength: f64) -> Result<Complex64> {
    let c = coefficients(geom, wavelength)?;
    let d = denominator(&c);
    if d.norm() == 0.0 {
        return Err(Error::Degenerate("resonance denominator vanishes".into()));
    }
    Ok(c.t * c.t * c.t1 * c.t2 * Complex64::from_polar(1.0, c.k * geom.length) / d)
}

/// Whole-cavity amplitude reflection `ϱ_c`.
pub fn cavity_reflection(geom: &CavityGeometry, wavelength: f64) -> Result<Complex64> {
    let c = coefficients(geom, wavelength)?;
    let [e1, e2, e3] = round_trips(&c);
    let d = denominator(&c);
    let d1 = 1.0 - c.r * c.r1 * e1;
    if d.norm() == 0.0 || d1.norm() == 0.0 {
        return Err(Error::Degenerate("resonance denominator vanishes".into()));
    }
    let s2 = c.r2 * c.r2 + c.t2 * c.t2;
    Ok(-c.r + c.t * c.t * c.r1 * e1 / d1 - c.t * c.t * c.t1 * c.t1 * e1 * e2 * (c.r2 - c.r * s2 * e3) / (d1 * d))
}

/// Transmission of a cavity holding one membrane at `q` (closed form).
pub fn single_membrane_transmission(
    length: f64,
    q: f64,
    membrane: Membrane,
    mirror_reflectivity: f64,
    wavelength: f64,
) -> Result<Complex64> {
    ensure_finite("q", q)?;
    if !(q.abs() < 0.5 * length) {
        return Err(Error::InvalidArgument(format!("need |q| < L/2, got q = {q}")));
    }
    let mirror = ScatteringElement::mirror(mirror_reflectivity)?;
    let m = membrane.element(wavelength)?;
    let k = 2.0 * PI / wavelength;
    let l1 = q + 0.5 * length;
    let l2 = length - l1;
    let e = |x: f64| Complex64::from_polar(1.0, 2.0 * k * x);
    let (r, t) = (mirror.r, mirror.t);
    let s = m.r * m.r + m.t * m.t;
    let d = 1.0 - r * m.r * (e(l1) + e(l2)) + r * r * s * e(length);
    if d.norm() == 0.0 {
        return Err(Error::Degenerate("resonance denominator vanishes".into()));
    }
    Ok(-I * t * t * m.t * Complex64::from_polar(1.0, k * length) / d)
}
