//! C ABI over `membrane-sandwich`.
//!
//! Every fallible call returns an [`MsStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`ms_last_error_message`]. Handles are opaque; free them with the matching
//! `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use membrane_sandwich::characterization::finesse_from_reflectivity;
use membrane_sandwich::cooling::{displacement_spectrum, OptomechanicalConfig};
use membrane_sandwich::coupling::shift_gradient;
use membrane_sandwich::scatter::{cavity_reflection, cavity_transmission, CavityGeometry, Membrane, ScatteringElement};
use membrane_sandwich::spectrum::{shift_function, solve_mode, Parity, ShiftFunctionParams};
use membrane_sandwich::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    NoConvergence = 4,
    Domain = 5,
    Unstable = 6,
    FitFailed = 7,
    BranchEdge = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsParity {
    Even = 0,
    Odd = 1,
}

impl From<MsParity> for Parity {
    fn from(p: MsParity) -> Self {
        match p {
            MsParity::Even => Parity::Even,
            MsParity::Odd => Parity::Odd,
        }
    }
}

/// Cavity geometry: mirror reflectivity, length and two membrane positions.
pub struct MsCavity(CavityGeometry);

/// Membrane data for the explicit shift function.
pub struct MsShiftParams(ShiftFunctionParams);

/// Linearized optomechanical system.
pub struct MsCooling(OptomechanicalConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MsStatus {
    match err {
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::Config { .. } | Error::Resolution(_) => {
            MsStatus::InvalidArgument
        }
        Error::Degenerate(_) => MsStatus::Degenerate,
        Error::NoConvergence { .. } | Error::Bracket { .. } => MsStatus::NoConvergence,
        Error::Domain(_) => MsStatus::Domain,
        Error::Unstable { .. } => MsStatus::Unstable,
        Error::Fit(_) | Error::Underdetermined(_) | Error::Ambiguity { .. } => MsStatus::FitFailed,
        Error::Io(_) => MsStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F>(f: F) -> MsStatus
where
    F: FnOnce() -> Result<(), (MsStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MsStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MsStatus::Panic
        }
    }
}

fn lift<T>(r: membrane_sandwich::Result<T>) -> Result<T, (MsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (MsStatus, String) {
    (MsStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (MsStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, name: &str, value: T) -> Result<(), (MsStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Intensity reflectivity and transmission phase `arg t` of a dielectric slab.
///
/// # Safety
/// Out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_slab(
    wavelength: f64,
    thickness: f64,
    index_re: f64,
    index_im: f64,
    out_reflectivity: *mut f64,
    out_phase: *mut f64,
) -> MsStatus {
    guard(|| {
        let s = lift(ScatteringElement::slab(wavelength, thickness, Complex64::new(index_re, index_im)))?;
        write(out_reflectivity, "out_reflectivity", s.reflectivity())?;
        write(out_phase, "out_phase", s.phase())
    })
}

/// Finesse of two identical membranes of reflectivity `rm`. `out_clamped` is
/// set to 1 when the value is the lower bound 1 rather than a finesse.
///
/// # Safety
/// Out pointers must be valid for writes; `out_clamped` may be null.
#[no_mangle]
pub unsafe extern "C" fn ms_finesse_from_reflectivity(rm: f64, out_finesse: *mut f64, out_clamped: *mut i32) -> MsStatus {
    guard(|| {
        let f = lift(finesse_from_reflectivity(rm))?;
        write(out_finesse, "out_finesse", f.finesse)?;
        if !out_clamped.is_null() {
            out_clamped.write(f.clamped as i32);
        }
        Ok(())
    })
}

/// Cavity with two identical membranes.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_cavity_new(
    length: f64,
    q1: f64,
    q2: f64,
    thickness: f64,
    index_re: f64,
    index_im: f64,
    mirror_reflectivity: f64,
    out: *mut *mut MsCavity,
) -> MsStatus {
    guard(|| {
        let m = Membrane { thickness, index: Complex64::new(index_re, index_im) };
        let geom = lift(CavityGeometry::new(length, q1, q2, [m, m], mirror_reflectivity))?;
        write(out, "out", Box::into_raw(Box::new(MsCavity(geom))))
    })
}

/// # Safety
/// `cavity` must come from [`ms_cavity_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_cavity_free(cavity: *mut MsCavity) {
    if !cavity.is_null() {
        drop(Box::from_raw(cavity));
    }
}

/// Amplitude transmission of the whole cavity.
///
/// # Safety
/// `cavity` must be a live handle; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_cavity_transmission(
    cavity: *const MsCavity,
    wavelength: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> MsStatus {
    guard(|| {
        let c = deref(cavity, "cavity")?;
        let t = lift(cavity_transmission(&c.0, wavelength))?;
        write(out_re, "out_re", t.re)?;
        write(out_im, "out_im", t.im)
    })
}

/// Amplitude reflection of the whole cavity.
///
/// # Safety
/// `cavity` must be a live handle; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_cavity_reflection(
    cavity: *const MsCavity,
    wavelength: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> MsStatus {
    guard(|| {
        let c = deref(cavity, "cavity")?;
        let r = lift(cavity_reflection(&c.0, wavelength))?;
        write(out_re, "out_re", r.re)?;
        write(out_im, "out_im", r.im)
    })
}

/// Shift-function parameters from the membranes of `cavity` at `wavelength`.
///
/// # Safety
/// `cavity` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_shift_params_from_cavity(
    cavity: *const MsCavity,
    wavelength: f64,
    out: *mut *mut MsShiftParams,
) -> MsStatus {
    guard(|| {
        let c = deref(cavity, "cavity")?;
        let p = lift(ShiftFunctionParams::from_geometry(&c.0, wavelength))?;
        write(out, "out", Box::into_raw(Box::new(MsShiftParams(p))))
    })
}

/// # Safety
/// `params` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_shift_params_free(params: *mut MsShiftParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Mode shift in units of the free spectral range.
///
/// # Safety
/// `params` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_shift_function(
    params: *const MsShiftParams,
    q1: f64,
    q2: f64,
    parity: MsParity,
    out: *mut f64,
) -> MsStatus {
    guard(|| {
        let p = deref(params, "params")?;
        write(out, "out", shift_function(&p.0, q1, q2, parity.into()))
    })
}

/// Couplings `(G1, G2)` in rad/s per metre. Returns `BranchEdge` where the
/// derivative is undefined.
///
/// # Safety
/// `params` must be a live handle; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_coupling_gradient(
    params: *const MsShiftParams,
    q1: f64,
    q2: f64,
    parity: MsParity,
    out_g1: *mut f64,
    out_g2: *mut f64,
) -> MsStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let [g1, g2] = shift_gradient(&p.0, q1, q2, parity.into())
            .ok_or_else(|| (MsStatus::BranchEdge, format!("no derivative at ({q1:e}, {q2:e})")))?;
        write(out_g1, "out_g1", g1)?;
        write(out_g2, "out_g2", g2)
    })
}

/// Solves the mode equation for mode `ell`: wavenumber (rad/m) and shift in
/// units of the free spectral range.
///
/// # Safety
/// `params` must be a live handle; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_solve_mode(
    params: *const MsShiftParams,
    q1: f64,
    q2: f64,
    ell: i64,
    out_k: *mut f64,
    out_shift_over_fsr: *mut f64,
) -> MsStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let mode = lift(solve_mode(&p.0, q1, q2, ell))?;
        write(out_k, "out_k", mode.k)?;
        write(out_shift_over_fsr, "out_shift_over_fsr", mode.shift_over_fsr(p.0.length))
    })
}

/// Built-in two-mode system: `"cooling-low"` or `"cooling-high"`.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ms_cooling_preset(name: *const c_char, out: *mut *mut MsCooling) -> MsStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let cfg = match CStr::from_ptr(name).to_str() {
            Ok("cooling-low") => OptomechanicalConfig::low_power_pair(),
            Ok("cooling-high") => OptomechanicalConfig::high_power_pair(),
            other => return Err((MsStatus::InvalidArgument, format!("unknown cooling preset {other:?}"))),
        };
        write(out, "out", Box::into_raw(Box::new(MsCooling(cfg))))
    })
}

/// # Safety
/// `cooling` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_cooling_free(cooling: *mut MsCooling) {
    if !cooling.is_null() {
        drop(Box::from_raw(cooling));
    }
}

/// Sets the input power (W) and detuning (rad/s, positive = red).
///
/// # Safety
/// `cooling` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_cooling_set_drive(cooling: *mut MsCooling, power: f64, detuning: f64) -> MsStatus {
    guard(|| {
        let c = cooling.as_mut().ok_or_else(|| null("cooling"))?;
        let next = c.0.with_power(power).with_detuning(detuning);
        lift(next.validate())?;
        c.0 = next;
        Ok(())
    })
}

/// Total one-sided displacement spectral density (m²/Hz) at `n` angular
/// frequencies. Fails with `Unstable` when the linearized system is unstable.
///
/// # Safety
/// `cooling` must be a live handle; `omega` must hold `n` values and
/// `out_total` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn ms_cooling_spectrum(
    cooling: *const MsCooling,
    omega: *const f64,
    n: usize,
    out_total: *mut f64,
) -> MsStatus {
    guard(|| {
        let c = deref(cooling, "cooling")?;
        if n == 0 {
            return Ok(());
        }
        if omega.is_null() {
            return Err(null("omega"));
        }
        if out_total.is_null() {
            return Err(null("out_total"));
        }
        let w = std::slice::from_raw_parts(omega, n);
        let s = lift(displacement_spectrum(&c.0, w))?;
        std::slice::from_raw_parts_mut(out_total, n).copy_from_slice(&s.total);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Domain("x".into())), MsStatus::Domain);
        assert_eq!(status_of(&Error::Unstable { eigenvalue: Complex64::new(1.0, 0.0) }), MsStatus::Unstable);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, MsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ms_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }
}
