use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;

/// Brent's bracketing root finder.
///
/// Requires a sign change of `f` on `[lo, hi]`. Terminates when the bracket is
/// narrower than `tol` (absolute, plus a few ulps of the current estimate) or
/// `f` hits zero exactly.
pub fn find_root_bracketed<F>(mut f: F, interval: (f64, f64), tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = interval;
    if !(a.is_finite() && b.is_finite()) || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bad bracket [{a}, {b}] or tolerance {tol}"
        )));
    }
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITERATIONS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when only two points
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::InvalidArgument(format!("function not finite at {b}")));
        }
    }
    Err(Error::NoConvergence { iterations: MAX_ITERATIONS, residual: fb.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let root = find_root_bracketed(|x| x * x - 2.0, (1.0, 2.0), 1e-14).unwrap();
        assert!((root - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change_is_bracket_error() {
        let err = find_root_bracketed(|x| x * x + 1.0, (-1.0, 1.0), 1e-12).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn endpoint_root() {
        assert_eq!(find_root_bracketed(|x| x - 1.0, (1.0, 3.0), 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn transcendental() {
        let root = find_root_bracketed(|x: f64| x.cos() - x, (0.0, 1.0), 1e-15).unwrap();
        assert!((root.cos() - root).abs() < 1e-14);
    }
}
