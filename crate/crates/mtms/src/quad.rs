//! Adaptive Simpson quadrature for smooth complex-valued integrands.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` with adaptive
/// interval splitting and Richardson extrapolation of the Simpson rule.
pub(crate) fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("quadrature endpoints must be finite"));
    }
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 0)
}

fn simpson(a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64) -> Complex64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let refined = left + right;
    let err = refined - whole;
    if err.norm() <= 15.0 * tol {
        // Richardson correction: the two-panel rule is fifth-order accurate
        // once the leading error term is subtracted.
        return Ok(refined + err / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::numeric(format!(
            "adaptive quadrature failed to converge on [{a:.6e}, {b:.6e}] \
             (residual {:.3e} at depth {depth})",
            err.norm()
        )));
    }
    let half_tol = 0.5 * tol;
    let l = recurse(f, a, m, fa, flm, fm, left, half_tol, depth + 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, half_tol, depth + 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn integrates_oscillatory_exponential() {
        // int_0^2pi exp(3 i x) dx = 0
        let v = integrate(|x| Complex64::new(0.0, 3.0 * x).exp(), 0.0, 2.0 * PI, 1e-13).unwrap();
        assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn integrates_polynomial_exactly() {
        let v = integrate(|x| Complex64::new(x * x, -x), 0.0, 3.0, 1e-13).unwrap();
        assert_abs_diff_eq!(v.re, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.im, -4.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_width_interval() {
        let v = integrate(|x| Complex64::new(x, 0.0), 1.0, 1.0, 1e-13).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rejects_non_finite_endpoint() {
        assert!(integrate(|_| Complex64::new(1.0, 0.0), 0.0, f64::INFINITY, 1e-12).is_err());
    }
}
