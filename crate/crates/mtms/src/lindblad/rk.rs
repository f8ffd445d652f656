//! Dormand-Prince 5(4) adaptive integrator over complex matrices.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
// Difference between the 5th- and 4th-order weights, for the error
// estimate. The last stage is evaluated at the candidate solution, so an
// accepted step reuses it as next step's first stage.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates y' = f(x, y) from x0 to x1 with adaptive step control.
///
/// `monitor` is called with every accepted state (including the initial
/// one); the absolute tolerance is tied to `rtol` since density-matrix
/// entries are O(1). Returns the final state and the accepted step count.
pub(super) fn integrate<F, M>(
    mut f: F,
    y0: Array2<Complex64>,
    x0: f64,
    x1: f64,
    rtol: f64,
    h_max: f64,
    mut monitor: M,
) -> Result<(Array2<Complex64>, usize)>
where
    F: FnMut(f64, &Array2<Complex64>, &mut Array2<Complex64>),
    M: FnMut(f64, &Array2<Complex64>),
{
    let span = x1 - x0;
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::domain("integration span must be positive"));
    }
    let atol = 0.01 * rtol;
    let shape = y0.raw_dim();
    let mut k: Vec<Array2<Complex64>> = (0..7).map(|_| Array2::zeros(shape)).collect();
    let mut y = y0;
    let mut y_stage = Array2::<Complex64>::zeros(shape);

    let mut x = x0;
    let mut h = (span / 100.0).min(h_max);
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    monitor(x, &y);
    f(x, &y, &mut k[0]);

    while x < x1 - 1e-14 * span {
        h = h.min(h_max).min(x1 - x);
        if h < 1e-13 * span {
            return Err(Error::numeric(format!(
                "step size collapsed to {h:.3e} at x = {x:.6} \
                 (accepted {accepted}, rejected {rejected})"
            )));
        }

        for s in 1..7 {
            y_stage.assign(&y);
            for (j, &a) in A[s - 1].iter().enumerate().take(s) {
                if a != 0.0 {
                    y_stage.scaled_add(Complex64::new(h * a, 0.0), &k[j]);
                }
            }
            f(x + C[s - 1] * h, &y_stage, &mut k[s]);
        }
        // y_stage now holds the 5th-order candidate (the last stage row
        // equals the solution weights).

        let err = {
            let ys = y.as_slice().expect("contiguous");
            let yn = y_stage.as_slice().expect("contiguous");
            let ks: Vec<&[Complex64]> = k.iter().map(|a| a.as_slice().expect("contiguous")).collect();
            let mut acc = 0.0;
            for idx in 0..ys.len() {
                let mut e = Complex64::new(0.0, 0.0);
                for (j, ksl) in ks.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += E[j] * ksl[idx];
                    }
                }
                let sc = atol + rtol * ys[idx].norm().max(yn[idx].norm());
                let r = h * e.norm() / sc;
                acc += r * r;
            }
            (acc / ys.len() as f64).sqrt()
        };

        if err <= 1.0 {
            x += h;
            std::mem::swap(&mut y, &mut y_stage);
            k.swap(0, 6);
            accepted += 1;
            monitor(x, &y);
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            rejected += 1;
            if rejected > 100_000 {
                return Err(Error::numeric(format!(
                    "integrator rejected {rejected} steps; solution not resolvable at rtol {rtol:e}"
                )));
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }

    Ok((y, accepted))
}
