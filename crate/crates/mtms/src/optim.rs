//! Small derivative-free optimization helpers used by the tomography fits.

use crate::error::{Error, Result};

/// Maximizes `f` over two parameters with Nelder-Mead followed by a few
/// finite-difference Newton steps to tighten the stationary point.
pub(crate) fn maximize_2d<F>(f: &F, start: [f64; 2], scale: [f64; 2]) -> Result<[f64; 2]>
where
    F: Fn(f64, f64) -> f64,
{
    let mut best = nelder_mead(f, start, scale)?;
    for _ in 0..12 {
        let Some(step) = newton_step(f, best) else {
            break;
        };
        let cand = [best[0] + step[0], best[1] + step[1]];
        if !cand[0].is_finite() || !cand[1].is_finite() {
            break;
        }
        if f(cand[0], cand[1]) >= f(best[0], best[1]) {
            let moved = step[0].abs() + step[1].abs();
            best = cand;
            if moved < 1e-12 {
                break;
            }
        } else {
            break;
        }
    }
    Ok(best)
}

fn nelder_mead<F>(f: &F, start: [f64; 2], scale: [f64; 2]) -> Result<[f64; 2]>
where
    F: Fn(f64, f64) -> f64,
{
    // Standard reflect/expand/contract/shrink coefficients.
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut pts = [
        start,
        [start[0] + scale[0], start[1]],
        [start[0], start[1] + scale[1]],
    ];
    let eval = |p: [f64; 2]| -> f64 { f(p[0], p[1]) };
    let mut vals = pts.map(eval);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("objective not finite at simplex start"));
    }

    for _ in 0..400 {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
        pts = [pts[order[0]], pts[order[1]], pts[order[2]]];
        vals = [vals[order[0]], vals[order[1]], vals[order[2]]];

        let spread = (vals[0] - vals[2]).abs();
        let size = (pts[0][0] - pts[2][0]).abs()
            + (pts[0][1] - pts[2][1]).abs()
            + (pts[1][0] - pts[2][0]).abs()
            + (pts[1][1] - pts[2][1]).abs();
        if spread < 1e-13 && size < 1e-10 {
            break;
        }

        let centroid = [
            0.5 * (pts[0][0] + pts[1][0]),
            0.5 * (pts[0][1] + pts[1][1]),
        ];
        let reflect = [
            centroid[0] + alpha * (centroid[0] - pts[2][0]),
            centroid[1] + alpha * (centroid[1] - pts[2][1]),
        ];
        let fr = eval(reflect);

        if fr > vals[0] {
            let expand = [
                centroid[0] + gamma * (reflect[0] - centroid[0]),
                centroid[1] + gamma * (reflect[1] - centroid[1]),
            ];
            let fe = eval(expand);
            if fe > fr {
                pts[2] = expand;
                vals[2] = fe;
            } else {
                pts[2] = reflect;
                vals[2] = fr;
            }
        } else if fr > vals[1] {
            pts[2] = reflect;
            vals[2] = fr;
        } else {
            let contract = [
                centroid[0] + rho * (pts[2][0] - centroid[0]),
                centroid[1] + rho * (pts[2][1] - centroid[1]),
            ];
            let fc = eval(contract);
            if fc > vals[2] {
                pts[2] = contract;
                vals[2] = fc;
            } else {
                for k in 1..3 {
                    pts[k] = [
                        pts[0][0] + sigma * (pts[k][0] - pts[0][0]),
                        pts[0][1] + sigma * (pts[k][1] - pts[0][1]),
                    ];
                    vals[k] = eval(pts[k]);
                }
            }
        }
    }

    let mut best = 0;
    for k in 1..3 {
        if vals[k] > vals[best] {
            best = k;
        }
    }
    Ok(pts[best])
}

/// One damped Newton step toward a stationary point, or `None` when the
/// finite-difference Hessian is too ill-conditioned to trust.
fn newton_step<F>(f: &F, p: [f64; 2]) -> Option<[f64; 2]>
where
    F: Fn(f64, f64) -> f64,
{
    let g = gradient(f, p);
    let h = hessian(f, p);
    let det = h[0] * h[3] - h[1] * h[2];
    if det.abs() < 1e-14 || !det.is_finite() {
        return None;
    }
    // Solve H s = -g for the 2x2 system.
    let s = [
        (-g[0] * h[3] + g[1] * h[1]) / det,
        (g[0] * h[2] - g[1] * h[0]) / det,
    ];
    if !s[0].is_finite() || !s[1].is_finite() {
        return None;
    }
    Some(s)
}

pub(crate) fn gradient<F>(f: &F, p: [f64; 2]) -> [f64; 2]
where
    F: Fn(f64, f64) -> f64,
{
    let h0 = step_size(p[0]);
    let h1 = step_size(p[1]);
    [
        (f(p[0] + h0, p[1]) - f(p[0] - h0, p[1])) / (2.0 * h0),
        (f(p[0], p[1] + h1) - f(p[0], p[1] - h1)) / (2.0 * h1),
    ]
}

/// Central-difference Hessian, returned row-major as `[h00, h01, h10, h11]`.
pub(crate) fn hessian<F>(f: &F, p: [f64; 2]) -> [f64; 4]
where
    F: Fn(f64, f64) -> f64,
{
    let h0 = step_size(p[0]).sqrt() * 1e-2;
    let h1 = step_size(p[1]).sqrt() * 1e-2;
    let f00 = f(p[0], p[1]);
    let hxx = (f(p[0] + h0, p[1]) - 2.0 * f00 + f(p[0] - h0, p[1])) / (h0 * h0);
    let hyy = (f(p[0], p[1] + h1) - 2.0 * f00 + f(p[0], p[1] - h1)) / (h1 * h1);
    let hxy = (f(p[0] + h0, p[1] + h1) - f(p[0] + h0, p[1] - h1) - f(p[0] - h0, p[1] + h1)
        + f(p[0] - h0, p[1] - h1))
        / (4.0 * h0 * h1);
    [hxx, hxy, hxy, hyy]
}

fn step_size(x: f64) -> f64 {
    (1.0 + x.abs()) * 1e-6
}
