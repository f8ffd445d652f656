//! Fourier coefficients defining single- and multi-tone MS drives.
//!
//! A gate drive is a sum of N tones at detunings jδ with real amplitudes
//! c_j. Two constraints pin the physics: Σ c_j²/j = 1/16 sets the
//! entangling phase, and Σ c_j/j = 0 (for N ≥ 2) closes the phase-space
//! loop against a symmetric detuning error. The optimized sets additionally
//! minimize Σ c_k²/k², which controls sensitivity to motional heating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Required value of Σ c_j²/j for a maximally entangling gate.
pub const ENTANGLING_TARGET: f64 = 1.0 / 16.0;

/// A validated set of drive coefficients with its base detuning.
///
/// Constructed sets from [`single_tone`](ToneSet::single_tone) and
/// [`optimized`](ToneSet::optimized) satisfy the gate constraints to
/// 1e-12; [`new`](ToneSet::new) accepts arbitrary finite coefficients so
/// off-surface sets can be examined with
/// [`constraint_residuals`](ToneSet::constraint_residuals).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawToneSet", into = "RawToneSet")]
pub struct ToneSet {
    n_tones: usize,
    coeffs: Vec<f64>,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawToneSet {
    n_tones: usize,
    coeffs: Vec<f64>,
    delta_rad_per_s: f64,
}

impl TryFrom<RawToneSet> for ToneSet {
    type Error = Error;

    fn try_from(raw: RawToneSet) -> Result<Self> {
        if raw.coeffs.len() != raw.n_tones {
            return Err(Error::domain(format!(
                "n_tones is {} but {} coefficients were given",
                raw.n_tones,
                raw.coeffs.len()
            )));
        }
        ToneSet::new(raw.delta_rad_per_s, raw.coeffs)
    }
}

impl From<ToneSet> for RawToneSet {
    fn from(ts: ToneSet) -> Self {
        RawToneSet {
            n_tones: ts.n_tones,
            coeffs: ts.coeffs,
            delta_rad_per_s: ts.delta,
        }
    }
}

impl ToneSet {
    /// Wraps explicit coefficients without imposing the gate constraints.
    pub fn new(delta: f64, coeffs: Vec<f64>) -> Result<Self> {
        check_delta(delta)?;
        if coeffs.is_empty() {
            return Err(Error::domain("at least one tone coefficient is required"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("tone coefficients must be finite"));
        }
        Ok(ToneSet {
            n_tones: coeffs.len(),
            coeffs,
            delta,
        })
    }

    /// The plain MS gate: one tone with c_1 = 1/4.
    pub fn single_tone(delta: f64) -> Result<Self> {
        ToneSet::new(delta, vec![0.25])
    }

    /// Heating-optimal N-tone set.
    ///
    /// For N ≥ 2 the minimizer of Σ c_k²/k² under both constraints has the
    /// closed form c_j = j·b/(1−jλ), where λ is the smallest real root of
    /// Σ_j (1−jλ)⁻¹ = 0 and b normalizes the entangling sum. The root is
    /// bracketed between adjacent poles of the sum and bisected; the sign
    /// of b is chosen so that c_1 < 0, matching the usual convention for
    /// the two-tone set (c_1 ≈ −0.144, c_2 ≈ 0.289).
    pub fn optimized(n_tones: usize, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if n_tones == 0 {
            return Err(Error::domain("n_tones must be at least 1"));
        }
        if n_tones == 1 {
            return ToneSet::single_tone(delta);
        }
        let lambda = smallest_root(n_tones)?;
        let norm: f64 = (1..=n_tones)
            .map(|j| {
                let d = 1.0 - j as f64 * lambda;
                j as f64 / (d * d)
            })
            .sum();
        let b = -0.25 / norm.sqrt();
        let coeffs: Vec<f64> = (1..=n_tones)
            .map(|j| j as f64 * b / (1.0 - j as f64 * lambda))
            .collect();
        ToneSet::new(delta, coeffs)
    }

    pub fn n_tones(&self) -> usize {
        self.n_tones
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Base detuning δ in rad/s.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Gate duration τ = 2π/δ in seconds.
    pub fn gate_time(&self) -> f64 {
        std::f64::consts::TAU / self.delta
    }

    /// Deviation from the two gate constraints:
    /// (Σ c_j²/j − 1/16, Σ c_j/j).
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let mut entangling = 0.0;
        let mut closure = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let j = (k + 1) as f64;
            entangling += c * c / j;
            closure += c / j;
        }
        (entangling - ENTANGLING_TARGET, closure)
    }

    /// The heating-sensitivity objective Σ c_k²/k².
    pub fn heating_objective(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let j = (k + 1) as f64;
                c * c / (j * j)
            })
            .sum()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be a positive finite angular frequency, got {delta}"
        )));
    }
    Ok(())
}

/// Σ_j 1/(1−jλ); strictly increasing between its poles at λ = 1/j.
fn pole_sum(n: usize, lambda: f64) -> f64 {
    (1..=n).map(|j| 1.0 / (1.0 - j as f64 * lambda)).sum()
}

/// Smallest real root of Σ_{j=1..n} (1−jλ)⁻¹ = 0 for n ≥ 2.
///
/// The sum runs from −∞ to +∞ on each interval (1/(j+1), 1/j) and its
/// derivative Σ j/(1−jλ)² is positive, so every inter-pole interval holds
/// exactly one root; the smallest lives in (1/n, 1/(n−1)).
fn smallest_root(n: usize) -> Result<f64> {
    let mut smallest = f64::INFINITY;
    for j in 1..n {
        let lo = 1.0 / (j + 1) as f64;
        let hi = 1.0 / j as f64;
        let inset = 1e-9 * (hi - lo);
        let root = bisect(|x| pole_sum(n, x), lo + inset, hi - inset)?;
        if root < smallest {
            smallest = root;
        }
    }
    Ok(smallest)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> Result<f64> {
    let (fa, fb) = (f(a), f(b));
    if !(fa < 0.0 && fb > 0.0) {
        return Err(Error::numeric(format!(
            "bisection bracket [{a:.16e}, {b:.16e}] does not straddle a root \
             (f(a)={fa:.3e}, f(b)={fb:.3e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a) <= 1e-14 * b.abs().max(a.abs()) {
            return Ok(mid);
        }
        if f(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Err(Error::numeric(format!(
        "bisection stalled on [{a:.16e}, {b:.16e}]"
    )))
}
