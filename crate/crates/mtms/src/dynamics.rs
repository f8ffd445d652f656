//! Phase-space view of the gate: drive function, displacement F(t),
//! accumulated phase G(t), trajectories, and the closed-form fidelity and
//! error-budget expressions for heating and symmetric detuning error.
//!
//! Everything is dimensionless internally (x = δt, r = Δ/δ). F and G are
//! reported in these units; a closed loop means F(τ) = 0 and a maximally
//! entangling gate means G(τ) = π/8.

use ndarray::{array, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::quad;
use crate::tones::ToneSet;

const QUAD_TOL: f64 = 1e-12;

/// A gate run: tone set plus the error channels applied to it.
///
/// `detuning_error` is the symmetric shift Δ applied to every tone on both
/// sidebands; `heating_rate` is the motional heating rate ṅ in quanta/s;
/// `nbar` is the initial thermal occupation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGateScenario", into = "RawGateScenario")]
pub struct GateScenario {
    tones: ToneSet,
    detuning_error: f64,
    heating_rate: f64,
    nbar: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGateScenario {
    tones: ToneSet,
    detuning_error_rad_per_s: f64,
    heating_rate_quanta_per_s: f64,
    nbar: f64,
}

impl TryFrom<RawGateScenario> for GateScenario {
    type Error = Error;

    fn try_from(raw: RawGateScenario) -> Result<Self> {
        GateScenario::new(
            raw.tones,
            raw.detuning_error_rad_per_s,
            raw.heating_rate_quanta_per_s,
            raw.nbar,
        )
    }
}

impl From<GateScenario> for RawGateScenario {
    fn from(sc: GateScenario) -> Self {
        RawGateScenario {
            tones: sc.tones,
            detuning_error_rad_per_s: sc.detuning_error,
            heating_rate_quanta_per_s: sc.heating_rate,
            nbar: sc.nbar,
        }
    }
}

impl GateScenario {
    pub fn new(tones: ToneSet, detuning_error: f64, heating_rate: f64, nbar: f64) -> Result<Self> {
        if !detuning_error.is_finite() {
            return Err(Error::domain("detuning error must be finite"));
        }
        if !(heating_rate.is_finite() && heating_rate >= 0.0) {
            return Err(Error::domain(format!(
                "heating rate must be non-negative, got {heating_rate}"
            )));
        }
        if !(nbar.is_finite() && nbar >= 0.0) {
            return Err(Error::domain(format!(
                "nbar must be non-negative, got {nbar}"
            )));
        }
        Ok(GateScenario {
            tones,
            detuning_error,
            heating_rate,
            nbar,
        })
    }

    /// Error-free scenario for the given tones.
    pub fn ideal(tones: ToneSet) -> Self {
        GateScenario {
            tones,
            detuning_error: 0.0,
            heating_rate: 0.0,
            nbar: 0.0,
        }
    }

    pub fn tones(&self) -> &ToneSet {
        &self.tones
    }

    /// Symmetric detuning error Δ in rad/s.
    pub fn detuning_error(&self) -> f64 {
        self.detuning_error
    }

    /// Heating rate ṅ in quanta/s.
    pub fn heating_rate(&self) -> f64 {
        self.heating_rate
    }

    /// Initial thermal occupation n̄.
    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    /// Δ/δ, the fractional detuning error.
    pub fn fractional_error(&self) -> f64 {
        self.detuning_error / self.tones.delta()
    }
}

/// One point of a phase-space trajectory in dimensionless units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    /// Time in seconds.
    pub t: f64,
    /// Displacement F(t).
    pub f: Complex64,
    /// Accumulated phase G(t).
    pub g: f64,
}

/// Sampled (t, F, G) along a gate, first sample pinned at the origin.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub scenario: GateScenario,
}

/// Leading-order error estimates with a regime flag.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorBudget {
    /// First-order heating error πṅ_MT/δ.
    pub e_heating: f64,
    /// Second-order detuning error in (Δ/δ).
    pub e_detuning: f64,
    /// Order of the expansion each entry comes from.
    pub description: String,
    /// True when πṅ_MT/δ ≤ 0.1 and |Δ/δ| ≤ 0.05, where the expansions are
    /// trustworthy.
    pub in_regime: bool,
}

pub(crate) fn drive_dimensionless(coeffs: &[f64], r: f64, x: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, &c) in coeffs.iter().enumerate() {
        let freq = (k + 1) as f64 + r;
        sum += c * Complex64::from_polar(1.0, freq * x);
    }
    sum
}

pub(crate) fn displacement_dimensionless(coeffs: &[f64], r: f64, x: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, &c) in coeffs.iter().enumerate() {
        let freq = (k + 1) as f64 + r;
        if freq.abs() < 1e-12 {
            // Tone parked on resonance: the antiderivative degenerates to
            // a linear ramp.
            sum += Complex64::new(c * x, 0.0);
        } else {
            let phase = Complex64::from_polar(1.0, freq * x) - 1.0;
            sum += c / (Complex64::i() * freq) * phase;
        }
    }
    sum
}

pub(crate) fn phase_dimensionless(coeffs: &[f64], r: f64, x: f64) -> Result<f64> {
    let v = quad::integrate(
        |xp| {
            let f = drive_dimensionless(coeffs, r, xp);
            let big_f = displacement_dimensionless(coeffs, r, xp);
            Complex64::new((f * big_f.conj()).im, 0.0)
        },
        0.0,
        x,
        QUAD_TOL,
    )?;
    Ok(v.re)
}

/// The drive function f(t) = Σ_j c_j exp(i(jδ+Δ)t).
pub fn drive_f(ts: &ToneSet, delta_err: f64, t: f64) -> Complex64 {
    drive_dimensionless(ts.coeffs(), delta_err / ts.delta(), ts.delta() * t)
}

/// Dimensionless displacement F(t) = δ∫₀ᵗ f(t')dt' via the per-tone
/// antiderivative, with the on-resonance limit handled explicitly.
pub fn displacement_f_big(ts: &ToneSet, delta_err: f64, t: f64) -> Complex64 {
    displacement_dimensionless(ts.coeffs(), delta_err / ts.delta(), ts.delta() * t)
}

/// Same integral evaluated by adaptive quadrature of the drive. Slower;
/// kept as an independent cross-check of the antiderivative path.
pub fn displacement_by_quadrature(ts: &ToneSet, delta_err: f64, t: f64) -> Result<Complex64> {
    let r = delta_err / ts.delta();
    let coeffs = ts.coeffs();
    quad::integrate(
        |xp| drive_dimensionless(coeffs, r, xp),
        0.0,
        ts.delta() * t,
        QUAD_TOL,
    )
}

/// Accumulated geometric phase G(t), the area-like functional of the
/// trajectory, by adaptive quadrature. The sign convention makes
/// G(τ) = +π/8 for every entangling tone set at Δ = 0.
pub fn phase_g(ts: &ToneSet, delta_err: f64, t: f64) -> Result<f64> {
    phase_dimensionless(ts.coeffs(), delta_err / ts.delta(), ts.delta() * t)
}

/// Uniformly sampled trajectory over [0, τ]. G is accumulated segment by
/// segment so the cost stays linear in `n_samples`.
pub fn trajectory(sc: &GateScenario, n_samples: usize) -> Result<Trajectory> {
    if n_samples < 2 {
        return Err(Error::domain("a trajectory needs at least 2 samples"));
    }
    let ts = sc.tones();
    let coeffs = ts.coeffs();
    let r = sc.fractional_error();
    let tau = ts.gate_time();
    let steps = (n_samples - 1) as f64;

    let mut samples = Vec::with_capacity(n_samples);
    samples.push(TrajectorySample {
        t: 0.0,
        f: Complex64::new(0.0, 0.0),
        g: 0.0,
    });
    let mut g = 0.0;
    for k in 1..n_samples {
        let x_prev = TAU * (k - 1) as f64 / steps;
        let x = TAU * k as f64 / steps;
        g += quad::integrate(
            |xp| {
                let f = drive_dimensionless(coeffs, r, xp);
                let big_f = displacement_dimensionless(coeffs, r, xp);
                Complex64::new((f * big_f.conj()).im, 0.0)
            },
            x_prev,
            x,
            1e-13,
        )?
        .re;
        samples.push(TrajectorySample {
            t: tau * k as f64 / steps,
            f: displacement_dimensionless(coeffs, r, x),
            g,
        });
    }
    Ok(Trajectory {
        samples,
        scenario: sc.clone(),
    })
}

/// |F_a(τ)| / |F_b(τ)| at Δ = frac_err·δ, measuring how much closer set
/// `b` returns to the phase-space origin than set `a`.
pub fn loop_closure_ratio(ts_a: &ToneSet, ts_b: &ToneSet, frac_err: f64) -> Result<f64> {
    let (da, db) = (ts_a.delta(), ts_b.delta());
    if ((da - db) / da).abs() > 1e-9 {
        return Err(Error::domain(
            "loop-closure comparison requires both sets to share the base detuning",
        ));
    }
    if !frac_err.is_finite() {
        return Err(Error::domain("fractional error must be finite"));
    }
    let fa = displacement_dimensionless(ts_a.coeffs(), frac_err, TAU).norm();
    let fb = displacement_dimensionless(ts_b.coeffs(), frac_err, TAU).norm();
    if fb < 1e-300 {
        return Err(Error::ClosedToMachinePrecision);
    }
    Ok(fa / fb)
}

/// ṅ_MT/ṅ = 8(Σ c_k²/k² + (Σ c_k/k)²): how strongly the tone set couples
/// to motional heating relative to the bare rate.
pub fn effective_heating_factor(ts: &ToneSet) -> f64 {
    let (_, closure) = ts.constraint_residuals();
    8.0 * (ts.heating_objective() + closure * closure)
}

/// Gate fidelity under pure heating at rate ṅ, from the closed form
/// (3 + 4e^{−ṅ_MT τ/2} + e^{−2ṅ_MT τ})/8.
pub fn fidelity_heating(ts: &ToneSet, heating_rate: f64) -> Result<f64> {
    if !(heating_rate.is_finite() && heating_rate >= 0.0) {
        return Err(Error::domain(format!(
            "heating rate must be non-negative, got {heating_rate}"
        )));
    }
    let nmt_tau = effective_heating_factor(ts) * heating_rate * ts.gate_time();
    Ok((3.0 + 4.0 * (-0.5 * nmt_tau).exp() + (-2.0 * nmt_tau).exp()) / 8.0)
}

/// Gate fidelity under a symmetric detuning error, exact for unitary
/// evolution from a thermal motional state:
/// F = 3/8 + (1/2)cos(4G_Δ)e^{−4(n̄+1/2)|F(τ)|²} + (1/8)e^{−16(n̄+1/2)|F(τ)|²}
/// with G_Δ = G(τ) − π/8. The scenario's heating rate is ignored here.
pub fn fidelity_detuning(sc: &GateScenario) -> Result<f64> {
    let coeffs = sc.tones().coeffs();
    let r = sc.fractional_error();
    let f_tau2 = displacement_dimensionless(coeffs, r, TAU).norm_sqr();
    let g_delta = phase_dimensionless(coeffs, r, TAU)? - PI / 8.0;
    let x = (-4.0 * (sc.nbar() + 0.5) * f_tau2).exp();
    Ok(0.375 + 0.5 * (4.0 * g_delta).cos() * x + 0.125 * x.powi(4))
}

/// Leading-order error budget: e_heating = πṅ_MT/δ and
/// e_detuning = (3/4+n̄)π²(Δ/δ)² for one tone or 16π²(Δ/δ)²(Σc_j²/j²)² for
/// loop-closing multi-tone sets.
pub fn leading_order_budget(sc: &GateScenario) -> ErrorBudget {
    let ts = sc.tones();
    let r = sc.fractional_error();
    let e_heating = PI * effective_heating_factor(ts) * sc.heating_rate() / ts.delta();
    let e_detuning = if ts.n_tones() == 1 {
        (0.75 + sc.nbar()) * PI * PI * r * r
    } else {
        let s = ts.heating_objective();
        16.0 * PI * PI * r * r * s * s
    };
    ErrorBudget {
        e_heating,
        e_detuning,
        description: String::from(
            "heating to first order in n_dot*tau; detuning to second order in Delta/delta",
        ),
        in_regime: e_heating <= 0.1 && r.abs() <= 0.05,
    }
}

/// The ideal gate output U|00⟩ = (|00⟩ + i|11⟩)/√2 in the computational
/// basis, shared by the simulator and the tomography pipeline.
pub fn bell_target() -> Array1<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    array![
        Complex64::new(s, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, s),
    ]
}

/// Internal (two-qubit) density matrix after a detuned but otherwise
/// unitary gate on |00⟩ with a thermal motional state, motion traced out.
///
/// In the collective-spin eigenbasis the evolution factorizes into
/// spin-dependent displacements, so the matrix elements reduce to
/// ρ[k,l] = (1/4)·e^{i(m_k²−m_l²)G}·e^{−(m_k−m_l)²(n̄+1/2)|F(τ)|²} with
/// m = (2, 0, 0, −2); this is transformed back to the computational basis.
pub fn detuned_state(sc: &GateScenario) -> Result<Array2<Complex64>> {
    let coeffs = sc.tones().coeffs();
    let r = sc.fractional_error();
    let f_tau2 = displacement_dimensionless(coeffs, r, TAU).norm_sqr();
    let g = phase_dimensionless(coeffs, r, TAU)?;
    let damp = -(sc.nbar() + 0.5) * f_tau2;
    let m = [2.0, 0.0, 0.0, -2.0f64];

    let mut rho_x = Array2::<Complex64>::zeros((4, 4));
    for k in 0..4 {
        for l in 0..4 {
            let dm = m[k] - m[l];
            let phase = g * (m[k] * m[k] - m[l] * m[l]);
            rho_x[[k, l]] = 0.25 * Complex64::from_polar((damp * dm * dm).exp(), phase);
        }
    }

    // Hadamard-pair change of basis; symmetric and self-inverse.
    let h = 0.5;
    let t_mat = array![
        [h, h, h, h],
        [h, -h, h, -h],
        [h, h, -h, -h],
        [h, -h, -h, h]
    ]
    .mapv(|v: f64| Complex64::new(v, 0.0));
    Ok(t_mat.dot(&rho_x).dot(&t_mat))
}

/// max_t |F(t)| over the gate window, by dense sampling; used to size
/// Fock-space truncations.
pub fn peak_displacement(ts: &ToneSet, delta_err: f64) -> f64 {
    let coeffs = ts.coeffs();
    let r = delta_err / ts.delta();
    let n_grid = 256 * ts.n_tones().max(1);
    (0..=n_grid)
        .map(|k| displacement_dimensionless(coeffs, r, TAU * k as f64 / n_grid as f64).norm())
        .fold(0.0, f64::max)
}
