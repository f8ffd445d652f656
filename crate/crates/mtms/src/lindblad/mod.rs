//! Open-system simulation of the gate on a truncated two-qubit ⊗ Fock
//! space: master equation with heating dissipators, integrated over one
//! gate period, reporting Bell-state fidelity and truncation diagnostics.

mod ops;
mod rk;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::dynamics::{bell_target, peak_displacement, GateScenario};
use crate::error::{Error, Result};

/// Which collective spin operator the drive couples to. Both choices
/// produce the same Bell state up to the phase conventions folded into
/// the ideal target, so reported fidelities agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinBasis {
    /// Ŝ_x = σ_x1 + σ_x2.
    SigmaXSum,
    /// Ŝ_y = σ_y1 − σ_y2.
    SigmaYDifference,
}

/// A full simulation request: scenario plus numerical knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSimConfig", into = "RawSimConfig")]
pub struct SimConfig {
    scenario: GateScenario,
    fock_truncation: usize,
    step_tolerance: f64,
    basis: SpinBasis,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimConfig {
    scenario: GateScenario,
    fock_truncation: usize,
    step_tolerance: f64,
    basis: SpinBasis,
}

impl TryFrom<RawSimConfig> for SimConfig {
    type Error = Error;

    fn try_from(raw: RawSimConfig) -> Result<Self> {
        SimConfig::new(
            raw.scenario,
            raw.fock_truncation,
            raw.step_tolerance,
            raw.basis,
        )
    }
}

impl From<SimConfig> for RawSimConfig {
    fn from(cfg: SimConfig) -> Self {
        RawSimConfig {
            scenario: cfg.scenario,
            fock_truncation: cfg.fock_truncation,
            step_tolerance: cfg.step_tolerance,
            basis: cfg.basis,
        }
    }
}

impl SimConfig {
    pub fn new(
        scenario: GateScenario,
        fock_truncation: usize,
        step_tolerance: f64,
        basis: SpinBasis,
    ) -> Result<Self> {
        if fock_truncation < 2 {
            return Err(Error::domain("fock_truncation must be at least 2"));
        }
        if !(step_tolerance > 0.0 && step_tolerance <= 1e-3) {
            return Err(Error::domain(format!(
                "step_tolerance must lie in (0, 1e-3], got {step_tolerance}"
            )));
        }
        Ok(SimConfig {
            scenario,
            fock_truncation,
            step_tolerance,
            basis,
        })
    }

    /// Sizes the Fock space automatically and uses the default tolerance.
    pub fn with_default_truncation(scenario: GateScenario, basis: SpinBasis) -> Result<Self> {
        let m = default_truncation(&scenario);
        SimConfig::new(scenario, m, DEFAULT_STEP_TOLERANCE, basis)
    }

    pub fn scenario(&self) -> &GateScenario {
        &self.scenario
    }

    pub fn fock_truncation(&self) -> usize {
        self.fock_truncation
    }

    pub fn step_tolerance(&self) -> f64 {
        self.step_tolerance
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }
}

pub const DEFAULT_STEP_TOLERANCE: f64 = 1e-8;

/// Thermal-tail plus displacement-excursion sizing rule:
/// M = ⌈n̄ + 10√(n̄+1) + 20 + 16·max_t|F(t)|²⌉.
pub fn default_truncation(sc: &GateScenario) -> usize {
    let peak = peak_displacement(sc.tones(), sc.detuning_error());
    let nbar = sc.nbar();
    (nbar + 10.0 * (nbar + 1.0).sqrt() + 20.0 + 16.0 * peak * peak).ceil() as usize
}

/// Joint density matrix with its truncation, indexed (s·M + n) with spin
/// s = 2q1 + q2 and Fock level n.
#[derive(Clone, Debug)]
pub struct JointState {
    rho: Array2<Complex64>,
    fock_truncation: usize,
}

impl JointState {
    pub fn rho(&self) -> &Array2<Complex64> {
        &self.rho
    }

    pub fn fock_truncation(&self) -> usize {
        self.fock_truncation
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.diag().sum()
    }

    /// Two-qubit density matrix with the motion traced out.
    pub fn internal_density(&self) -> Array2<Complex64> {
        let m = self.fock_truncation;
        let mut out = Array2::<Complex64>::zeros((4, 4));
        for st in 0..4 {
            for tt in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..m {
                    acc += self.rho[[st * m + n, tt * m + n]];
                }
                out[[st, tt]] = acc;
            }
        }
        out
    }

    /// Population in the top two Fock levels, summed over spin.
    pub fn top_level_population(&self) -> f64 {
        let m = self.fock_truncation;
        let mut acc = 0.0;
        for st in 0..4 {
            for n in [m - 2, m - 1] {
                acc += self.rho[[st * m + n, st * m + n]].re;
            }
        }
        acc
    }

    /// Checks Hermiticity (1e-12), unit trace (1e-10), and positivity via a
    /// shifted Cholesky factorization. The positivity margin of 1e-7 leaves
    /// room for integrator error at the default step tolerance while still
    /// catching structural mistakes, which show up orders of magnitude
    /// larger.
    pub fn validate(&self) -> Result<()> {
        let dim = self.rho.nrows();
        let mut herm = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                herm = herm.max((self.rho[[i, j]] - self.rho[[j, i]].conj()).norm());
            }
        }
        if herm > 1e-12 {
            return Err(Error::numeric(format!(
                "state is not Hermitian: max deviation {herm:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::numeric(format!("state trace is {tr}, want 1")));
        }
        if !is_psd_within(&self.rho, 1e-7) {
            return Err(Error::numeric(
                "state has an eigenvalue below -1e-7".to_string(),
            ));
        }
        Ok(())
    }
}

/// True when every eigenvalue of the Hermitian matrix is ≥ −eps, decided
/// by attempting a Cholesky factorization of m + eps·I.
fn is_psd_within(m: &Array2<Complex64>, eps: f64) -> bool {
    let n = m.nrows();
    let mut l = m.clone();
    for i in 0..n {
        l[[i, i]] += eps;
    }
    // In-place lower Cholesky; fails iff a pivot is non-positive.
    for j in 0..n {
        let mut d = l[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        l[[j, j]] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut v = l[[i, j]];
            for k in 0..j {
                let a = l[[i, k]];
                let b = l[[j, k]];
                v -= a * b.conj();
            }
            l[[i, j]] = v / d;
        }
    }
    true
}

/// Simulation outcome summary.
#[derive(Clone, Debug, Serialize)]
pub struct FidelityReport {
    /// Overlap of the traced-out two-qubit state with the ideal Bell state.
    pub fidelity: f64,
    /// False when the truncation leak exceeded 1e-6 at any accepted step.
    pub truncation_converged: bool,
    /// Largest top-two-Fock-level population seen during the run.
    pub leaked_population: f64,
    /// Largest |tr ρ − 1| seen during the run.
    pub max_trace_deviation: f64,
    /// Accepted integrator steps.
    pub steps: usize,
}

/// Thermal motional state with mean occupation n̄ on an M-level space.
///
/// Fails when the truncation would hold less than 99.9% of the
/// untruncated geometric distribution.
pub fn thermal_state(nbar: f64, m: usize) -> Result<Array2<Complex64>> {
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::domain(format!("nbar must be non-negative, got {nbar}")));
    }
    if m < 2 {
        return Err(Error::domain("truncation must be at least 2"));
    }
    let q = nbar / (nbar + 1.0);
    let coverage = 1.0 - q.powi(m as i32);
    if coverage < 0.999 {
        return Err(Error::truncation(format!(
            "thermal state with nbar = {nbar} keeps only {coverage:.6} of its \
             weight in {m} Fock levels; enlarge the truncation"
        )));
    }
    let mut weights: Vec<f64> = Vec::with_capacity(m);
    let mut w = 1.0;
    for _ in 0..m {
        weights.push(w);
        w *= q;
    }
    let norm: f64 = weights.iter().sum();
    let mut rho = Array2::<Complex64>::zeros((m, m));
    for (n, w) in weights.iter().enumerate() {
        rho[[n, n]] = Complex64::new(w / norm, 0.0);
    }
    Ok(rho)
}

/// The joint Hamiltonian H(t)/ħ in rad/s as a dense matrix, mostly for
/// inspection and cross-checks; the integrator uses the sparse form.
pub fn hamiltonian_at(cfg: &SimConfig, t: f64) -> Array2<Complex64> {
    let sc = cfg.scenario();
    let delta = sc.tones().delta();
    let d_err = sc.detuning_error();
    let rhs = ops::Rhs::new(sc, cfg.basis(), cfg.fock_truncation(), d_err, d_err);
    rhs.hamiltonian(delta * t).mapv(|v| delta * v)
}

/// Runs the master equation from |00⟩⟨00| ⊗ thermal(n̄) over one gate
/// period with the scenario's symmetric detuning error.
pub fn evolve(cfg: &SimConfig) -> Result<(JointState, FidelityReport)> {
    let d = cfg.scenario().detuning_error();
    evolve_with_sidebands(cfg, d, d)
}

/// Same as [`evolve`] but with independent red/blue sideband shifts, which
/// replace the scenario's symmetric detuning error.
pub fn asymmetric_detuning_evolve(
    cfg: &SimConfig,
    delta_r: f64,
    delta_b: f64,
) -> Result<(JointState, FidelityReport)> {
    if !delta_r.is_finite() || !delta_b.is_finite() {
        return Err(Error::domain("sideband shifts must be finite"));
    }
    evolve_with_sidebands(cfg, delta_r, delta_b)
}

fn evolve_with_sidebands(
    cfg: &SimConfig,
    delta_r: f64,
    delta_b: f64,
) -> Result<(JointState, FidelityReport)> {
    let sc = cfg.scenario();
    let m = cfg.fock_truncation();
    let dim = 4 * m;

    let thermal = thermal_state(sc.nbar(), m)?;
    let mut rho0 = Array2::<Complex64>::zeros((dim, dim));
    rho0.slice_mut(s![0..m, 0..m]).assign(&thermal);

    let rhs = ops::Rhs::new(sc, cfg.basis(), m, delta_r, delta_b);
    let h_max = TAU / (200.0 * sc.tones().n_tones() as f64);

    let mut max_trace_dev = 0.0f64;
    let mut max_leak = 0.0f64;
    let (rho, steps) = rk::integrate(
        |x, y, out| rhs.apply(x, y, out),
        rho0,
        0.0,
        TAU,
        cfg.step_tolerance(),
        h_max,
        |_, y| {
            let mut tr = 0.0;
            let mut leak = 0.0;
            for st in 0..4 {
                for n in 0..m {
                    let p = y[[st * m + n, st * m + n]].re;
                    tr += p;
                    if n >= m - 2 {
                        leak += p;
                    }
                }
            }
            max_trace_dev = max_trace_dev.max((tr - 1.0).abs());
            max_leak = max_leak.max(leak);
        },
    )?;

    let state = JointState {
        rho,
        fock_truncation: m,
    };
    let rho_int = state.internal_density();
    let psi = bell_target();
    let mut overlap = Complex64::new(0.0, 0.0);
    for k in 0..4 {
        for l in 0..4 {
            overlap += psi[k].conj() * rho_int[[k, l]] * psi[l];
        }
    }
    let report = FidelityReport {
        fidelity: overlap.re.clamp(0.0, 1.0),
        truncation_converged: max_leak <= 1e-6,
        leaked_population: max_leak,
        max_trace_deviation: max_trace_dev,
        steps,
    };
    Ok((state, report))
}

/// One sweep entry: the config it came from and either a report or the
/// error text for that point.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub index: usize,
    pub config: SimConfig,
    pub outcome: std::result::Result<FidelityReport, String>,
}

/// Evolves every config, in parallel, preserving input order. Per-point
/// failures land in the row instead of aborting the sweep.
pub fn sweep(grid: &[SimConfig]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::domain("sweep grid must not be empty"));
    }
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| SweepRow {
            index,
            config: cfg.clone(),
            outcome: evolve(cfg)
                .map(|(_, report)| report)
                .map_err(|e| e.to_string()),
        })
        .collect())
}
