//! Right-hand side of the master equation on the (two-qubit ⊗ Fock) space.
//!
//! The Hamiltonian splits into four sideband families, each a sparse spin
//! operator tensored with a truncated ladder operator. The commutator and
//! dissipator are applied through row/column updates instead of dense
//! matrix products, which keeps one evaluation at O(dim²).

use ndarray::Array2;
use num_complex::Complex64;

use super::SpinBasis;
use crate::dynamics::{drive_dimensionless, GateScenario};

/// Nonzero entries (row, col, value) of the collective raising part P of
/// the spin operator, with index s = 2·q1 + q2.
///
/// For Ŝ_x = σ_x1 + σ_x2, P = σ_+1 + σ_+2 and Ŝ_x = P + P†.
/// For Ŝ_y = σ_y1 − σ_y2, P = i(σ_+1 − σ_+2) and again Ŝ_y = P + P†.
fn raising_entries(basis: SpinBasis) -> [(usize, usize, Complex64); 4] {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    match basis {
        SpinBasis::SigmaXSum => [(2, 0, one), (3, 1, one), (1, 0, one), (3, 2, one)],
        SpinBasis::SigmaYDifference => [(2, 0, i), (3, 1, i), (1, 0, -i), (3, 2, -i)],
    }
}

pub(super) struct Rhs {
    coeffs: Vec<f64>,
    r_blue: f64,
    r_red: f64,
    /// Heating rate per unit of dimensionless time, ṅ/δ.
    kappa: f64,
    m: usize,
    entries: [(usize, usize, Complex64); 4],
    sqrt_n: Vec<f64>,
    /// Eigenvalues of the truncated ââ† (n+1, except 0 at the top level).
    aa_dag_diag: Vec<f64>,
}

impl Rhs {
    pub(super) fn new(
        sc: &GateScenario,
        basis: SpinBasis,
        m: usize,
        delta_r: f64,
        delta_b: f64,
    ) -> Rhs {
        let delta = sc.tones().delta();
        let sqrt_n: Vec<f64> = (0..=m).map(|n| (n as f64).sqrt()).collect();
        let aa_dag_diag: Vec<f64> = (0..m)
            .map(|n| if n + 1 < m { (n + 1) as f64 } else { 0.0 })
            .collect();
        Rhs {
            coeffs: sc.tones().coeffs().to_vec(),
            r_blue: delta_b / delta,
            r_red: delta_r / delta,
            kappa: sc.heating_rate() / delta,
            m,
            entries: raising_entries(basis),
            sqrt_n,
            aa_dag_diag,
        }
    }

    /// The four (coefficient, daggered-spin, raising-ladder) terms whose
    /// sum is the dimensionless Hamiltonian H/(ħδ).
    fn terms(&self, x: f64) -> [(Complex64, bool, bool); 4] {
        let g_b = drive_dimensionless(&self.coeffs, self.r_blue, x);
        let g_r = drive_dimensionless(&self.coeffs, self.r_red, x);
        [
            (g_b, false, true),         // g_b · P ⊗ â†
            (g_b.conj(), true, false),  // g_b* · P† ⊗ â
            (g_r.conj(), false, false), // g_r* · P ⊗ â
            (g_r, true, true),          // g_r · P† ⊗ â†
        ]
    }

    /// Dense H/(ħδ) at dimensionless time x; used for cross-checks and by
    /// the public Hamiltonian accessor.
    pub(super) fn hamiltonian(&self, x: f64) -> Array2<Complex64> {
        let m = self.m;
        let dim = 4 * m;
        let mut h = Array2::<Complex64>::zeros((dim, dim));
        for (z, dag, raise) in self.terms(x) {
            for &(a0, b0, v0) in &self.entries {
                let (a, b, v) = if dag { (b0, a0, v0.conj()) } else { (a0, b0, v0) };
                let zv = z * v;
                if raise {
                    for n in 1..m {
                        h[[a * m + n, b * m + n - 1]] += zv * self.sqrt_n[n];
                    }
                } else {
                    for n in 0..m - 1 {
                        h[[a * m + n, b * m + n + 1]] += zv * self.sqrt_n[n + 1];
                    }
                }
            }
        }
        h
    }

    /// out = −i[H(x), ρ] + (ṅ/δ)(D[â] + D[â†])ρ, all per unit x = δt.
    pub(super) fn apply(&self, x: f64, rho: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let m = self.m;
        out.fill(Complex64::new(0.0, 0.0));

        for (z, dag, raise) in self.terms(x) {
            for &(a0, b0, v0) in &self.entries {
                let (a, b, v) = if dag { (b0, a0, v0.conj()) } else { (a0, b0, v0) };
                let w_left = -Complex64::i() * z * v;
                let w_right = Complex64::i() * z * v;
                if raise {
                    // K = spin ⊗ â†. Left product K·ρ row by row, right
                    // product ρ·K column by column.
                    for n in 1..m {
                        let alpha = w_left * self.sqrt_n[n];
                        let src = rho.row(b * m + n - 1);
                        out.row_mut(a * m + n).scaled_add(alpha, &src);
                    }
                    for q in 0..m - 1 {
                        let alpha = w_right * self.sqrt_n[q + 1];
                        let src = rho.column(a * m + q + 1);
                        out.column_mut(b * m + q).scaled_add(alpha, &src);
                    }
                } else {
                    // K = spin ⊗ â.
                    for n in 0..m - 1 {
                        let alpha = w_left * self.sqrt_n[n + 1];
                        let src = rho.row(b * m + n + 1);
                        out.row_mut(a * m + n).scaled_add(alpha, &src);
                    }
                    for q in 1..m {
                        let alpha = w_right * self.sqrt_n[q];
                        let src = rho.column(a * m + q - 1);
                        out.column_mut(b * m + q).scaled_add(alpha, &src);
                    }
                }
            }
        }

        if self.kappa > 0.0 {
            self.add_dissipator(rho, out);
        }
    }

    /// Elementwise D[â] + D[â†] built from the truncated ladder matrices,
    /// so the generator stays exactly trace preserving on the finite space.
    fn add_dissipator(&self, rho: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let m = self.m;
        let dim = 4 * m;
        let k = self.kappa;
        let sq = &self.sqrt_n;
        let w = &self.aa_dag_diag;
        let rs = rho.as_slice().expect("density matrix is contiguous");
        let os = out.as_slice_mut().expect("derivative buffer is contiguous");
        for i in 0..dim {
            let n = i % m;
            let base = i * dim;
            let gain_up = n + 1 < m;
            let gain_dn = n >= 1;
            let drain_i = n as f64 + w[n];
            for j in 0..dim {
                let q = j % m;
                let mut acc = (-0.5 * k * (drain_i + q as f64 + w[q])) * rs[base + j];
                if gain_up && q + 1 < m {
                    acc += (k * sq[n + 1] * sq[q + 1]) * rs[base + dim + j + 1];
                }
                if gain_dn && q >= 1 {
                    acc += (k * sq[n] * sq[q]) * rs[base - dim + j - 1];
                }
                os[base + j] += acc;
            }
        }
    }
}
