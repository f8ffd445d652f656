//! Numerical toolkit for multi-tone Molmer-Sorensen (MTMS) entangling gates
//! on a pair of trapped ions: tone-coefficient design, phase-space
//! trajectories with closed-form error budgets, Lindblad master-equation
//! simulation under heating and detuning errors, and the synthetic
//! measurement chain (SPAM, maximum-likelihood populations, parity fits)
//! used to extract Bell-state fidelities.

mod error;
mod optim;
mod quad;

pub mod dynamics;
pub mod lindblad;
pub mod tomography;
pub mod tones;

pub use error::{Error, Result};
pub use num_complex::Complex64;
