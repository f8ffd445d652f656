//! JSON config schemas. Every file carries a versioned `schema` field so a
//! config can never silently run under the wrong interpretation, and unknown
//! keys are rejected by name.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use mtms::dynamics::{bell_target, detuned_state, GateScenario};
use mtms::lindblad::{default_truncation, SimConfig, SpinBasis, DEFAULT_STEP_TOLERANCE};
use mtms::tomography::SpamMap;
use mtms::tones::ToneSet;
use mtms::Complex64;

use crate::CliError;

pub const SIMULATE_SCHEMA: &str = "mtms-simulate/1";
pub const SWEEP_SCHEMA: &str = "mtms-sweep/1";
pub const TOMO_GENERATE_SCHEMA: &str = "mtms-tomo-generate/1";
pub const TOMO_FIT_SCHEMA: &str = "mtms-tomo-fit/1";

/// Reads and checks a config file: JSON syntax, then the `schema` tag, then
/// the field-level shape (unknown or missing keys are named in the error).
pub fn load<T: DeserializeOwned>(path: &Path, expected_schema: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{} is not valid JSON: {e}", path.display())))?;
    let schema = value
        .get("schema")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            CliError::config(format!(
                "{} has no string `schema` field; expected \"{expected_schema}\"",
                path.display()
            ))
        })?;
    if schema != expected_schema {
        return Err(CliError::config(format!(
            "{}: schema \"{schema}\" is not supported here; expected \"{expected_schema}\"",
            path.display()
        )));
    }
    value
        .as_object_mut()
        .expect("schema lookup succeeded, so this is an object")
        .remove("schema");
    serde_json::from_value(value)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Physical scenario shared by simulate and sweep configs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub n_tones: usize,
    /// Tone spacing delta/2pi in Hz; defaults to 1 Hz (gate time 1 s).
    #[serde(default)]
    pub delta_hz: Option<f64>,
    #[serde(default)]
    pub detuning_error_frac: f64,
    #[serde(default)]
    pub heating_rate_quanta_per_s: f64,
    #[serde(default)]
    pub nbar: f64,
    /// Fock levels kept in the solver; sized automatically when omitted.
    #[serde(default)]
    pub fock_truncation: Option<usize>,
    #[serde(default)]
    pub step_tolerance: Option<f64>,
    #[serde(default)]
    pub basis: Option<BasisName>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisName {
    SigmaXSum,
    SigmaYDifference,
}

impl ScenarioBlock {
    pub fn delta(&self) -> f64 {
        TAU * self.delta_hz.unwrap_or(1.0)
    }

    pub fn scenario(&self) -> Result<GateScenario, CliError> {
        let delta = self.delta();
        let ts = ToneSet::optimized(self.n_tones, delta)?;
        Ok(GateScenario::new(
            ts,
            self.detuning_error_frac * delta,
            self.heating_rate_quanta_per_s,
            self.nbar,
        )?)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let sc = self.scenario()?;
        let m = self.fock_truncation.unwrap_or_else(|| default_truncation(&sc));
        let tol = self.step_tolerance.unwrap_or(DEFAULT_STEP_TOLERANCE);
        let basis = match self.basis {
            None | Some(BasisName::SigmaXSum) => SpinBasis::SigmaXSum,
            Some(BasisName::SigmaYDifference) => SpinBasis::SigmaYDifference,
        };
        Ok(SimConfig::new(sc, m, tol, basis)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: ScenarioBlock,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DetuningErrorFrac,
    HeatingRateQuantaPerS,
    Nbar,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ScenarioBlock,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<SimConfig>, CliError> {
        if self.values.is_empty() {
            return Err(CliError::config("sweep `values` must not be empty"));
        }
        self.values
            .iter()
            .map(|&v| {
                let mut block = self.base.clone();
                match self.parameter {
                    SweepParameter::DetuningErrorFrac => block.detuning_error_frac = v,
                    SweepParameter::HeatingRateQuantaPerS => {
                        block.heating_rate_quanta_per_s = v
                    }
                    SweepParameter::Nbar => block.nbar = v,
                }
                block.sim_config()
            })
            .collect()
    }

    pub fn parameter_name(&self) -> &'static str {
        match self.parameter {
            SweepParameter::DetuningErrorFrac => "detuning_error_frac",
            SweepParameter::HeatingRateQuantaPerS => "heating_rate_quanta_per_s",
            SweepParameter::Nbar => "nbar",
        }
    }
}

/// Target state for synthetic tomography: either the ideal Bell output or
/// the closed-form state reached under a detuning error.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub kind: String,
    #[serde(default)]
    pub n_tones: Option<usize>,
    #[serde(default)]
    pub delta_hz: Option<f64>,
    #[serde(default)]
    pub detuning_error_frac: Option<f64>,
    #[serde(default)]
    pub nbar: Option<f64>,
}

impl StateSpec {
    pub fn build(&self) -> Result<Array2<Complex64>, CliError> {
        match self.kind.as_str() {
            "ideal_bell" => {
                if self.n_tones.is_some()
                    || self.delta_hz.is_some()
                    || self.detuning_error_frac.is_some()
                    || self.nbar.is_some()
                {
                    return Err(CliError::config(
                        "state kind \"ideal_bell\" takes no further fields",
                    ));
                }
                let psi = bell_target();
                let mut rho = Array2::zeros((4, 4));
                for a in 0..4 {
                    for b in 0..4 {
                        rho[[a, b]] = psi[a] * psi[b].conj();
                    }
                }
                Ok(rho)
            }
            "detuned" => {
                let n = self.n_tones.ok_or_else(|| {
                    CliError::config("state kind \"detuned\" requires `n_tones`")
                })?;
                let frac = self.detuning_error_frac.ok_or_else(|| {
                    CliError::config("state kind \"detuned\" requires `detuning_error_frac`")
                })?;
                let nbar = self
                    .nbar
                    .ok_or_else(|| CliError::config("state kind \"detuned\" requires `nbar`"))?;
                let delta = TAU * self.delta_hz.unwrap_or(1.0);
                let ts = ToneSet::optimized(n, delta)?;
                let sc = GateScenario::new(ts, frac * delta, 0.0, nbar)?;
                Ok(detuned_state(&sc)?)
            }
            other => Err(CliError::config(format!(
                "unknown state kind \"{other}\"; expected \"ideal_bell\" or \"detuned\""
            ))),
        }
    }
}

/// Readout model: perfect, symmetric per-ion misidentification, or an
/// explicit 3x3 matrix (rows = observed outcome, columns = true outcome).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamSpec {
    pub kind: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub p_obs_given_true: Option<[[f64; 3]; 3]>,
}

impl SpamSpec {
    pub fn build(&self) -> Result<SpamMap, CliError> {
        match self.kind.as_str() {
            "identity" => {
                if self.epsilon.is_some() || self.p_obs_given_true.is_some() {
                    return Err(CliError::config(
                        "spam kind \"identity\" takes no further fields",
                    ));
                }
                Ok(SpamMap::identity())
            }
            "symmetric" => {
                if self.p_obs_given_true.is_some() {
                    return Err(CliError::config(
                        "spam kind \"symmetric\" takes only `epsilon`",
                    ));
                }
                let eps = self.epsilon.ok_or_else(|| {
                    CliError::config("spam kind \"symmetric\" requires `epsilon`")
                })?;
                Ok(SpamMap::symmetric(eps)?)
            }
            "matrix" => {
                if self.epsilon.is_some() {
                    return Err(CliError::config(
                        "spam kind \"matrix\" takes only `p_obs_given_true`",
                    ));
                }
                let m = self.p_obs_given_true.ok_or_else(|| {
                    CliError::config("spam kind \"matrix\" requires `p_obs_given_true`")
                })?;
                Ok(SpamMap::from_matrix(m)?)
            }
            other => Err(CliError::config(format!(
                "unknown spam kind \"{other}\"; expected \"identity\", \"symmetric\", or \"matrix\""
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoGenerateConfig {
    pub state: StateSpec,
    pub spam: SpamSpec,
    /// Analysis phases in radians; a 12-point scan over [0, pi] by default.
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    pub shots_per_point: u64,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoFitConfig {
    /// Parity dataset CSV with columns phi_rad, x0, x1, x2.
    pub dataset_csv: String,
    pub spam: SpamSpec,
    /// Bell phase the amplitude is projected onto for the fidelity estimate.
    #[serde(default)]
    pub expected_phase_rad: Option<f64>,
    /// Bare population counts [x0, x1, x2]; enables the fidelity estimate.
    #[serde(default)]
    pub population_counts: Option<[u64; 3]>,
}
