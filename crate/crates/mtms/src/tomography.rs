//! Synthetic two-ion readout and the estimation chain used on it: SPAM
//! corruption, multinomial count sampling, maximum-likelihood population
//! estimates, parity-oscillation fitting, and the Bell-fidelity formula.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use crate::error::{Error, Result};
use crate::optim;

/// Per-ion misidentification rate whose two-ion map has a combined
/// state-preparation-and-detection fidelity of about 87%.
pub const DEFAULT_READOUT_ERROR: f64 = 0.067;

/// Linear map from true outcome probabilities to observed ones for a two-ion
/// fluorescence measurement. Entry `[i][j]` is P(observe i bright ions | j
/// bright ions prepared), so rows index observed outcomes and columns index
/// true ones; every column sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpamMap", into = "RawSpamMap")]
pub struct SpamMap {
    p_obs_given_true: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpamMap {
    p_obs_given_true: [[f64; 3]; 3],
}

impl TryFrom<RawSpamMap> for SpamMap {
    type Error = Error;

    fn try_from(raw: RawSpamMap) -> Result<Self> {
        SpamMap::from_matrix(raw.p_obs_given_true)
    }
}

impl From<SpamMap> for RawSpamMap {
    fn from(map: SpamMap) -> Self {
        RawSpamMap {
            p_obs_given_true: map.p_obs_given_true,
        }
    }
}

impl SpamMap {
    pub fn from_matrix(p_obs_given_true: [[f64; 3]; 3]) -> Result<Self> {
        for (i, row) in p_obs_given_true.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::domain(format!(
                        "SPAM entry P({i}|{j}) = {v} is outside [0, 1]"
                    )));
                }
            }
        }
        for j in 0..3 {
            let sum: f64 = (0..3).map(|i| p_obs_given_true[i][j]).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!(
                    "SPAM column {j} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(SpamMap { p_obs_given_true })
    }

    pub fn identity() -> Self {
        SpamMap {
            p_obs_given_true: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Map built from independent per-ion misidentification with probability
    /// `epsilon` in both directions (dark read as bright and vice versa).
    pub fn symmetric(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::domain(format!(
                "misidentification rate {epsilon} is outside [0, 1]"
            )));
        }
        let (e, k) = (epsilon, 1.0 - epsilon);
        SpamMap::from_matrix([
            [k * k, e * k, e * e],
            [2.0 * e * k, k * k + e * e, 2.0 * e * k],
            [e * e, e * k, k * k],
        ])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.p_obs_given_true
    }

    /// Collapse to observed/true even-odd outcomes, with the true even mass
    /// split equally between zero and two bright ions. The equal split is
    /// exact for parity scans of Bell-like states, where the two even
    /// populations coincide at every analysis phase. Rows index observed
    /// (even, odd), columns true (even, odd).
    pub fn reduced_even_odd(&self) -> [[f64; 2]; 2] {
        let m = &self.p_obs_given_true;
        let odd_given_even = 0.5 * (m[1][0] + m[1][2]);
        let odd_given_odd = m[1][1];
        [
            [1.0 - odd_given_even, 1.0 - odd_given_odd],
            [odd_given_even, odd_given_odd],
        ]
    }
}

/// Applies the readout map: `p'_i = sum_j P(i|j) p_j`.
pub fn apply_spam(p_true: [f64; 3], spam: &SpamMap) -> Result<[f64; 3]> {
    let p = checked_triple(p_true, "p_true")?;
    let m = &spam.p_obs_given_true;
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2];
    }
    Ok(out)
}

/// Shot counts from thresholded fluorescence: how often zero, one, or two
/// ions were seen bright.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCounts", into = "RawCounts")]
pub struct CountsRecord {
    x0: u64,
    x1: u64,
    x2: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCounts {
    x0: u64,
    x1: u64,
    x2: u64,
}

impl TryFrom<RawCounts> for CountsRecord {
    type Error = Error;

    fn try_from(raw: RawCounts) -> Result<Self> {
        CountsRecord::new(raw.x0, raw.x1, raw.x2)
    }
}

impl From<CountsRecord> for RawCounts {
    fn from(c: CountsRecord) -> Self {
        RawCounts {
            x0: c.x0,
            x1: c.x1,
            x2: c.x2,
        }
    }
}

impl CountsRecord {
    pub fn new(x0: u64, x1: u64, x2: u64) -> Result<Self> {
        let n = x0
            .checked_add(x1)
            .and_then(|s| s.checked_add(x2))
            .ok_or_else(|| Error::domain("total shot count overflows u64"))?;
        if n == 0 {
            return Err(Error::domain("counts record needs at least one shot"));
        }
        Ok(CountsRecord { x0, x1, x2 })
    }

    pub fn x0(&self) -> u64 {
        self.x0
    }

    pub fn x1(&self) -> u64 {
        self.x1
    }

    pub fn x2(&self) -> u64 {
        self.x2
    }

    pub fn n(&self) -> u64 {
        self.x0 + self.x1 + self.x2
    }
}

/// Draws one multinomial counts record, deterministically in `seed`.
pub fn sample_counts(p_obs: [f64; 3], n_shots: u64, seed: u64) -> Result<CountsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_counts_with(p_obs, n_shots, &mut rng)
}

fn sample_counts_with<R: Rng>(p_obs: [f64; 3], n_shots: u64, rng: &mut R) -> Result<CountsRecord> {
    let p = checked_triple(p_obs, "p_obs")?;
    if n_shots == 0 {
        return Err(Error::domain("n_shots must be at least 1"));
    }
    // Multinomial draw as a chain of binomials over the remaining mass.
    let x0 = binomial_draw(n_shots, p[0], rng)?;
    let rem = n_shots - x0;
    let tail = p[1] + p[2];
    let x1 = if rem == 0 || tail <= 0.0 {
        0
    } else {
        binomial_draw(rem, (p[1] / tail).clamp(0.0, 1.0), rng)?
    };
    CountsRecord::new(x0, x1, rem - x1)
}

fn binomial_draw<R: Rng>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    let dist = Binomial::new(n, p.clamp(0.0, 1.0))
        .map_err(|e| Error::numeric(format!("binomial({n}, {p}) setup failed: {e}")))?;
    Ok(dist.sample(rng))
}

/// Maximum-likelihood populations with the implied `p0 = 1 - p1 - p2`.
/// Standard errors come from the observed-information curvature and are
/// absent when the estimate sits on the simplex boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationEstimate {
    pub p1: f64,
    pub p2: f64,
    pub log_likelihood: f64,
    pub se_p1: Option<f64>,
    pub se_p2: Option<f64>,
}

impl PopulationEstimate {
    /// Population in the even-parity outcomes, `p0 + p2 = 1 - p1`.
    pub fn even_population(&self) -> f64 {
        1.0 - self.p1
    }
}

/// Maximizes the multinomial likelihood of the observed counts over true
/// populations mapped through `spam`. The ascent uses the monotone
/// expectation-maximization update for mixtures, which stays on the
/// probability simplex, reaches corners exactly, and converges to the global
/// optimum because the log-likelihood is concave in the populations.
pub fn mle_populations(counts: &CountsRecord, spam: &SpamMap) -> Result<PopulationEstimate> {
    let x = [counts.x0 as f64, counts.x1 as f64, counts.x2 as f64];
    let n = counts.n() as f64;
    let empirical = {
        let mut p = [
            (x[0] / n).max(1e-9),
            (x[1] / n).max(1e-9),
            (x[2] / n).max(1e-9),
        ];
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    };

    let mut best: Option<([f64; 3], f64)> = None;
    let mut last_err = None;
    for start in [empirical, [1.0 / 3.0; 3]] {
        match em_ascent(&x, n, spam, start) {
            Ok(p) => {
                let ll = population_log_likelihood(counts, spam, p[1], p[2]);
                if best.map_or(true, |(_, b)| ll > b) {
                    best = Some((p, ll));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((p, log_likelihood)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::numeric("population fit failed")));
    };

    let (se_p1, se_p2) = population_standard_errors(&x, spam, p);
    Ok(PopulationEstimate {
        p1: p[1],
        p2: p[2],
        log_likelihood,
        se_p1,
        se_p2,
    })
}

fn em_ascent(x: &[f64; 3], n: f64, spam: &SpamMap, start: [f64; 3]) -> Result<[f64; 3]> {
    let m = &spam.p_obs_given_true;
    let mut p = start;
    let mut prev = p;
    for _ in 0..200_000 {
        let mut obs = [0.0; 3];
        for i in 0..3 {
            obs[i] = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2];
            if x[i] > 0.0 && obs[i] < 1e-300 {
                return Err(Error::numeric(format!(
                    "observed outcome {i} has zero modeled probability at p = {p:?}"
                )));
            }
        }
        let mut next = [0.0; 3];
        for j in 0..3 {
            let mut factor = 0.0;
            for i in 0..3 {
                if x[i] > 0.0 {
                    factor += x[i] / n * m[i][j] / obs[i];
                }
            }
            next[j] = p[j] * factor;
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);

        let delta = (0..3).fold(0.0f64, |d, j| d.max((next[j] - p[j]).abs()));
        prev = p;
        p = next;
        if delta < 1e-14 {
            return Ok(p);
        }
    }
    Err(Error::numeric(format!(
        "population ascent did not converge; last iterates {prev:?} -> {p:?}"
    )))
}

fn population_standard_errors(
    x: &[f64; 3],
    spam: &SpamMap,
    p: [f64; 3],
) -> (Option<f64>, Option<f64>) {
    if p.iter().any(|&v| v < 1e-9) {
        return (None, None);
    }
    let m = &spam.p_obs_given_true;
    let (mut j11, mut j12, mut j22) = (0.0, 0.0, 0.0);
    for i in 0..3 {
        let obs = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2];
        if obs < 1e-300 {
            return (None, None);
        }
        // Derivatives of the observed probabilities with p0 eliminated.
        let b = m[i][1] - m[i][0];
        let c = m[i][2] - m[i][0];
        let w = x[i] / (obs * obs);
        j11 += w * b * b;
        j12 += w * b * c;
        j22 += w * c * c;
    }
    let det = j11 * j22 - j12 * j12;
    if det <= 0.0 || !det.is_finite() {
        return (None, None);
    }
    (Some((j22 / det).sqrt()), Some((j11 / det).sqrt()))
}

/// Log-likelihood of a counts record at given populations, on the same scale
/// as the value reported by [`mle_populations`].
pub fn population_log_likelihood(
    counts: &CountsRecord,
    spam: &SpamMap,
    p1: f64,
    p2: f64,
) -> f64 {
    let p0 = 1.0 - p1 - p2;
    if p1 < -1e-12 || p2 < -1e-12 || p0 < -1e-12 {
        return -1e300;
    }
    let p = [p0.max(0.0), p1.max(0.0), p2.max(0.0)];
    let m = &spam.p_obs_given_true;
    let x = [counts.x0, counts.x1, counts.x2];
    let n = counts.n();
    // Normalized likelihood: the (n+1)(n+2) and factorial factors are
    // constant in the populations but keep reported values comparable
    // across datasets.
    let mut ll = ((n + 1) as f64).ln() + ((n + 2) as f64).ln() + ln_factorial(n);
    for i in 0..3 {
        ll -= ln_factorial(x[i]);
        if x[i] > 0 {
            let obs = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2];
            if obs <= 0.0 {
                return -1e300;
            }
            ll += x[i] as f64 * obs.ln();
        }
    }
    ll
}

/// Parity-scan data: counts at each analysis-pulse phase plus the readout
/// map they were recorded through.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityDataset {
    phases: Vec<f64>,
    counts: Vec<CountsRecord>,
    spam: SpamMap,
}

impl ParityDataset {
    /// Requires at least four distinct phases spanning at least pi, so the
    /// two fit parameters and the oscillation period are all identifiable.
    pub fn new(points: Vec<(f64, CountsRecord)>, spam: SpamMap) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::domain(format!(
                "parity scan needs at least 4 points, got {}",
                points.len()
            )));
        }
        for &(phi, _) in &points {
            if !phi.is_finite() {
                return Err(Error::domain("analysis phase must be finite"));
            }
        }
        let mut sorted: Vec<f64> = points.iter().map(|&(phi, _)| phi).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let distinct = 1 + sorted.windows(2).filter(|w| w[1] - w[0] > 1e-12).count();
        if distinct < 4 {
            return Err(Error::domain(format!(
                "parity scan needs 4 distinct phases, got {distinct}"
            )));
        }
        let span = sorted.last().unwrap() - sorted.first().unwrap();
        if span < PI - 1e-9 {
            return Err(Error::domain(format!(
                "parity scan phases span {span:.6} rad, need at least pi"
            )));
        }
        let (phases, counts) = points.into_iter().unzip();
        Ok(ParityDataset {
            phases,
            counts,
            spam,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn counts(&self) -> &[CountsRecord] {
        &self.counts
    }

    pub fn spam(&self) -> &SpamMap {
        &self.spam
    }
}

/// Evenly spread default analysis phases `k pi / 11` for `k = 0..=11`.
pub fn default_phases() -> Vec<f64> {
    (0..12).map(|k| k as f64 * PI / 11.0).collect()
}

/// Fitted parity oscillation `Pi = A cos(2 phi + phi0)`, canonicalized to
/// `A >= 0` and `phi0` in `(-pi, pi]`. Standard errors are absent when the
/// amplitude lands on the `|A| = 1` boundary or the curvature is singular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParityFit {
    pub amplitude: f64,
    pub phase: f64,
    pub log_likelihood: f64,
    pub se_amplitude: Option<f64>,
    pub se_phase: Option<f64>,
}

/// Fits the parity oscillation by maximum likelihood. Each point contributes
/// a binomial term in the odd-outcome count; the model parity is mapped
/// through the dataset's readout map reduced to even/odd outcomes, and the
/// amplitude is constrained to `[-1, 1]`.
pub fn mle_parity_fit(ds: &ParityDataset) -> Result<ParityFit> {
    let reduced = ds.spam.reduced_even_odd();
    let (odd_given_even, odd_given_odd) = (reduced[1][0], reduced[1][1]);
    let objective =
        |a: f64, phi: f64| parity_objective(ds, odd_given_even, odd_given_odd, a, phi);

    let mut starts = vec![fourier_start(ds, odd_given_even, odd_given_odd)];
    let mut grid: Vec<([f64; 2], f64)> = Vec::new();
    for &a in &[0.3, 0.7, 0.95] {
        for k in 0..8 {
            let phi = -PI + TAU * k as f64 / 8.0;
            grid.push(([a, phi], objective(a, phi)));
        }
    }
    grid.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
    starts.extend(grid.iter().take(2).map(|&(s, _)| s));

    let mut best: Option<([f64; 2], f64)> = None;
    for start in starts {
        let Ok(point) = optim::maximize_2d(&objective, start, [0.15, 0.3]) else {
            continue;
        };
        let value = objective(point[0], point[1]);
        if value.is_finite() && best.map_or(true, |(_, b)| value > b) {
            best = Some((point, value));
        }
    }
    let Some((point, _)) = best else {
        return Err(Error::numeric("parity fit failed from every start"));
    };

    let mut amplitude = point[0].clamp(-1.0, 1.0);
    let mut phase = point[1];
    if amplitude < 0.0 {
        amplitude = -amplitude;
        phase += PI;
    }
    phase = wrap_angle(phase);
    let log_likelihood = objective(amplitude, phase);

    // Curvature-based errors are meaningless against the amplitude clamp.
    let (se_amplitude, se_phase) = if amplitude < 1.0 - 1e-4 {
        let h = optim::hessian(&objective, [amplitude, phase]);
        let det = h[0] * h[3] - h[1] * h[2];
        if det > 0.0 && h[0] < 0.0 && h[3] < 0.0 {
            (Some((-h[3] / det).sqrt()), Some((-h[0] / det).sqrt()))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };

    Ok(ParityFit {
        amplitude,
        phase,
        log_likelihood,
        se_amplitude,
        se_phase,
    })
}

fn parity_objective(
    ds: &ParityDataset,
    odd_given_even: f64,
    odd_given_odd: f64,
    a: f64,
    phi0: f64,
) -> f64 {
    if !a.is_finite() || !phi0.is_finite() {
        return -1e300;
    }
    let a = a.clamp(-1.0, 1.0);
    let mut ll = 0.0;
    for (&phi, c) in ds.phases.iter().zip(&ds.counts) {
        let n = c.n();
        let odd = c.x1;
        let p_odd = 0.5 * (1.0 - a * (2.0 * phi + phi0).cos());
        let p_obs = odd_given_even + (odd_given_odd - odd_given_even) * p_odd;
        ll += ((n + 1) as f64).ln() + ln_factorial(n)
            - ln_factorial(odd)
            - ln_factorial(n - odd);
        if odd > 0 {
            if p_obs <= 0.0 {
                return -1e300;
            }
            ll += odd as f64 * p_obs.ln();
        }
        if n - odd > 0 {
            let p_even = 1.0 - p_obs;
            if p_even <= 0.0 {
                return -1e300;
            }
            ll += (n - odd) as f64 * p_even.ln();
        }
    }
    ll
}

/// Log-likelihood of the dataset under `Pi = A cos(2 phi + phi0)` at given
/// parameters, on the same scale as the value reported by [`mle_parity_fit`].
pub fn parity_log_likelihood(ds: &ParityDataset, amplitude: f64, phase: f64) -> f64 {
    let reduced = ds.spam.reduced_even_odd();
    parity_objective(ds, reduced[1][0], reduced[1][1], amplitude, phase)
}

/// First-harmonic projection of the readout-corrected parity signal, used to
/// seed the likelihood maximization.
fn fourier_start(ds: &ParityDataset, odd_given_even: f64, odd_given_odd: f64) -> [f64; 2] {
    let slope = odd_given_odd - odd_given_even;
    let mut z = Complex64::new(0.0, 0.0);
    for (&phi, c) in ds.phases.iter().zip(&ds.counts) {
        let f_odd = c.x1 as f64 / c.n() as f64;
        let p_odd = if slope.abs() > 1e-6 {
            (f_odd - odd_given_even) / slope
        } else {
            f_odd
        };
        let parity = 1.0 - 2.0 * p_odd;
        z += parity * Complex64::new(0.0, -2.0 * phi).exp();
    }
    let amplitude = (2.0 * z.norm() / ds.len() as f64).clamp(0.05, 0.98);
    [amplitude, z.arg()]
}

fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Bell fidelity from measured pieces: half the even-parity population plus
/// half the parity amplitude projected onto the expected Bell phase,
/// `F = pop_even/2 + |A cos(delta_phi)|/2`.
pub fn bell_fidelity_estimate(
    pop_even: f64,
    parity_amplitude: f64,
    delta_phi: f64,
) -> Result<f64> {
    if !pop_even.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&pop_even) {
        return Err(Error::domain(format!(
            "even-parity population {pop_even} is outside [0, 1]"
        )));
    }
    if !parity_amplitude.is_finite() || parity_amplitude.abs() > 1.0 + 1e-9 {
        return Err(Error::domain(format!(
            "parity amplitude {parity_amplitude} is outside [-1, 1]"
        )));
    }
    if !delta_phi.is_finite() {
        return Err(Error::domain("delta_phi must be finite"));
    }
    let pop = pop_even.clamp(0.0, 1.0);
    let amp = parity_amplitude.clamp(-1.0, 1.0);
    Ok(0.5 * pop + 0.5 * (amp * delta_phi.cos()).abs())
}

/// Outcome probabilities of a bare fluorescence measurement on a two-qubit
/// state in the computational basis (index `2 q1 + q2`, bright = 1).
pub fn population_probabilities(rho: &Array2<Complex64>) -> Result<[f64; 3]> {
    validate_two_qubit_state(rho)?;
    state_triple([
        rho[[0, 0]].re,
        rho[[1, 1]].re + rho[[2, 2]].re,
        rho[[3, 3]].re,
    ])
}

/// Outcome probabilities after the parity analysis pulse, a pi/2 rotation of
/// each ion about the equatorial axis at angle `phi`.
pub fn parity_scan_probabilities(rho: &Array2<Complex64>, phi: f64) -> Result<[f64; 3]> {
    validate_two_qubit_state(rho)?;
    if !phi.is_finite() {
        return Err(Error::domain("analysis phase must be finite"));
    }
    // Single-ion pulse (1 - i (cos phi sx + sin phi sy)) / sqrt(2).
    let d = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let o = Complex64::new(0.0, -FRAC_1_SQRT_2);
    let r = [
        [d, o * Complex64::new(0.0, -phi).exp()],
        [o * Complex64::new(0.0, phi).exp(), d],
    ];
    let mut u = Array2::zeros((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for e in 0..2 {
                    u[[2 * a + c, 2 * b + e]] = r[a][b] * r[c][e];
                }
            }
        }
    }
    let u_dag = u.t().mapv(|v: Complex64| v.conj());
    let rotated = u.dot(rho).dot(&u_dag);
    state_triple([
        rotated[[0, 0]].re,
        rotated[[1, 1]].re + rotated[[2, 2]].re,
        rotated[[3, 3]].re,
    ])
}

/// Full synthetic parity scan of a two-qubit state: exact probabilities at
/// each phase, corrupted by `spam`, then sampled with `shots_per_point`
/// multinomial shots. Deterministic in `seed`.
pub fn synthesize_parity_dataset(
    rho: &Array2<Complex64>,
    spam: &SpamMap,
    phases: &[f64],
    shots_per_point: u64,
    seed: u64,
) -> Result<ParityDataset> {
    if shots_per_point == 0 {
        return Err(Error::domain("shots_per_point must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(phases.len());
    for &phi in phases {
        let p_true = parity_scan_probabilities(rho, phi)?;
        let p_obs = apply_spam(p_true, spam)?;
        points.push((phi, sample_counts_with(p_obs, shots_per_point, &mut rng)?));
    }
    ParityDataset::new(points, spam.clone())
}

fn validate_two_qubit_state(rho: &Array2<Complex64>) -> Result<()> {
    if rho.dim() != (4, 4) {
        return Err(Error::domain(format!(
            "expected a 4x4 density matrix, got {:?}",
            rho.dim()
        )));
    }
    for i in 0..4 {
        for j in 0..4 {
            let v = rho[[i, j]];
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::domain("density matrix has non-finite entries"));
            }
            if (v - rho[[j, i]].conj()).norm() > 1e-8 {
                return Err(Error::domain("density matrix is not Hermitian"));
            }
        }
    }
    Ok(())
}

fn state_triple(raw: [f64; 3]) -> Result<[f64; 3]> {
    let mut p = [0.0; 3];
    for (k, &v) in raw.iter().enumerate() {
        if v < -1e-7 {
            return Err(Error::domain(format!(
                "outcome probability {k} is negative ({v:.3e})"
            )));
        }
        p[k] = v.max(0.0);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "outcome probabilities sum to {sum}, expected 1"
        )));
    }
    p.iter_mut().for_each(|v| *v /= sum);
    Ok(p)
}

fn checked_triple(p: [f64; 3], what: &str) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    let mut sum = 0.0;
    for (k, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < -1e-9 {
            return Err(Error::domain(format!(
                "{what}[{k}] = {v} is not a probability"
            )));
        }
        out[k] = v.max(0.0);
        sum += out[k];
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!("{what} sums to {sum}, expected 1")));
    }
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::bell_target;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bell_rho() -> Array2<Complex64> {
        let psi = bell_target();
        Array2::from_shape_fn((4, 4), |(i, j)| psi[i] * psi[j].conj())
    }

    fn expected_counts(p_odd: f64, n: u64) -> CountsRecord {
        let x1 = (p_odd * n as f64).round() as u64;
        let even = n - x1;
        CountsRecord::new(even / 2, x1, even - even / 2).unwrap()
    }

    #[test]
    fn identity_map_is_transparent() {
        let p = apply_spam([0.2, 0.5, 0.3], &SpamMap::identity()).unwrap();
        assert_eq!(p, [0.2, 0.5, 0.3]);
    }

    #[test]
    fn spam_acts_as_matrix_on_basis_vector() {
        let spam = SpamMap::symmetric(0.1).unwrap();
        let p = apply_spam([1.0, 0.0, 0.0], &spam).unwrap();
        assert_abs_diff_eq!(p[0], 0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.18, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn doubly_stochastic_map_fixes_uniform() {
        let spam = SpamMap::from_matrix([
            [0.8, 0.1, 0.1],
            [0.1, 0.8, 0.1],
            [0.1, 0.1, 0.8],
        ])
        .unwrap();
        let third = 1.0 / 3.0;
        let p = apply_spam([third, third, third], &spam).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, third, epsilon = 1e-15);
        }
    }

    #[test]
    fn symmetric_map_structure() {
        let m = *SpamMap::symmetric(0.1).unwrap().matrix();
        let expect = [
            [0.81, 0.09, 0.01],
            [0.18, 0.82, 0.18],
            [0.01, 0.09, 0.81],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(m[i][j], expect[i][j], epsilon = 1e-15);
            }
        }
        assert!((0.933f64.powi(2) - 0.87).abs() < 0.001); // default rate hits 87%
    }

    #[test]
    fn reduced_map_merges_even_outcomes() {
        let r = SpamMap::symmetric(0.1).unwrap().reduced_even_odd();
        assert_abs_diff_eq!(r[1][0], 0.18, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1][1], 0.82, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0][0] + r[1][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0][1] + r[1][1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spam_validation_rejects_bad_matrices() {
        let mut bad = [[1.0, 0.0, 0.0], [0.0, 0.9, 0.0], [0.0, 0.0, 1.0]];
        assert!(SpamMap::from_matrix(bad).is_err()); // column sum 0.9
        bad[1][1] = 1.1;
        assert!(SpamMap::from_matrix(bad).is_err()); // entry out of range
        assert!(SpamMap::symmetric(-0.1).is_err());
        assert!(apply_spam([0.5, 0.6, 0.3], &SpamMap::identity()).is_err());
        assert!(apply_spam([-0.2, 0.6, 0.6], &SpamMap::identity()).is_err());
    }

    #[test]
    fn spam_serde_roundtrip_and_validation() {
        let spam = SpamMap::symmetric(DEFAULT_READOUT_ERROR).unwrap();
        let json = serde_json::to_string(&spam).unwrap();
        let back: SpamMap = serde_json::from_str(&json).unwrap();
        assert_eq!(spam, back);

        let bad = r#"{"p_obs_given_true": [[1,0,0],[0,0.5,0],[0,0,1]]}"#;
        assert!(serde_json::from_str::<SpamMap>(bad).is_err());
        let unknown = r#"{"p_obs_given_true": [[1,0,0],[0,1,0],[0,0,1]], "extra": 1}"#;
        assert!(serde_json::from_str::<SpamMap>(unknown).is_err());
    }

    proptest! {
        #[test]
        fn spam_preserves_simplex(
            w in prop::array::uniform3(1e-3f64..1.0),
            cols in prop::array::uniform3(prop::array::uniform3(1e-3f64..1.0)),
        ) {
            let total: f64 = w.iter().sum();
            let p = [w[0] / total, w[1] / total, w[2] / total];
            let mut m = [[0.0; 3]; 3];
            for j in 0..3 {
                let s: f64 = cols[j].iter().sum();
                for i in 0..3 {
                    m[i][j] = cols[j][i] / s;
                }
            }
            // Columns renormalized above can miss 1 by an ulp; rebuild exactly.
            for j in 0..3 {
                m[2][j] = 1.0 - m[0][j] - m[1][j];
            }
            let spam = SpamMap::from_matrix(m).unwrap();
            let out = apply_spam(p, &spam).unwrap();
            let sum: f64 = out.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn empirical_frequencies_maximize_identity_likelihood(
            x0 in 0u64..400,
            x1 in 0u64..400,
            x2 in 0u64..400,
        ) {
            prop_assume!(x0 + x1 + x2 >= 1);
            let counts = CountsRecord::new(x0, x1, x2).unwrap();
            let n = counts.n() as f64;
            let est = mle_populations(&counts, &SpamMap::identity()).unwrap();
            prop_assert!((est.p1 - x1 as f64 / n).abs() < 1e-9);
            prop_assert!((est.p2 - x2 as f64 / n).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = [0.5, 0.3, 0.2];
        let a = sample_counts(p, 500, 9).unwrap();
        let b = sample_counts(p, 500, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_counts(p, 500, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_distribution_sampling() {
        let c = sample_counts([1.0, 0.0, 0.0], 100, 3).unwrap();
        assert_eq!((c.x0(), c.x1(), c.x2()), (100, 0, 0));
        let c = sample_counts([0.0, 0.0, 1.0], 64, 3).unwrap();
        assert_eq!((c.x0(), c.x1(), c.x2()), (0, 0, 64));
    }

    #[test]
    fn large_sample_matches_frequencies() {
        let p = [0.5, 0.3, 0.2];
        let n = 1_000_000u64;
        let c = sample_counts(p, n, 42).unwrap();
        assert_eq!(c.n(), n);
        let xs = [c.x0(), c.x1(), c.x2()];
        for (x, pi) in xs.iter().zip(p) {
            let sigma = (pi * (1.0 - pi) / n as f64).sqrt();
            assert!((*x as f64 / n as f64 - pi).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn identity_spam_mle_is_empirical() {
        let counts = CountsRecord::new(50, 30, 20).unwrap();
        let est = mle_populations(&counts, &SpamMap::identity()).unwrap();
        assert_abs_diff_eq!(est.p1, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(est.p2, 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(est.even_population(), 0.7, epsilon = 1e-9);
        // Binomial-style errors at the empirical optimum.
        let se1 = est.se_p1.unwrap();
        assert_abs_diff_eq!(se1, (0.3f64 * 0.7 / 100.0).sqrt(), epsilon = 1e-6);
        assert!(est.log_likelihood.is_finite());
    }

    #[test]
    fn corner_counts_give_boundary_estimate() {
        let counts = CountsRecord::new(1000, 0, 0).unwrap();
        let est = mle_populations(&counts, &SpamMap::identity()).unwrap();
        assert_eq!(est.p1, 0.0);
        assert_eq!(est.p2, 0.0);
        assert!(est.se_p1.is_none());
        assert!(est.se_p2.is_none());
    }

    #[test]
    fn mle_coverage_under_readout_errors() {
        let spam = SpamMap::symmetric(DEFAULT_READOUT_ERROR).unwrap();
        let p_true = [0.5, 0.2, 0.3];
        let p_obs = apply_spam(p_true, &spam).unwrap();
        let mut covered = 0;
        for seed in 0..100 {
            let counts = sample_counts(p_obs, 10_000, seed).unwrap();
            let est = mle_populations(&counts, &spam).unwrap();
            let (se1, se2) = (est.se_p1.unwrap(), est.se_p2.unwrap());
            if (est.p1 - p_true[1]).abs() <= 3.0 * se1
                && (est.p2 - p_true[2]).abs() <= 3.0 * se2
            {
                covered += 1;
            }
            let truth_ll = population_log_likelihood(&counts, &spam, p_true[1], p_true[2]);
            assert!(est.log_likelihood >= truth_ll - 1e-9);
        }
        assert!(covered >= 95, "3-sigma coverage {covered}/100");
    }

    #[test]
    fn mle_is_consistent_at_large_n() {
        let asymmetric = SpamMap::from_matrix([
            [0.90, 0.15, 0.00],
            [0.08, 0.80, 0.10],
            [0.02, 0.05, 0.90],
        ])
        .unwrap();
        let p_true = [0.4, 0.35, 0.25];
        for (k, spam) in [
            SpamMap::identity(),
            SpamMap::symmetric(DEFAULT_READOUT_ERROR).unwrap(),
            asymmetric,
        ]
        .iter()
        .enumerate()
        {
            let p_obs = apply_spam(p_true, spam).unwrap();
            let counts = sample_counts(p_obs, 1_000_000, 77 + k as u64).unwrap();
            let est = mle_populations(&counts, spam).unwrap();
            assert!((est.p1 - p_true[1]).abs() <= 1e-2);
            assert!((est.p2 - p_true[2]).abs() <= 1e-2);
        }
    }

    #[test]
    fn dataset_requires_phase_coverage() {
        let c = CountsRecord::new(10, 10, 10).unwrap();
        let spam = SpamMap::identity();
        // Too few points.
        assert!(ParityDataset::new(vec![(0.0, c), (1.0, c), (PI, c)], spam.clone()).is_err());
        // Four points but only three distinct phases.
        let dup = vec![(0.0, c), (0.0, c), (1.0, c), (PI, c)];
        assert!(ParityDataset::new(dup, spam.clone()).is_err());
        // Distinct but narrow span.
        let narrow = vec![(0.0, c), (0.3, c), (0.6, c), (0.9, c)];
        assert!(ParityDataset::new(narrow, spam.clone()).is_err());
        let ok = vec![(0.0, c), (0.3, c), (0.6, c), (PI, c)];
        assert!(ParityDataset::new(ok, spam).is_ok());
    }

    #[test]
    fn counts_record_rejects_empty() {
        assert!(CountsRecord::new(0, 0, 0).is_err());
        let json = r#"{"x0": 0, "x1": 0, "x2": 0}"#;
        assert!(serde_json::from_str::<CountsRecord>(json).is_err());
        let ok: CountsRecord = serde_json::from_str(r#"{"x0": 5, "x1": 1, "x2": 0}"#).unwrap();
        assert_eq!(ok.n(), 6);
    }

    #[test]
    fn parity_fit_recovers_noiseless_model() {
        // Pi = cos(2 phi): p_odd = (1 - cos(2 phi)) / 2, exact expected counts.
        let n = 10_000_000u64;
        let points: Vec<(f64, CountsRecord)> = default_phases()
            .into_iter()
            .map(|phi| {
                let p_odd = 0.5 * (1.0 - (2.0 * phi).cos());
                (phi, expected_counts(p_odd, n))
            })
            .collect();
        let ds = ParityDataset::new(points, SpamMap::identity()).unwrap();
        let fit = mle_parity_fit(&ds).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.phase, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn parity_fit_coverage_and_optimality() {
        let (a_true, phi_true) = (0.9, PI / 4.0);
        let spam = SpamMap::identity();
        let mut covered = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let points: Vec<(f64, CountsRecord)> = default_phases()
                .into_iter()
                .map(|phi| {
                    let p_odd = 0.5 * (1.0 - a_true * (2.0 * phi + phi_true).cos());
                    let x1 = binomial_draw(500, p_odd, &mut rng).unwrap();
                    let even = 500 - x1;
                    (phi, CountsRecord::new(even / 2, x1, even - even / 2).unwrap())
                })
                .collect();
            let ds = ParityDataset::new(points, spam.clone()).unwrap();
            let fit = mle_parity_fit(&ds).unwrap();
            let truth_ll = parity_log_likelihood(&ds, a_true, phi_true);
            assert!(fit.log_likelihood >= truth_ll - 1e-9);
            if let Some(se) = fit.se_amplitude {
                if (fit.amplitude - a_true).abs() <= 3.0 * se {
                    covered += 1;
                }
            }
        }
        assert!(covered >= 95, "3-sigma amplitude coverage {covered}/100");
    }

    #[test]
    fn parity_fit_null_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<(f64, CountsRecord)> = default_phases()
            .into_iter()
            .map(|phi| {
                let x1 = binomial_draw(500, 0.5, &mut rng).unwrap();
                let even = 500 - x1;
                (phi, CountsRecord::new(even / 2, x1, even - even / 2).unwrap())
            })
            .collect();
        let ds = ParityDataset::new(points, SpamMap::identity()).unwrap();
        let fit = mle_parity_fit(&ds).unwrap();
        assert!(fit.amplitude >= 0.0);
        assert!(fit.amplitude < 0.08, "null amplitude fit {}", fit.amplitude);
    }

    #[test]
    fn ideal_bell_scan_probabilities() {
        let rho = bell_rho();
        let p = parity_scan_probabilities(&rho, 0.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.25, epsilon = 1e-12);
        let p = parity_scan_probabilities(&rho, PI / 4.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-12);
        // Parity oscillates as -sin(2 phi), an amplitude-1 cosine at pi/2.
        for k in 0..9 {
            let phi = 0.11 + 0.3 * k as f64;
            let q = parity_scan_probabilities(&rho, phi).unwrap();
            let parity = q[0] + q[2] - q[1];
            assert_abs_diff_eq!(parity, -(2.0 * phi).sin(), epsilon = 1e-12);
        }
        let pops = population_probabilities(&rho).unwrap();
        assert_abs_diff_eq!(pops[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pops[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pops[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn state_validation_rejects_garbage() {
        let not_hermitian = Array2::from_shape_fn((4, 4), |(i, j)| {
            Complex64::new((i + 2 * j) as f64, 1.0)
        });
        assert!(population_probabilities(&not_hermitian).is_err());
        let wrong_shape = Array2::<Complex64>::eye(3);
        assert!(population_probabilities(&wrong_shape).is_err());
    }

    #[test]
    fn bell_fidelity_formula_examples() {
        assert_abs_diff_eq!(bell_fidelity_estimate(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            bell_fidelity_estimate(1.0, 1.0, PI / 2.0).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bell_fidelity_estimate(0.96, 0.92, 0.0).unwrap(),
            0.94,
            epsilon = 1e-12
        );
        assert!(bell_fidelity_estimate(1.2, 0.5, 0.0).is_err());
        assert!(bell_fidelity_estimate(0.5, 1.5, 0.0).is_err());
        assert!(bell_fidelity_estimate(0.5, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn bell_fidelity_matches_constructed_density_matrix() {
        // State with even population 0.96 and coherence amplitude 0.92,
        // phased like the ideal Bell state.
        let mut rho = Array2::zeros((4, 4));
        rho[[0, 0]] = Complex64::new(0.48, 0.0);
        rho[[1, 1]] = Complex64::new(0.02, 0.0);
        rho[[2, 2]] = Complex64::new(0.02, 0.0);
        rho[[3, 3]] = Complex64::new(0.48, 0.0);
        rho[[0, 3]] = Complex64::new(0.0, -0.46);
        rho[[3, 0]] = Complex64::new(0.0, 0.46);

        let pops = population_probabilities(&rho).unwrap();
        let pop_even = pops[0] + pops[2];
        assert_abs_diff_eq!(pop_even, 0.96, epsilon = 1e-12);

        let n = 10_000_000u64;
        let points: Vec<(f64, CountsRecord)> = default_phases()
            .into_iter()
            .map(|phi| {
                let p = parity_scan_probabilities(&rho, phi).unwrap();
                (phi, expected_counts(p[1], n))
            })
            .collect();
        let ds = ParityDataset::new(points, SpamMap::identity()).unwrap();
        let fit = mle_parity_fit(&ds).unwrap();
        assert_abs_diff_eq!(fit.amplitude, 0.92, epsilon = 1e-5);
        assert_abs_diff_eq!(fit.phase, PI / 2.0, epsilon = 1e-5);

        let delta_phi = fit.phase - PI / 2.0;
        let f = bell_fidelity_estimate(pop_even, fit.amplitude, delta_phi).unwrap();
        assert_abs_diff_eq!(f, 0.94, epsilon = 1e-5);
    }

    #[test]
    fn synthesized_dataset_is_deterministic() {
        let rho = bell_rho();
        let spam = SpamMap::symmetric(DEFAULT_READOUT_ERROR).unwrap();
        let a = synthesize_parity_dataset(&rho, &spam, &default_phases(), 200, 5).unwrap();
        let b = synthesize_parity_dataset(&rho, &spam, &default_phases(), 200, 5).unwrap();
        assert_eq!(a.counts(), b.counts());
        assert_eq!(a.len(), 12);
        assert!(a.counts().iter().all(|c| c.n() == 200));
    }

    #[test]
    fn full_pipeline_recovers_unit_fidelity() {
        let rho = bell_rho();
        let spam = SpamMap::symmetric(DEFAULT_READOUT_ERROR).unwrap();

        let p_obs = apply_spam(population_probabilities(&rho).unwrap(), &spam).unwrap();
        let pop_counts = sample_counts(p_obs, 10_000, 21).unwrap();
        let pops = mle_populations(&pop_counts, &spam).unwrap();

        let ds = synthesize_parity_dataset(&rho, &spam, &default_phases(), 833, 22).unwrap();
        let fit = mle_parity_fit(&ds).unwrap();

        let delta_phi = fit.phase - PI / 2.0;
        let f = bell_fidelity_estimate(pops.even_population(), fit.amplitude, delta_phi)
            .unwrap();
        assert!(f <= 1.0 + 1e-12);
        assert!(f >= 0.965, "pipeline fidelity {f}");
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(TAU + 0.25), 0.25, epsilon = 1e-12);
        assert!(wrap_angle(-PI) > 0.0); // maps to +pi
    }
}
