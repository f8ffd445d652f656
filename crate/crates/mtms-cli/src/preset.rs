//! Named operating points.

use std::f64::consts::TAU;

use serde::Serialize;

/// Operating point of the trapped-ion demonstration this toolkit models.
/// The tone spacing and gate time satisfy delta * tau = 2 pi exactly.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PaperPreset {
    /// Tone spacing delta in rad/s (delta/2pi = 292 Hz).
    pub delta_rad_per_s: f64,
    /// Gate time 2pi/delta, about 3.42 ms.
    pub gate_time_s: f64,
    /// Lamb-Dicke parameter of the addressed motional mode.
    pub eta: f64,
    /// Carrier Rabi frequency in rad/s (36 kHz).
    pub omega0_rad_per_s: f64,
    /// Trap frequency of the addressed mode in rad/s (461 kHz).
    pub trap_rad_per_s: f64,
    /// Mean occupation after sideband cooling.
    pub nbar_cold: f64,
    /// Mean occupation with Doppler cooling only.
    pub nbar_hot: f64,
}

pub fn paper() -> PaperPreset {
    let delta = TAU * 292.0;
    PaperPreset {
        delta_rad_per_s: delta,
        gate_time_s: TAU / delta,
        eta: 0.004,
        omega0_rad_per_s: TAU * 36e3,
        trap_rad_per_s: TAU * 461e3,
        nbar_cold: 0.1,
        nbar_hot: 53.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_time_matches_tone_spacing() {
        let p = paper();
        assert_eq!(p.delta_rad_per_s * p.gate_time_s, TAU);
        // Rounds to the printed 3.42 ms.
        assert!((p.gate_time_s - 3.42e-3).abs() < 5e-6);
    }
}
