//! Scalar figures of merit and the filter-cavity comparison model.

use crate::error::{invalid, Result};
use crate::params::{CavityParams, EprParams, SpinParams};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Quantum cooperativity `G / (gamma (1 + 2 n_th))`.
pub fn cooperativity(spin: &SpinParams) -> Result<f64> {
    if !(spin.decay > 0.0) {
        return Err(invalid("decay", "cooperativity needs a positive decay rate"));
    }
    Ok(spin.readout / (spin.decay * (1.0 + 2.0 * spin.n_th)))
}

/// `Var[x_s - x_i] + Var[p_s + p_i]` of the detected EPR fields divided by
/// its separability bound; below 1 certifies entanglement. The idler
/// channel sees the net efficiency `eta_i_in * eta_i_out`.
pub fn duan_simon_level(epr: &EprParams) -> Result<f64> {
    epr.validate()?;
    let (c, s) = ((2.0 * epr.r).cosh(), (2.0 * epr.r).sinh());
    let (es, ei) = (epr.eta_s, epr.eta_i());
    Ok(1.0 + (es + ei) * (c - 1.0) / 2.0 - (es * ei).sqrt() * s)
}

/// Quadrature rotation of a detuned filter cavity, principal branch.
pub fn filter_cavity_phase_at(detuning: f64, bandwidth: f64, omega: f64) -> f64 {
    (2.0 * detuning * bandwidth / (bandwidth * bandwidth - detuning * detuning + omega * omega)).atan()
}

pub fn filter_cavity_phase(cav: &CavityParams, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    let v = grid
        .iter()
        .map(|w| filter_cavity_phase_at(cav.detuning, cav.bandwidth, w))
        .collect();
    SpectrumSeries::real(grid.clone(), v, Normalization::Absolute, SpectrumKind::Angle)
}

/// Cavity length `c / (2 gamma_f F)`, with the bandwidth in rad/s as stored.
pub fn equivalent_length(cav: &CavityParams) -> f64 {
    SPEED_OF_LIGHT / (2.0 * cav.bandwidth * cav.finesse)
}
