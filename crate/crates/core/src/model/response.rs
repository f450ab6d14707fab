//! Response functions of the spin oscillator and the virtual-rigidity
//! renormalization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{DetectionConfig, SpinParams};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};

/// `numer / (larmor^2 + decay^2/4 - omega^2 - i decay omega)`.
///
/// Returns `None` only when the denominator vanishes with a nonzero
/// numerator (undamped resonance). A zero numerator means no coupling and
/// yields exactly zero.
#[inline]
pub fn lorentzian(numer: f64, larmor: f64, decay: f64, omega: f64) -> Option<Complex64> {
    if numer == 0.0 {
        return Some(Complex64::new(0.0, 0.0));
    }
    let den = Complex64::new(
        larmor * larmor + 0.25 * decay * decay - omega * omega,
        -decay * omega,
    );
    if den.re == 0.0 && den.im == 0.0 {
        return None;
    }
    Some(Complex64::new(numer, 0.0) / den)
}

/// Backaction coefficient K_a for an oscillator with the given Larmor
/// frequency and readout rate.
#[inline]
pub fn backaction_at(larmor: f64, readout: f64, decay: f64, omega: f64) -> Option<Complex64> {
    lorentzian(readout * larmor, larmor, decay, omega)
}

/// Coupling of a thermal bath with decay `decay` and readout `readout`:
/// `sqrt(2 decay readout) larmor / (larmor^2 - omega^2 - i decay omega + decay^2/4)`.
#[inline]
pub fn bath_coupling_at(larmor: f64, readout: f64, decay: f64, omega: f64) -> Option<Complex64> {
    lorentzian((2.0 * decay * readout).sqrt() * larmor, larmor, decay, omega)
}

fn map_grid(
    grid: &FrequencyGrid,
    f: impl Fn(f64) -> Option<Complex64>,
) -> Result<Vec<Complex64>> {
    grid.iter()
        .enumerate()
        .map(|(bin, omega)| f(omega).ok_or(Error::Singular { bin, omega }))
        .collect()
}

fn response_series(grid: &FrequencyGrid, values: Vec<Complex64>) -> Result<SpectrumSeries> {
    SpectrumSeries::complex(
        grid.clone(),
        values,
        Normalization::ShotNoiseUnits,
        SpectrumKind::Response,
    )
}

pub fn atomic_backaction(spin: &SpinParams, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    let v = map_grid(grid, |w| backaction_at(spin.larmor, spin.readout, spin.decay, w))?;
    response_series(grid, v)
}

pub fn thermal_coupling(spin: &SpinParams, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    let v = map_grid(grid, |w| bath_coupling_at(spin.larmor, spin.readout, spin.decay, w))?;
    response_series(grid, v)
}

pub fn broadband_coupling(spin: &SpinParams, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    let v = map_grid(grid, |w| {
        bath_coupling_at(spin.larmor, spin.bb_readout, spin.bb_decay, w)
    })?;
    response_series(grid, v)
}

/// Effective readout rate and Larmor frequency of the oscillator seen
/// through a quarter-wave-plate offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveOscillator {
    pub readout: f64,
    pub larmor: f64,
}

pub fn vr_effective_params(spin: &SpinParams, det: &DetectionConfig) -> Result<EffectiveOscillator> {
    let d = det.delta_theta_i();
    let s2 = (2.0 * d).sin();
    let radicand = if s2 == 0.0 {
        1.0
    } else {
        1.0 - spin.readout / (2.0 * spin.larmor) * s2
    };
    if !(radicand > 0.0) || !radicand.is_finite() {
        return Err(Error::Domain { radicand });
    }
    let root = radicand.sqrt();
    let c = d.cos();
    Ok(EffectiveOscillator {
        readout: spin.readout * c * c / root,
        larmor: spin.larmor * root,
    })
}

#[inline]
pub fn vr_gain_at(spin: &SpinParams, det: &DetectionConfig, omega: f64) -> Option<Complex64> {
    let k = backaction_at(spin.larmor, spin.readout, spin.decay, omega)?;
    Some(Complex64::new(1.0, 0.0) - k * ((2.0 * det.delta_theta_i()).sin() / 2.0))
}

pub fn vr_gain(spin: &SpinParams, det: &DetectionConfig, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    let v = map_grid(grid, |w| vr_gain_at(spin, det, w))?;
    SpectrumSeries::complex(grid.clone(), v, Normalization::ShotNoiseUnits, SpectrumKind::Gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::presets;
    use crate::spectrum::hz_to_rad;

    fn one_bin(f_hz: f64) -> FrequencyGrid {
        FrequencyGrid::new(vec![hz_to_rad(f_hz)]).unwrap()
    }

    // Reference values below come from a 40-digit mpmath evaluation of the
    // closed forms, independent of this code.

    #[test]
    fn backaction_on_resonance() {
        let (spin, _) = presets::positive_mass_10k();
        let k = atomic_backaction(&spin, &FrequencyGrid::new(vec![spin.larmor]).unwrap()).unwrap();
        let k = k.as_complex().unwrap()[0];
        assert!((k.re - 0.217_282_887_427_768_9).abs() < 1e-12);
        assert!((k.im - 38.748_781_591_285_45).abs() < 1e-9);
    }

    #[test]
    fn backaction_vanishes_far_above_resonance() {
        let (spin, _) = presets::positive_mass_10k();
        let k = atomic_backaction(&spin, &one_bin(1.0e6)).unwrap().as_complex().unwrap()[0];
        assert!(k.norm() < 0.02);
        assert!((k.norm() - 9.952_139_277_082_208e-5).abs() < 1e-15);
    }

    #[test]
    fn zero_readout_gives_zero_backaction() {
        let (mut spin, _) = presets::positive_mass_10k();
        spin.readout = 0.0;
        let grid = FrequencyGrid::linspace_hz(100.0, 100e3, 500).unwrap();
        let k = atomic_backaction(&spin, &grid).unwrap();
        assert!(k.as_complex().unwrap().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn undamped_resonance_is_rejected() {
        let spin = SpinParams::from_hz(10e3, 5e3, 0.0, 0.0, 0.0, 0.0);
        let grid = FrequencyGrid::new(vec![hz_to_rad(5e3), spin.larmor, hz_to_rad(20e3)]).unwrap();
        match atomic_backaction(&spin, &grid) {
            Err(Error::Singular { bin, .. }) => assert_eq!(bin, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
        // zero decay also removes the thermal coupling entirely
        let th = thermal_coupling(&spin, &grid).unwrap();
        assert!(th.as_complex().unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn thermal_coupling_on_resonance() {
        let (spin, _) = presets::positive_mass_10k();
        let g = FrequencyGrid::new(vec![spin.larmor]).unwrap();
        let k = thermal_coupling(&spin, &g).unwrap().as_complex().unwrap()[0];
        assert!((k.norm_sqr() - 77.497_563_182_570_9).abs() < 1e-9);
    }

    #[test]
    fn broadband_coupling_values() {
        let (spin, _) = presets::positive_mass_10k();
        let grid = FrequencyGrid::new(
            [3e3, 10.7e3, 30e3, 60e3].iter().map(|&f| hz_to_rad(f)).collect(),
        )
        .unwrap();
        let k = broadband_coupling(&spin, &grid).unwrap();
        let got: Vec<f64> = k.as_complex().unwrap().iter().map(|z| z.norm_sqr()).collect();
        let want = [
            0.072_778_272_052_161_61,
            0.071_168_540_313_639_58,
            0.060_678_589_543_199_47,
            0.037_914_855_746_255_85,
        ];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn broadband_far_flatter_than_narrowband() {
        let (spin, _) = presets::positive_mass_10k();
        let grid = FrequencyGrid::linspace_hz(3e3, 60e3, 2000).unwrap();
        let spread = |s: &SpectrumSeries| {
            let v: Vec<f64> = s.as_complex().unwrap().iter().map(|z| z.norm_sqr()).collect();
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        };
        let bb = spread(&broadband_coupling(&spin, &grid).unwrap());
        let na = spread(&atomic_backaction(&spin, &grid).unwrap());
        assert!(bb < 2.0);
        assert!(na > 1e3);
    }

    #[test]
    fn vr_identity_without_wave_plate() {
        let (spin, _) = presets::negative_mass_10k();
        let eff = vr_effective_params(&spin, &DetectionConfig::new(0.3, 0.0)).unwrap();
        assert_eq!(eff.readout, spin.readout);
        assert_eq!(eff.larmor, spin.larmor);
    }

    #[test]
    fn vr_downshift_negative_mass() {
        let (spin, _) = presets::negative_mass_10k();
        let det = DetectionConfig::from_degrees(0.0, -42.0);
        let eff = vr_effective_params(&spin, &det).unwrap();
        assert!((eff.larmor / (2.0 * std::f64::consts::PI) + 7_787.696_737_065_932).abs() < 1e-6);
        assert!((eff.readout / (2.0 * std::f64::consts::PI) - 7_073.767_631_869_693).abs() < 1e-6);
    }

    #[test]
    fn vr_domain_error() {
        // radicand 1 - (G/2W) sin(2d) < 0 for a weak positive-mass oscillator
        let spin = SpinParams::from_hz(1e3, 9e3, 10.0, 0.0, 0.0, 0.0);
        let det = DetectionConfig::from_degrees(0.0, 45.0);
        match vr_effective_params(&spin, &det) {
            Err(Error::Domain { radicand }) => assert!((radicand + 3.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vr_gain_trivial_cases() {
        let (spin, _) = presets::negative_mass_10k();
        let grid = FrequencyGrid::linspace_hz(1e3, 50e3, 100).unwrap();
        let g = vr_gain(&spin, &DetectionConfig::new(0.0, 0.0), &grid).unwrap();
        assert!(g.as_complex().unwrap().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
        let mut off = spin;
        off.readout = 0.0;
        let g = vr_gain(&off, &DetectionConfig::from_degrees(0.0, 45.0), &grid).unwrap();
        assert!(g.as_complex().unwrap().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn vr_gain_negative_mass_at_5k() {
        let (spin, _) = presets::negative_mass_10k();
        let det = DetectionConfig::from_degrees(0.0, -42.0);
        let g = vr_gain(&spin, &det, &one_bin(5e3)).unwrap().as_complex().unwrap()[0];
        assert!((g.re - 0.418_374_413_416_567_2).abs() < 1e-12);
        assert!((g.im + 0.008_185_722_340_157_43).abs() < 1e-12);
    }
}
