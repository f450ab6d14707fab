//! Optimal squeezing angle and the SQL bandwidth of its rotation.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::response::{backaction_at, vr_effective_params};
use crate::error::{invalid, Error, Result};
use crate::params::{DetectionConfig, SpinParams};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};

/// Folds an angle into [0, pi).
pub fn fold_pi(a: f64) -> f64 {
    let x = a.rem_euclid(PI);
    // rem_euclid can return PI itself for tiny negative inputs
    if x >= PI {
        0.0
    } else {
        x + 0.0
    }
}

/// Smallest signed difference `a - b` modulo pi, in (-pi/2, pi/2].
pub fn angle_diff_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > PI / 2.0 {
        d - PI
    } else {
        d
    }
}

/// Signal angle maximizing `|cos t - sin t K|^2`, i.e. the solution of
/// `tan 2t = -2 Re K / (1 - |K|^2)` with `sign cos 2t = sign(1 - |K|^2)`.
/// Zero coupling maps to 0.
#[inline]
pub fn optimal_angle(k: Complex64) -> f64 {
    if k.re == 0.0 && k.im == 0.0 {
        return 0.0;
    }
    fold_pi(0.5 * (-2.0 * k.re).atan2(1.0 - k.norm_sqr()))
}

/// Per-bin optimal readout angle in [0, pi).
pub fn squeezing_angle(spin: &SpinParams, det: &DetectionConfig, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    spin.validate()?;
    let eff = vr_effective_params(spin, det)?;
    let v = grid
        .iter()
        .enumerate()
        .map(|(bin, w)| {
            backaction_at(eff.larmor, eff.readout, spin.decay, w)
                .map(optimal_angle)
                .ok_or(Error::Singular { bin, omega: w })
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumSeries::real(grid.clone(), v, Normalization::Absolute, SpectrumKind::Angle)
}

/// Bandwidth over which the squeezing angle turns by 45 degrees away from
/// the effective resonance.
pub fn sql_bandwidth(spin: &SpinParams, det: &DetectionConfig) -> Result<f64> {
    let eff = vr_effective_params(spin, det)?;
    let w = eff.larmor.abs();
    if !(w > 0.0) {
        return Err(invalid("larmor", "effective Larmor frequency must be nonzero"));
    }
    if eff.readout < 0.0 {
        return Err(invalid("readout", "effective readout rate must be non-negative"));
    }
    // |W| (sqrt(1 + G/|W|) - 1), rearranged to avoid cancellation
    let x = eff.readout / w;
    Ok(eff.readout / ((1.0 + x).sqrt() + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::presets;
    use crate::spectrum::hz_to_rad;

    #[test]
    fn fold_and_diff() {
        assert_eq!(fold_pi(-1e-18), 0.0);
        assert!((fold_pi(-0.25 * PI) - 0.75 * PI).abs() < 1e-15);
        assert!((angle_diff_mod_pi(0.01, PI - 0.01) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn small_decay_limit_matches_arctan() {
        let spin = SpinParams::from_hz(10.7e3, 9.3e3, 0.0, 0.0, 0.0, 0.0);
        let grid = FrequencyGrid::linspace_hz(1.0e3, 60e3, 397).unwrap();
        let phi = squeezing_angle(&spin, &DetectionConfig::new(0.0, 0.0), &grid).unwrap();
        for (w, p) in grid.iter().zip(phi.re()) {
            let k = spin.readout * spin.larmor / (spin.larmor * spin.larmor - w * w);
            let want = fold_pi(-k.atan());
            assert!(angle_diff_mod_pi(p, want).abs() < 1e-12);
        }
    }

    #[test]
    fn resonance_is_ninety_degrees() {
        let spin = SpinParams::from_hz(10.7e3, 9.3e3, 1.0, 0.0, 0.0, 0.0);
        let g = FrequencyGrid::new(vec![spin.larmor]).unwrap();
        let phi = squeezing_angle(&spin, &DetectionConfig::new(0.0, 0.0), &g).unwrap().re()[0];
        assert!((phi.to_degrees() - 90.0).abs() < 0.01);
    }

    #[test]
    fn zero_readout_is_flat_zero() {
        let spin = SpinParams::from_hz(10.7e3, 0.0, 240.0, 0.0, 0.0, 0.0);
        let grid = FrequencyGrid::linspace_hz(1.0e3, 60e3, 50).unwrap();
        let phi = squeezing_angle(&spin, &DetectionConfig::new(0.0, 0.0), &grid).unwrap();
        assert!(phi.re().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn sql_bandwidth_54k() {
        let (spin, _) = presets::positive_mass_54k();
        let d = sql_bandwidth(&spin, &DetectionConfig::new(0.0, 0.0)).unwrap();
        // mpmath: 4094.750193111253 Hz
        assert!((d / (2.0 * PI) - 4_094.750_193_111_253).abs() < 1e-6);
    }

    #[test]
    fn sql_bandwidth_limits() {
        let det = DetectionConfig::new(0.0, 0.0);
        let off = SpinParams::from_hz(54e3, 0.0, 200.0, 0.0, 0.0, 0.0);
        assert_eq!(sql_bandwidth(&off, &det).unwrap(), 0.0);
        let weak = SpinParams::from_hz(1e6, 100.0, 1.0, 0.0, 0.0, 0.0);
        let d = sql_bandwidth(&weak, &det).unwrap();
        // first order: G/2, with relative correction ~ G/(4W)
        assert!((d / (weak.readout / 2.0) - 1.0).abs() < 1e-4 / 4.0 * 1.01);
        let stalled = SpinParams::from_hz(0.0, 100.0, 1.0, 0.0, 0.0, 0.0);
        assert!(sql_bandwidth(&stalled, &det).is_err());
        let _ = hz_to_rad(1.0);
    }
}
