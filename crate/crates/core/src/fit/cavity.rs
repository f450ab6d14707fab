use num_complex::Complex64;
use std::collections::BTreeMap;

use super::chi2::{curvature_uncertainty, FitResult};
use super::simplex::{minimize_bounded, SimplexOptions};
use crate::error::{Error, Result};
use crate::model::{angle_diff_mod_pi, equivalent_length, filter_cavity_phase_at};
use crate::params::CavityParams;
use crate::spectrum::{SpectrumKind, SpectrumSeries};

/// Spread (rad) below which a trajectory counts as flat.
const FLAT: f64 = 1e-3;

/// Linear least-squares start: `tan phi = B / (A + w^2)` with
/// `A = gamma^2 - delta^2`, `B = 2 delta gamma`, written as
/// `A sin phi - B cos phi = -w^2 sin phi` so that it holds modulo pi.
fn linear_guess(w: &[f64], phi: &[f64]) -> Option<(f64, f64)> {
    let (mut saa, mut sab, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let scale = w.iter().fold(0.0f64, |m, &x| m.max(x * x));
    for (&x, &p) in w.iter().zip(phi) {
        let (s, c) = p.sin_cos();
        let y = -x * x / scale * s;
        let (a, b) = (s, -c);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa += a * y;
        sb += b * y;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() <= 1e-12 * (saa * sbb).max(f64::MIN_POSITIVE) {
        return None;
    }
    let a = (sa * sbb - sb * sab) / det * scale;
    let b = (saa * sb - sab * sa) / det * scale;
    // gamma + i delta = sqrt(A + iB), principal root has gamma >= 0
    let z = Complex64::new(a, b).sqrt();
    (z.re > 0.0).then_some((z.im, z.re))
}

/// Fits the detuned filter-cavity rotation to a readout-angle trajectory,
/// comparing angles modulo pi with unit weights (chi2 in rad^2).
pub fn fit_cavity_equivalent(traj: &SpectrumSeries, finesse: f64) -> Result<(CavityParams, FitResult)> {
    if traj.kind != SpectrumKind::Angle {
        return Err(Error::Degenerate("trajectory must be an angle series".into()));
    }
    let w = traj.grid.values();
    let phi = traj.re();
    if w.len() < 3 {
        return Err(Error::Degenerate("trajectory needs at least 3 bins".into()));
    }
    let spread = phi.iter().map(|&p| angle_diff_mod_pi(p, phi[0]).abs()).fold(0.0, f64::max);
    if spread < FLAT {
        return Err(Error::Degenerate("flat trajectory has no rotation to fit".into()));
    }
    let (d0, g0) = linear_guess(w, &phi)
        .ok_or_else(|| Error::Degenerate("trajectory does not constrain the cavity".into()))?;
    let r = (d0 * d0 + g0 * g0).sqrt();
    let lo = [-4.0 * r, 1e-3 * r];
    let hi = [4.0 * r, 4.0 * r];
    let f = |x: &[f64]| -> f64 {
        w.iter()
            .zip(&phi)
            .map(|(&om, &p)| angle_diff_mod_pi(filter_cavity_phase_at(x[0], x[1], om), p).powi(2))
            .sum()
    };
    let opts = SimplexOptions::default();
    let min = minimize_bounded(&f, &lo, &hi, &[d0, g0], &opts);
    let cav = CavityParams::new(min.x[0], min.x[1], finesse)?;
    let sig = curvature_uncertainty(&f, &min.x, &[1e-5 * r, 1e-5 * r]);

    let mut estimates = BTreeMap::new();
    estimates.insert("detuning".to_string(), cav.detuning);
    estimates.insert("bandwidth".to_string(), cav.bandwidth);
    estimates.insert("length".to_string(), equivalent_length(&cav));
    let mut unc = BTreeMap::new();
    unc.insert("detuning".to_string(), sig[0]);
    unc.insert("bandwidth".to_string(), sig[1]);
    Ok((
        cav,
        FitResult {
            estimates,
            per_param_uncertainty: unc,
            chi2: min.value,
            dof: w.len() as i64 - 2,
            converged: min.converged,
            evaluations: min.evals,
            assumed_relative_sd: None,
            input_digest: crate::io::json_digest(&(traj, finesse)),
            params: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::filter_cavity_phase;
    use crate::spectrum::{hz_to_rad, FrequencyGrid, Normalization};

    fn traj(d: f64, g: f64) -> SpectrumSeries {
        let cav = CavityParams::new(hz_to_rad(d), hz_to_rad(g), 6000.0).unwrap();
        filter_cavity_phase(&cav, &FrequencyGrid::linspace_hz(3e3, 60e3, 400).unwrap()).unwrap()
    }

    #[test]
    fn round_trip() {
        for (d, g) in [(4.7e3, 11.5e3), (-2.7e3, 8.1e3), (11.4e3, 4.4e3)] {
            let (cav, r) = fit_cavity_equivalent(&traj(d, g), 6000.0).unwrap();
            assert!((cav.detuning / hz_to_rad(d) - 1.0).abs() < 1e-3);
            assert!((cav.bandwidth / hz_to_rad(g) - 1.0).abs() < 1e-3);
            assert!(r.chi2 < 1e-12);
        }
    }

    #[test]
    fn wrapped_angles_fit_the_same() {
        let t = traj(4.7e3, 11.5e3);
        let mut shifted = t.clone();
        shifted.values = crate::spectrum::SpectrumValues::Real(t.re().iter().map(|p| p + std::f64::consts::PI).collect());
        let (a, _) = fit_cavity_equivalent(&t, 6000.0).unwrap();
        let (b, _) = fit_cavity_equivalent(&shifted, 6000.0).unwrap();
        assert!((a.detuning - b.detuning).abs() < 1e-6 * a.detuning.abs());
    }

    #[test]
    fn flat_is_degenerate() {
        let g = FrequencyGrid::linspace_hz(3e3, 60e3, 50).unwrap();
        let t = SpectrumSeries::real(g, vec![0.7; 50], Normalization::Absolute, SpectrumKind::Angle).unwrap();
        assert!(matches!(fit_cavity_equivalent(&t, 6000.0), Err(Error::Degenerate(_))));
    }
}
