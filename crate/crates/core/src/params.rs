//! Physical parameter sets. All rates and frequencies are angular (rad/s).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::spectrum::hz_to_rad;

/// Spin-oscillator parameters. A negative `larmor` encodes negative
/// effective mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    pub larmor: f64,
    pub readout: f64,
    pub decay: f64,
    pub bb_readout: f64,
    pub bb_decay: f64,
    pub n_th: f64,
    pub n_bb: f64,
}

impl SpinParams {
    /// Builds a parameter set with `n_bb = n_th`.
    pub fn new(larmor: f64, readout: f64, decay: f64, bb_readout: f64, bb_decay: f64, n_th: f64) -> Self {
        Self {
            larmor,
            readout,
            decay,
            bb_readout,
            bb_decay,
            n_th,
            n_bb: n_th,
        }
    }

    /// Same as [`SpinParams::new`] with every rate given as `value / 2pi` in Hz.
    pub fn from_hz(
        larmor_hz: f64,
        readout_hz: f64,
        decay_hz: f64,
        bb_readout_hz: f64,
        bb_decay_hz: f64,
        n_th: f64,
    ) -> Self {
        Self::new(
            hz_to_rad(larmor_hz),
            hz_to_rad(readout_hz),
            hz_to_rad(decay_hz),
            hz_to_rad(bb_readout_hz),
            hz_to_rad(bb_decay_hz),
            n_th,
        )
    }

    /// An oscillator with no coupling to light.
    pub fn decoupled() -> Self {
        Self::new(hz_to_rad(1.0e6), 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.larmor.is_finite() {
            return Err(invalid("larmor", "must be finite"));
        }
        let non_negative = [
            ("readout", self.readout),
            ("decay", self.decay),
            ("bb_readout", self.bb_readout),
            ("bb_decay", self.bb_decay),
            ("n_th", self.n_th),
            ("n_bb", self.n_bb),
        ];
        for (name, v) in non_negative {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if self.decay > 0.0 && self.bb_decay > 0.0 && self.bb_decay < self.decay {
            return Err(invalid(
                "bb_decay",
                format!("broadband decay {} is below narrowband decay {}", self.bb_decay, self.decay),
            ));
        }
        Ok(())
    }

    pub fn with_larmor(mut self, larmor: f64) -> Self {
        self.larmor = larmor;
        self
    }
}

/// EPR source squeezing factor and channel efficiencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprParams {
    pub r: f64,
    pub eta_s: f64,
    pub eta_i_in: f64,
    pub eta_i_out: f64,
}

impl EprParams {
    pub fn new(r: f64, eta_s: f64, eta_i_in: f64, eta_i_out: f64) -> Self {
        Self {
            r,
            eta_s,
            eta_i_in,
            eta_i_out,
        }
    }

    pub fn lossless(r: f64) -> Self {
        Self::new(r, 1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r.is_finite() || self.r < 0.0 {
            return Err(invalid("r", format!("must be finite and non-negative, got {}", self.r)));
        }
        for (name, v) in [
            ("eta_s", self.eta_s),
            ("eta_i_in", self.eta_i_in),
            ("eta_i_out", self.eta_i_out),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Net idler efficiency `eta_i_in * eta_i_out`.
    pub fn eta_i(&self) -> f64 {
        self.eta_i_in * self.eta_i_out
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Signal homodyne angle and idler quarter-wave-plate offset (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    theta_s: f64,
    delta_theta_i: f64,
}

impl DetectionConfig {
    pub fn new(theta_s: f64, delta_theta_i: f64) -> Self {
        Self {
            theta_s: wrap_angle(theta_s),
            delta_theta_i: wrap_angle(delta_theta_i),
        }
    }

    pub fn from_degrees(theta_s_deg: f64, delta_theta_i_deg: f64) -> Self {
        Self::new(theta_s_deg.to_radians(), delta_theta_i_deg.to_radians())
    }

    pub fn theta_s(&self) -> f64 {
        self.theta_s
    }

    pub fn delta_theta_i(&self) -> f64 {
        self.delta_theta_i
    }

    pub fn with_theta_s(self, theta_s: f64) -> Self {
        Self::new(theta_s, self.delta_theta_i)
    }
}

/// Detuned Fabry-Perot filter cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub detuning: f64,
    pub bandwidth: f64,
    pub finesse: f64,
}

impl CavityParams {
    pub fn new(detuning: f64, bandwidth: f64, finesse: f64) -> Result<Self> {
        if !detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        if !(finesse > 0.0 && finesse.is_finite()) {
            return Err(invalid("finesse", format!("must be positive, got {finesse}")));
        }
        Ok(Self {
            detuning,
            bandwidth,
            finesse,
        })
    }
}

/// Parameter sets calibrated for the three oscillator configurations of the
/// reference experiment.
pub mod presets {
    use super::*;

    pub fn positive_mass_10k() -> (SpinParams, EprParams) {
        (
            SpinParams::from_hz(10.7e3, 9.3e3, 240.0, 140e3, 190e3, 3.5),
            EprParams::new(1.42, 0.92, 0.89, 0.90),
        )
    }

    pub fn negative_mass_10k() -> (SpinParams, EprParams) {
        (
            SpinParams::from_hz(-10.5e3, 9.5e3, 240.0, 130e3, 190e3, 3.4),
            EprParams::new(1.42, 0.92, 0.89, 0.90),
        )
    }

    pub fn positive_mass_54k() -> (SpinParams, EprParams) {
        (
            SpinParams::from_hz(54e3, 8.5e3, 200.0, 5e3, 190e3, 4.0),
            EprParams::new(1.31, 0.92, 0.89, 0.90),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_are_wrapped() {
        let d = DetectionConfig::new(3.0 * PI / 2.0, -PI);
        assert!((d.theta_s() + PI / 2.0).abs() < 1e-12);
        assert!((d.delta_theta_i() - PI).abs() < 1e-12);
    }

    #[test]
    fn spin_validation() {
        let (s, e) = presets::positive_mass_10k();
        s.validate().unwrap();
        e.validate().unwrap();
        let mut bad = s;
        bad.decay = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = s;
        bad.bb_decay = s.decay / 2.0;
        assert!(bad.validate().is_err());
        // negative mass is fine
        s.with_larmor(-s.larmor).validate().unwrap();
    }

    #[test]
    fn efficiency_bounds() {
        assert!(EprParams::new(1.0, 0.0, 1.0, 1.0).validate().is_err());
        assert!(EprParams::new(1.0, 1.0, 1.1, 1.0).validate().is_err());
        assert!(EprParams::new(-0.1, 1.0, 1.0, 1.0).validate().is_err());
        assert!(CavityParams::new(1.0, 0.0, 10.0).is_err());
    }
}
