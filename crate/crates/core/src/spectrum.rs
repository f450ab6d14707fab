//! Frequency grids and spectrum containers.
//!
//! Everything inside the crate works in angular frequency (rad/s). Hz only
//! appears at I/O boundaries, via [`hz_to_rad`] and [`rad_to_hz`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Symmetrized vacuum (shot-noise) spectral density.
pub const SHOT_NOISE: f64 = 0.5;

pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Strictly increasing, strictly positive angular frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid(Vec<f64>);

impl FrequencyGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        for (i, &w) in values.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "bin {i} has non-positive or non-finite frequency {w}"
                )));
            }
            if i > 0 && w <= values[i - 1] {
                return Err(Error::InvalidGrid(format!(
                    "bin {i} ({w}) does not increase on bin {} ({})",
                    i - 1,
                    values[i - 1]
                )));
            }
        }
        Ok(Self(values))
    }

    /// `points` linearly spaced angular frequencies covering `[lo_hz, hi_hz]`.
    pub fn linspace_hz(lo_hz: f64, hi_hz: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        let step = (hi_hz - lo_hz) / (points - 1) as f64;
        Self::new(
            (0..points)
                .map(|i| hz_to_rad(lo_hz + step * i as f64))
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn hz(&self) -> Vec<f64> {
        self.0.iter().map(|&w| rad_to_hz(w)).collect()
    }

    /// Indices of bins whose frequency lies in `[lo, hi]` (rad/s).
    pub fn band_indices(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= lo && w <= hi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sub-grid restricted to `[lo, hi]` (rad/s).
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let values: Vec<f64> = self.iter().filter(|&w| w >= lo && w <= hi).collect();
        Self::new(values)
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divided by the shot-noise level: vacuum is 1.
    ShotNoiseUnits,
    /// Raw symmetrized spectral density: vacuum is 1/2.
    Symmetrized,
    /// Estimator output in record units squared per Hz.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Psd,
    Csd,
    Gain,
    Angle,
    /// Dimensionless response function such as a backaction coefficient.
    Response,
    Decibel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "data")]
pub enum SpectrumValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl SpectrumValues {
    pub fn len(&self) -> usize {
        match self {
            Self::Real(v) => v.len(),
            Self::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-bin values on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub grid: FrequencyGrid,
    pub values: SpectrumValues,
    pub normalization: Normalization,
    pub kind: SpectrumKind,
}

impl SpectrumSeries {
    pub fn real(
        grid: FrequencyGrid,
        values: Vec<f64>,
        normalization: Normalization,
        kind: SpectrumKind,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} bins",
                values.len(),
                grid.len()
            )));
        }
        if kind == SpectrumKind::Psd {
            if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
                return Err(Error::Degenerate(format!(
                    "PSD bin {i} is negative or NaN ({})",
                    values[i]
                )));
            }
        }
        Ok(Self {
            grid,
            values: SpectrumValues::Real(values),
            normalization,
            kind,
        })
    }

    pub fn complex(
        grid: FrequencyGrid,
        values: Vec<Complex64>,
        normalization: Normalization,
        kind: SpectrumKind,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} bins",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values: SpectrumValues::Complex(values),
            normalization,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.values, SpectrumValues::Complex(_))
    }

    /// Real values; complex series yield their real parts.
    pub fn re(&self) -> Vec<f64> {
        match &self.values {
            SpectrumValues::Real(v) => v.clone(),
            SpectrumValues::Complex(v) => v.iter().map(|z| z.re).collect(),
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.values {
            SpectrumValues::Real(v) => Some(v),
            SpectrumValues::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match &self.values {
            SpectrumValues::Complex(v) => Some(v),
            SpectrumValues::Real(_) => None,
        }
    }

    /// Values promoted to complex.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match &self.values {
            SpectrumValues::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            SpectrumValues::Complex(v) => v.clone(),
        }
    }

    /// Mean of the real values over bins in `[lo, hi]` (rad/s).
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let idx = self.grid.band_indices(lo, hi);
        if idx.is_empty() {
            return None;
        }
        let re = self.re();
        Some(idx.iter().map(|&i| re[i]).sum::<f64>() / idx.len() as f64)
    }
}
