use serde::{Deserialize, Serialize};
use std::path::Path;

use super::spectrogram::Spectrogram;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::spectrum::{hz_to_rad, rad_to_hz, FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries, SpectrumValues};

/// Mean and standard error of a spectrum over a band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub mean: f64,
    pub stderr: f64,
    pub bins: usize,
}

/// Band statistics over `[lo, hi]` (rad/s). The standard error treats bins
/// as independent samples.
pub fn band_stats(s: &SpectrumSeries, lo: f64, hi: f64) -> Option<BandStats> {
    let idx = s.grid.band_indices(lo, hi);
    if idx.is_empty() {
        return None;
    }
    let re = s.re();
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| re[i]).sum::<f64>() / n;
    let var = if idx.len() > 1 {
        idx.iter().map(|&i| (re[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some(BandStats {
        mean,
        stderr: (var / n).sqrt(),
        bins: idx.len(),
    })
}

/// `freq_hz,value` or `freq_hz,value,imag`. Angle series are written in
/// degrees.
pub fn write_spectrum_csv(s: &SpectrumSeries, path: &Path) -> Result<()> {
    let hz = s.grid.hz();
    write_atomic(path, |w| {
        match &s.values {
            SpectrumValues::Real(v) => {
                writeln!(w, "freq_hz,value")?;
                let deg = s.kind == SpectrumKind::Angle;
                for (f, x) in hz.iter().zip(v) {
                    let x = if deg { x.to_degrees() } else { *x };
                    writeln!(w, "{f:.10e},{x:.16e}")?;
                }
            }
            SpectrumValues::Complex(v) => {
                writeln!(w, "freq_hz,value,imag")?;
                for (f, z) in hz.iter().zip(v) {
                    writeln!(w, "{f:.10e},{:.16e},{:.16e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    })
}

/// Reads a real `freq_hz,value` series as written by [`write_spectrum_csv`].
/// Angle series are converted from degrees.
pub fn read_spectrum_csv(path: &Path, kind: SpectrumKind, normalization: Normalization) -> Result<SpectrumSeries> {
    let text = std::fs::read_to_string(path)?;
    let (mut w, mut v) = (Vec::new(), Vec::new());
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (idx == 0 && t.starts_with("freq_hz")) {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: idx + 1, reason };
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 columns, found {}", fields.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(format!("`{s}` is not a finite number")))
        };
        w.push(hz_to_rad(num(fields[0])?));
        let x = num(fields[1])?;
        v.push(if kind == SpectrumKind::Angle { x.to_radians() } else { x });
    }
    SpectrumSeries::real(FrequencyGrid::new(w)?, v, normalization, kind)
}

/// Header `freq_hz,<angle_deg>...`, then one row per frequency bin in dB.
pub fn write_spectrogram_csv(sg: &Spectrogram, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        write!(w, "freq_hz")?;
        for t in &sg.theta_s_axis {
            write!(w, ",{:.6}", t.to_degrees())?;
        }
        writeln!(w)?;
        for (k, f) in sg.grid.hz().iter().enumerate() {
            write!(w, "{f:.10e}")?;
            for row in &sg.values {
                write!(w, ",{:.10e}", row[k])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub sample_rate_hz: f64,
    pub segments: usize,
    /// Lowest conditional noise over the spectrogram, dB re shot noise.
    pub min_db: f64,
    pub argmin_freq_hz: f64,
    pub argmin_theta_deg: f64,
    pub sql_bandwidth_hz: Option<f64>,
    /// Band-averaged conditional level per angle (dB), with standard error.
    pub band_levels: Vec<AngleLevel>,
    /// `(freq_hz, angle_deg)` samples of the trajectory.
    pub trajectory: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleLevel {
    pub theta_deg: f64,
    pub mean_db: f64,
    pub stderr_db: f64,
}

/// Summary of a spectrogram and its trajectory; the trajectory is decimated
/// to at most `max_points` samples.
pub fn summarize(
    sg: &Spectrogram,
    traj: Option<&SpectrumSeries>,
    sql: Option<f64>,
    band: (f64, f64),
    sample_rate: f64,
    segments: usize,
    max_points: usize,
) -> AnalysisSummary {
    let (mut min_db, mut fmin, mut tmin) = (f64::INFINITY, f64::NAN, f64::NAN);
    let hz = sg.grid.hz();
    let idx = sg.grid.band_indices(band.0, band.1);
    for (j, row) in sg.values.iter().enumerate() {
        for &k in &idx {
            if row[k] < min_db {
                min_db = row[k];
                fmin = hz[k];
                tmin = sg.theta_s_axis[j].to_degrees();
            }
        }
    }
    let band_levels = sg
        .theta_s_axis
        .iter()
        .zip(&sg.values)
        .filter_map(|(t, row)| {
            let s = SpectrumSeries::real(sg.grid.clone(), row.clone(), Normalization::ShotNoiseUnits, SpectrumKind::Decibel).ok()?;
            let b = band_stats(&s, band.0, band.1)?;
            Some(AngleLevel {
                theta_deg: t.to_degrees(),
                mean_db: b.mean,
                stderr_db: b.stderr,
            })
        })
        .collect();
    let trajectory = traj
        .map(|t| {
            let v = t.re();
            let step = v.len().div_ceil(max_points.max(1)).max(1);
            (0..v.len()).step_by(step).map(|k| (hz[k], v[k].to_degrees())).collect()
        })
        .unwrap_or_default();
    AnalysisSummary {
        sample_rate_hz: sample_rate,
        segments,
        min_db,
        argmin_freq_hz: fmin,
        argmin_theta_deg: tmin,
        sql_bandwidth_hz: sql.map(rad_to_hz),
        band_levels,
        trajectory,
    }
}
