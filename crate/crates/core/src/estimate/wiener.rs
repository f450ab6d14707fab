use num_complex::Complex64;
use rayon::prelude::*;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::welch::{welch_pair, welch_psd, WelchConfig, WelchSpectra};
use crate::error::{Error, Result};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};
use crate::synth::TimeSeriesPair;

/// Relative floor below which an idler bin is treated as empty.
pub const IDLER_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSource {
    DataDriven,
    Analytical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerFilterEstimate {
    pub gain: SpectrumSeries,
    pub source: GainSource,
    /// Bins zeroed because the idler PSD was below the floor.
    pub flagged: Vec<usize>,
}

impl WienerFilterEstimate {
    pub fn analytical(gain: SpectrumSeries) -> Result<Self> {
        if !gain.is_complex() {
            return Err(Error::Degenerate("gain must be a complex series".into()));
        }
        Ok(Self {
            gain,
            source: GainSource::Analytical,
            flagged: Vec::new(),
        })
    }

    pub fn constant(grid: FrequencyGrid, g: Complex64) -> Self {
        let n = grid.len();
        Self {
            gain: SpectrumSeries::complex(grid, vec![g; n], Normalization::ShotNoiseUnits, SpectrumKind::Gain)
                .expect("lengths match"),
            source: GainSource::Analytical,
            flagged: Vec::new(),
        }
    }

    /// Three-bin moving average (two bins at the edges).
    pub fn smoothed(&self) -> Self {
        let g = self.gain.to_complex();
        let n = g.len();
        let s = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                g[lo..=hi].iter().sum::<Complex64>() / (hi - lo + 1) as f64
            })
            .collect();
        let mut out = self.clone();
        out.gain.values = crate::spectrum::SpectrumValues::Complex(s);
        out
    }
}

/// `g = -CSD / PSD_idler` on the Welch grid.
pub fn wiener_from_spectra(w: &WelchSpectra) -> Result<WienerFilterEstimate> {
    let mut sorted = w.psd_idler.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(median > 0.0) {
        return Err(Error::Degenerate("idler record has no power".into()));
    }
    let floor = IDLER_FLOOR * median;
    let mut flagged = Vec::new();
    let g = w
        .csd
        .iter()
        .zip(&w.psd_idler)
        .enumerate()
        .map(|(k, (c, &p))| {
            if p < floor {
                flagged.push(k);
                Complex64::default()
            } else {
                -c / p
            }
        })
        .collect();
    Ok(WienerFilterEstimate {
        gain: SpectrumSeries::complex(w.grid.clone(), g, Normalization::ShotNoiseUnits, SpectrumKind::Gain)?,
        source: GainSource::DataDriven,
        flagged,
    })
}

pub fn estimate_wiener(pair: &TimeSeriesPair, cfg: &WelchConfig) -> Result<WienerFilterEstimate> {
    if pair.idler().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("idler record is identically zero".into()));
    }
    wiener_from_spectra(&welch_pair(pair, cfg)?)
}

fn check_grid(filter: &WienerFilterEstimate, grid: &FrequencyGrid) -> Result<()> {
    let a = filter.gain.grid.values();
    let b = grid.values();
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9 * y) {
        return Err(Error::GridMismatch(format!(
            "filter has {} bins, Welch grid has {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Non-causal FIR taps realizing the gain: `taps[m]` multiplies lag
/// `m - L/2`. The DC response copies the real part of the lowest bin.
pub fn impulse_response(filter: &WienerFilterEstimate, segment_length: usize) -> Vec<f64> {
    let l = segment_length;
    let g = filter.gain.to_complex();
    let plan = RealFftPlanner::<f64>::new().plan_fft_inverse(l);
    let mut h_spec = plan.make_input_vec();
    h_spec[0] = Complex64::new(g[0].re, 0.0);
    h_spec[1..=l / 2].copy_from_slice(&g[..l / 2]);
    h_spec[l / 2].im = 0.0;
    let mut h = plan.make_output_vec();
    plan.process(&mut h_spec, &mut h).expect("buffer sizes match the plan");
    (0..l).map(|m| h[(m + l / 2) % l] / l as f64).collect()
}

/// Linear convolution `y[n] = sum_m taps[m] x[n + L/2 - m]` by overlap-save,
/// with `x` taken as zero outside the record.
pub fn convolve_noncausal(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let l = taps.len();
    let f = (8 * l).next_power_of_two();
    let block = f - l;
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(f);
    let inv = planner.plan_fft_inverse(f);
    let mut hp = fwd.make_input_vec();
    hp[..l].copy_from_slice(taps);
    let mut hf = fwd.make_output_vec();
    fwd.process(&mut hp, &mut hf).expect("buffer sizes match the plan");
    let scale = 1.0 / f as f64;
    let half = l as isize / 2;

    let mut y = vec![0.0; x.len()];
    y.par_chunks_mut(block)
        .enumerate()
        .for_each_init(
            || (fwd.make_input_vec(), fwd.make_output_vec(), inv.make_output_vec()),
            |(u, spec, c), (b, out)| {
                let s = (b * block) as isize;
                for (t, v) in u.iter_mut().enumerate() {
                    let i = s - half + t as isize;
                    *v = if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { 0.0 };
                }
                fwd.process(u, spec).expect("buffer sizes match the plan");
                for (a, h) in spec.iter_mut().zip(&hf) {
                    *a *= h * scale;
                }
                spec[0].im = 0.0;
                spec[f / 2].im = 0.0;
                inv.process(spec, c).expect("buffer sizes match the plan");
                for (i, o) in out.iter_mut().enumerate() {
                    *o = c[i + l];
                }
            },
        );
    y
}

/// Applies the gain to the idler and adds it to the signal:
/// `Q_s|i = q_s + g * Q_i`. Returns the conditioned record and its Welch PSD.
pub fn apply_conditioning(
    pair: &TimeSeriesPair,
    filter: &WienerFilterEstimate,
    cfg: &WelchConfig,
) -> Result<(Vec<f64>, SpectrumSeries)> {
    let grid = cfg.grid(pair.sample_rate)?;
    check_grid(filter, &grid)?;
    let g = filter.gain.to_complex();
    let out: Vec<f64> = if g.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
        pair.signal().to_vec()
    } else {
        let taps = impulse_response(filter, cfg.segment_length);
        let y = convolve_noncausal(pair.idler(), &taps);
        pair.signal().iter().zip(&y).map(|(s, v)| s + v).collect()
    };
    let psd = welch_psd(&out, pair.sample_rate, cfg)?;
    Ok((out, psd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditioningMode {
    /// Estimate the gain and apply it on the same record.
    #[default]
    InSample,
    /// Estimate on the first half, apply to the second half.
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningOptions {
    pub mode: ConditioningMode,
    pub smooth: bool,
    /// Replace the estimated gain by zero.
    pub zero_gain: bool,
}

#[derive(Debug, Clone)]
pub struct Conditioned {
    pub filter: WienerFilterEstimate,
    pub record: Vec<f64>,
    /// Welch PSD of the conditioned record, absolute units.
    pub spectrum: SpectrumSeries,
    /// Spectra of the record the gain was applied to.
    pub welch: WelchSpectra,
}

/// Full data-driven conditioning of one record pair.
pub fn condition(pair: &TimeSeriesPair, cfg: &WelchConfig, opts: &ConditioningOptions) -> Result<Conditioned> {
    let (est_pair, app_pair) = match opts.mode {
        ConditioningMode::InSample => (pair.clone(), pair.clone()),
        ConditioningMode::Unbiased => {
            let h = pair.len() / 2;
            (pair.slice(0, h)?, pair.slice(h, pair.len())?)
        }
    };
    let est = welch_pair(&est_pair, cfg)?;
    let mut filter = if opts.zero_gain {
        WienerFilterEstimate::constant(est.grid.clone(), Complex64::default())
    } else {
        if est_pair.idler().iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate("idler record is identically zero".into()));
        }
        wiener_from_spectra(&est)?
    };
    if opts.smooth {
        filter = filter.smoothed();
    }
    let welch = match opts.mode {
        ConditioningMode::InSample => est,
        ConditioningMode::Unbiased => welch_pair(&app_pair, cfg)?,
    };
    let (record, spectrum) = apply_conditioning(&app_pair, &filter, cfg)?;
    Ok(Conditioned {
        filter,
        record,
        spectrum,
        welch,
    })
}
