use num_complex::Complex64;
use rayon::prelude::*;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};
use crate::synth::{shot_noise_psd, TimeSeriesPair};

const CHUNK_SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rect,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap: f64,
    pub window: Window,
    /// Subtract each segment's mean before windowing.
    pub detrend: bool,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap: 0.5,
            window: Window::Hann,
            detrend: true,
        }
    }
}

impl WelchConfig {
    /// Defaults with the shortest power-of-two segment giving a resolution
    /// of 100 Hz or finer.
    pub fn for_sample_rate(fs: f64) -> Self {
        let n = ((fs / 100.0).ceil() as usize).max(64).next_power_of_two();
        Self {
            segment_length: n,
            ..Self::default()
        }
    }

    pub fn with_segment_length(mut self, n: usize) -> Self {
        self.segment_length = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.segment_length;
        if n < 64 || !n.is_power_of_two() {
            return Err(invalid("segment_length", format!("must be a power of two >= 64, got {n}")));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(invalid("overlap", format!("must lie in [0, 1), got {}", self.overlap)));
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        let s = self.segment_length - (self.overlap * self.segment_length as f64).round() as usize;
        s.max(1)
    }

    pub fn segments(&self, len: usize) -> Result<usize> {
        self.validate()?;
        let needed = 2 * self.segment_length;
        if len < needed {
            return Err(Error::TooShort { len, needed });
        }
        Ok((len - self.segment_length) / self.step() + 1)
    }

    /// Output grid: bins `1..=L/2` of the segment transform.
    pub fn grid(&self, fs: f64) -> Result<FrequencyGrid> {
        self.validate()?;
        let df = fs / self.segment_length as f64;
        FrequencyGrid::new(
            (1..=self.segment_length / 2)
                .map(|k| 2.0 * PI * df * k as f64)
                .collect(),
        )
    }
}

/// Averaged auto and cross periodograms of a record pair, with the sample
/// variance of each mean PSD estimated from the scatter between segments.
#[derive(Debug, Clone)]
pub struct WelchSpectra {
    pub grid: FrequencyGrid,
    pub sample_rate: f64,
    pub segments: usize,
    pub psd_signal: Vec<f64>,
    pub psd_idler: Vec<f64>,
    /// `<S I*>`, signal times conjugate idler.
    pub csd: Vec<Complex64>,
    pub var_signal: Vec<f64>,
    pub var_idler: Vec<f64>,
}

impl WelchSpectra {
    fn series(&self, v: &[f64]) -> Result<SpectrumSeries> {
        SpectrumSeries::real(self.grid.clone(), v.to_vec(), Normalization::Absolute, SpectrumKind::Psd)
    }

    pub fn signal(&self) -> Result<SpectrumSeries> {
        self.series(&self.psd_signal)
    }

    pub fn idler(&self) -> Result<SpectrumSeries> {
        self.series(&self.psd_idler)
    }

    pub fn cross(&self) -> Result<SpectrumSeries> {
        SpectrumSeries::complex(self.grid.clone(), self.csd.clone(), Normalization::Absolute, SpectrumKind::Csd)
    }

    /// Magnitude-squared coherence per bin.
    pub fn coherence(&self) -> Vec<f64> {
        self.csd
            .iter()
            .zip(self.psd_signal.iter().zip(&self.psd_idler))
            .map(|(c, (a, b))| c.norm_sqr() / (a * b))
            .collect()
    }
}

struct Acc {
    p: [Vec<f64>; 2],
    p2: [Vec<f64>; 2],
    x: Vec<Complex64>,
}

impl Acc {
    fn zeros(bins: usize, cross: bool) -> Self {
        Self {
            p: [vec![0.0; bins], vec![0.0; bins]],
            p2: [vec![0.0; bins], vec![0.0; bins]],
            x: if cross { vec![Complex64::default(); bins] } else { Vec::new() },
        }
    }

    fn add(&mut self, o: &Acc) {
        for c in 0..2 {
            for (a, b) in self.p[c].iter_mut().zip(&o.p[c]) {
                *a += b;
            }
            for (a, b) in self.p2[c].iter_mut().zip(&o.p2[c]) {
                *a += b;
            }
        }
        for (a, b) in self.x.iter_mut().zip(&o.x) {
            *a += b;
        }
    }
}

/// Core estimator. With `b = None` only the first channel is analyzed.
fn accumulate(a: &[f64], b: Option<&[f64]>, fs: f64, cfg: &WelchConfig) -> Result<(Acc, usize)> {
    let nseg = cfg.segments(a.len())?;
    if let Some(b) = b {
        if b.len() != a.len() {
            return Err(Error::GridMismatch("channels differ in length".into()));
        }
    }
    let l = cfg.segment_length;
    let bins = l / 2;
    let step = cfg.step();
    let win = cfg.window.coefficients(l);
    let u: f64 = win.iter().map(|w| w * w).sum();
    let plan = RealFftPlanner::<f64>::new().plan_fft_forward(l);
    let chans: Vec<&[f64]> = std::iter::once(a).chain(b).collect();
    let cross = chans.len() == 2;

    let chunks: Vec<Acc> = (0..nseg.div_ceil(CHUNK_SEGMENTS))
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::zeros(bins, cross);
            let mut buf = plan.make_input_vec();
            let mut spec = [plan.make_output_vec(), plan.make_output_vec()];
            let mut scratch = plan.make_scratch_vec();
            let end = ((c + 1) * CHUNK_SEGMENTS).min(nseg);
            for s in c * CHUNK_SEGMENTS..end {
                let start = s * step;
                for (ch, x) in chans.iter().enumerate() {
                    let seg = &x[start..start + l];
                    let mean = if cfg.detrend { seg.iter().sum::<f64>() / l as f64 } else { 0.0 };
                    for ((o, v), w) in buf.iter_mut().zip(seg).zip(&win) {
                        *o = (v - mean) * w;
                    }
                    plan.process_with_scratch(&mut buf, &mut spec[ch], &mut scratch)
                        .expect("buffer sizes match the plan");
                    for k in 0..bins {
                        let p = spec[ch][k + 1].norm_sqr();
                        acc.p[ch][k] += p;
                        acc.p2[ch][k] += p * p;
                    }
                }
                if cross {
                    for k in 0..bins {
                        acc.x[k] += spec[0][k + 1] * spec[1][k + 1].conj();
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = Acc::zeros(bins, cross);
    for c in &chunks {
        total.add(c);
    }
    let n = nseg as f64;
    let mut scales = vec![2.0 / (fs * u); bins];
    scales[bins - 1] = 1.0 / (fs * u);
    for ch in 0..2 {
        for k in 0..bins {
            let mean = total.p[ch][k] / n;
            let meansq = total.p2[ch][k] / n;
            let var = if nseg > 1 { (meansq - mean * mean).max(0.0) / (n - 1.0) } else { f64::NAN };
            total.p[ch][k] = mean * scales[k];
            total.p2[ch][k] = var * scales[k] * scales[k];
        }
    }
    for (k, x) in total.x.iter_mut().enumerate() {
        *x *= scales[k] / n;
    }
    Ok((total, nseg))
}

pub fn welch_pair(pair: &TimeSeriesPair, cfg: &WelchConfig) -> Result<WelchSpectra> {
    let fs = pair.sample_rate;
    let (acc, segments) = accumulate(pair.signal(), Some(pair.idler()), fs, cfg)?;
    let Acc { p: [ps, pi], p2: [vs, vi], x } = acc;
    Ok(WelchSpectra {
        grid: cfg.grid(fs)?,
        sample_rate: fs,
        segments,
        psd_signal: ps,
        psd_idler: pi,
        csd: x,
        var_signal: vs,
        var_idler: vi,
    })
}

/// One-sided PSD (record units squared per Hz) and the variance of each
/// averaged bin.
pub fn welch_psd_with_variance(x: &[f64], fs: f64, cfg: &WelchConfig) -> Result<(SpectrumSeries, Vec<f64>)> {
    let (acc, _) = accumulate(x, None, fs, cfg)?;
    let Acc { p: [p, _], p2: [v, _], .. } = acc;
    Ok((
        SpectrumSeries::real(cfg.grid(fs)?, p, Normalization::Absolute, SpectrumKind::Psd)?,
        v,
    ))
}

pub fn welch_psd(x: &[f64], fs: f64, cfg: &WelchConfig) -> Result<SpectrumSeries> {
    welch_psd_with_variance(x, fs, cfg).map(|(s, _)| s)
}

pub fn welch_csd(pair: &TimeSeriesPair, cfg: &WelchConfig) -> Result<SpectrumSeries> {
    welch_pair(pair, cfg)?.cross()
}

/// Rescales an absolute estimator spectrum (or its variance, with
/// `power = 2`) to shot-noise units for records at `fs`.
pub fn psd_to_shot_noise(s: &SpectrumSeries, fs: f64) -> SpectrumSeries {
    let k = 1.0 / shot_noise_psd(fs);
    let mut out = s.clone();
    if s.normalization == Normalization::Absolute {
        out.values = match &s.values {
            crate::spectrum::SpectrumValues::Real(v) => crate::spectrum::SpectrumValues::Real(v.iter().map(|x| x * k).collect()),
            crate::spectrum::SpectrumValues::Complex(v) => crate::spectrum::SpectrumValues::Complex(v.iter().map(|x| x * k).collect()),
        };
        out.normalization = Normalization::ShotNoiseUnits;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn white_noise_level() {
        let fs = 10_000.0;
        let x = white(1 << 18, 1);
        let cfg = WelchConfig::default().with_segment_length(256);
        let (psd, var) = welch_psd_with_variance(&x, fs, &cfg).unwrap();
        let v = psd.re();
        let inner = &v[..v.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        let se = (var[..var.len() - 1].iter().sum::<f64>()).sqrt() / inner.len() as f64;
        assert!((mean - 2.0 / fs).abs() < 3.0 * se.max(1e-3 * 2.0 / fs), "{mean}");
    }

    #[test]
    fn rect_window_parseval() {
        let fs = 1.0;
        let x = white(4096, 2);
        let cfg = WelchConfig {
            segment_length: 2048,
            overlap: 0.0,
            window: Window::Rect,
            detrend: false,
        };
        let psd = welch_psd(&x, fs, &cfg).unwrap();
        let df = 1.0 / 2048.0;
        let integrated: f64 = psd.re().iter().sum::<f64>() * df;
        // DC bin is excluded; its share is about 1/L of the variance
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((integrated / var - 1.0).abs() < 0.01);
    }

    #[test]
    fn identical_channels_are_coherent() {
        let x = white(1 << 14, 3);
        let pair = TimeSeriesPair::new(x.clone(), x, 1000.0, "t").unwrap();
        let w = welch_pair(&pair, &WelchConfig::default().with_segment_length(512)).unwrap();
        for c in w.coherence() {
            assert!((c - 1.0).abs() < 1e-12);
        }
        for (c, p) in w.csd.iter().zip(&w.psd_signal) {
            assert!((c.re - p).abs() <= 1e-12 * p && c.im.abs() <= 1e-12 * p);
        }
    }

    #[test]
    fn cauchy_schwarz_holds() {
        let a = white(1 << 14, 4);
        let b: Vec<f64> = white(1 << 14, 5).iter().zip(&a).map(|(u, v)| u + 0.3 * v).collect();
        let pair = TimeSeriesPair::new(a, b, 1000.0, "t").unwrap();
        let w = welch_pair(&pair, &WelchConfig::default().with_segment_length(256)).unwrap();
        for c in w.coherence() {
            assert!(c <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let fs = 1024.0;
        let x: Vec<f64> = (0..8192).map(|i| (2.0 * PI * 100.0 * i as f64 / fs).sin()).collect();
        let psd = welch_psd(&x, fs, &WelchConfig::default().with_segment_length(1024)).unwrap();
        let v = psd.re();
        let k = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert!((psd.grid.hz()[k] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn config_errors() {
        assert!(WelchConfig::default().with_segment_length(100).validate().is_err());
        assert!(WelchConfig::default().with_segment_length(32).validate().is_err());
        let c = WelchConfig {
            overlap: 1.0,
            ..WelchConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(matches!(
            welch_psd(&[0.0; 100], 1.0, &WelchConfig::default().with_segment_length(64)),
            Err(Error::TooShort { len: 100, needed: 128 })
        ));
        assert_eq!(WelchConfig::for_sample_rate(256_000.0).segment_length, 4096);
    }

    #[test]
    fn worker_count_does_not_change_estimate() {
        let a = white(1 << 16, 6);
        let b = white(1 << 16, 7);
        let pair = TimeSeriesPair::new(a, b, 1000.0, "t").unwrap();
        let cfg = WelchConfig::default().with_segment_length(256);
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| welch_pair(&pair, &cfg).unwrap())
        };
        let (x, y) = (run(1), run(4));
        assert_eq!(x.psd_signal, y.psd_signal);
        assert_eq!(x.csd, y.csd);
    }
}
