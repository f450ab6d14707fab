//! Seeded synthesis of signal/idler photocurrent records by frequency-domain
//! coloring, plus CSV import and export.
//!
//! Records are normalized so that a vacuum-limited channel has unit
//! variance. With white vacuum over `[0, fs/2]` the one-sided shot-noise
//! PSD is therefore [`shot_noise_psd`] `= 2/fs`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::io::write_atomic;
use crate::model::{backaction_at, bath_coupling_at, Model};
use crate::params::{DetectionConfig, EprParams, SpinParams};

/// Fraction of the circulant period kept as output.
pub const GUARD_KEEP: f64 = 0.9;

const BLOCK_BINS: usize = 8192;

/// One-sided PSD of a unit-variance white record, the shot-noise reference.
pub fn shot_noise_psd(sample_rate: f64) -> f64 {
    2.0 / sample_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Hz.
    pub sample_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub spin: SpinParams,
    pub epr: EprParams,
    pub det: DetectionConfig,
    /// Signal homodyne angles in radians. Empty means `det.theta_s()` only.
    pub theta_s_list: Vec<f64>,
}

impl SynthesisConfig {
    pub fn new(sample_rate: f64, duration: f64, seed: u64, spin: SpinParams, epr: EprParams, det: DetectionConfig) -> Self {
        Self {
            sample_rate,
            duration,
            seed,
            spin,
            epr,
            det,
            theta_s_list: Vec::new(),
        }
    }

    pub fn with_angles_deg(mut self, angles: &[f64]) -> Self {
        self.theta_s_list = angles.iter().map(|a| a.to_radians()).collect();
        self
    }

    pub fn samples(&self) -> Result<usize> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(invalid("sample_rate", format!("must be positive, got {}", self.sample_rate)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        let x = self.sample_rate * self.duration;
        let n = x.round();
        if (x - n).abs() > 1e-6 * n.max(1.0) {
            return Err(invalid(
                "duration",
                format!("sample_rate * duration = {x} is not an integer sample count"),
            ));
        }
        if n < 16.0 {
            return Err(invalid("duration", format!("{n} samples is too short")));
        }
        Ok(n as usize)
    }

    pub fn angles(&self) -> Vec<f64> {
        if self.theta_s_list.is_empty() {
            vec![self.det.theta_s()]
        } else {
            self.theta_s_list.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.samples()?;
        Model::new(self.spin, self.epr, self.det)?;
        if let Some(a) = self.theta_s_list.iter().find(|a| !a.is_finite()) {
            return Err(invalid("theta_s_list", format!("non-finite angle {a}")));
        }
        Ok(())
    }

    /// `sha256:<hex>` of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        crate::io::json_digest(self)
    }
}

/// Simultaneous signal and idler records.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPair {
    signal: Arc<[f64]>,
    idler: Arc<[f64]>,
    pub sample_rate: f64,
    pub provenance: String,
}

impl TimeSeriesPair {
    pub fn new(signal: impl Into<Arc<[f64]>>, idler: impl Into<Arc<[f64]>>, sample_rate: f64, provenance: impl Into<String>) -> Result<Self> {
        let (signal, idler) = (signal.into(), idler.into());
        if signal.len() != idler.len() {
            return Err(Error::GridMismatch(format!(
                "signal has {} samples, idler {}",
                signal.len(),
                idler.len()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(invalid("sample_rate", format!("must be positive, got {sample_rate}")));
        }
        for (name, x) in [("signal", &signal), ("idler", &idler)] {
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Degenerate(format!("{name} sample {i} is not finite")));
            }
        }
        Ok(Self {
            signal,
            idler,
            sample_rate,
            provenance: provenance.into(),
        })
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn idler(&self) -> &[f64] {
        &self.idler
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    /// Samples `[start, end)` of both channels.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        Self::new(
            &self.signal[start..end],
            &self.idler[start..end],
            self.sample_rate,
            format!("{}[{start}..{end}]", self.provenance),
        )
    }

    /// Same idler with a different signal record.
    pub fn with_signal(&self, signal: impl Into<Arc<[f64]>>) -> Result<Self> {
        let signal = signal.into();
        if signal.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "signal has {} samples, idler {}",
                signal.len(),
                self.len()
            )));
        }
        Ok(Self {
            signal,
            idler: self.idler.clone(),
            sample_rate: self.sample_rate,
            provenance: self.provenance.clone(),
        })
    }
}

/// Smallest even 5-smooth integer `>= n`.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        if m % 2 == 0 {
            let mut k = m;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            if k == 1 {
                return m;
            }
        }
        m += 1;
    }
}

#[inline]
fn cnormal(rng: &mut ChaCha8Rng) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Per-bin linear map from independent unit baths to the output channels.
struct Transfer {
    e_pos: f64,
    e_neg: f64,
    sqrt_es: f64,
    sqrt_ls: f64,
    sqrt_ein: f64,
    sqrt_lin: f64,
    sqrt_eout: f64,
    sqrt_lout: f64,
    sqrt_th: f64,
    sqrt_bb: f64,
    cos_d: f64,
    sin2d_half: f64,
    trig: Vec<(f64, f64)>,
}

impl Transfer {
    /// Writes one frequency bin of every channel: `out[0]` is the idler,
    /// `out[1 + j]` the signal at angle `j`.
    #[inline]
    fn bin(&self, rng: &mut ChaCha8Rng, spin: &SpinParams, omega: f64, out: &mut [Complex64]) -> Option<()> {
        let ux = cnormal(rng);
        let vx = cnormal(rng);
        let up = cnormal(rng);
        let vp = cnormal(rng);
        let v0 = cnormal(rng);
        let v90 = cnormal(rng);
        let vout = cnormal(rng);
        let fa = cnormal(rng);
        let fbb = cnormal(rng);

        let (a, b) = (self.e_pos, self.e_neg);
        let x_s = (ux * a + vx * b) * std::f64::consts::FRAC_1_SQRT_2;
        let x_i = (ux * a - vx * b) * std::f64::consts::FRAC_1_SQRT_2;
        let p_s = (up * a + vp * b) * std::f64::consts::FRAC_1_SQRT_2;
        let p_i = -(up * a - vp * b) * std::f64::consts::FRAC_1_SQRT_2;

        let k = backaction_at(spin.larmor, spin.readout, spin.decay, omega)?;
        let kth = bath_coupling_at(spin.larmor, spin.readout, spin.decay, omega)?;
        let kbb = bath_coupling_at(spin.larmor, spin.bb_readout, spin.bb_decay, omega)?;
        let g = Complex64::new(1.0, 0.0) - k * self.sin2d_half;

        let p = p_i * self.sqrt_ein + v0 * self.sqrt_lin;
        let x = x_i * self.sqrt_ein + v90 * self.sqrt_lin;
        let inner = g * p
            + k * (self.cos_d * self.cos_d) * x
            + (kth * fa * self.sqrt_th + kbb * fbb * self.sqrt_bb) * self.cos_d;
        out[0] = inner * self.sqrt_eout + vout * self.sqrt_lout;

        for (o, &(s, c)) in out[1..].iter_mut().zip(&self.trig) {
            let v = cnormal(rng);
            *o = (x_s * s + p_s * c) * self.sqrt_es + v * self.sqrt_ls;
        }
        Some(())
    }
}

/// Synthesizes one record pair per signal angle. All pairs share the same
/// idler record.
///
/// Each frequency bin draws independent circular Gaussian amplitudes for the
/// two EPR vacuum inputs (x and p), the idler input-loss vacuum pair, the
/// output-loss vacuum, the narrowband and broadband spin baths, and one
/// signal-loss vacuum per angle. Bins are generated in fixed-size blocks,
/// each from its own ChaCha stream, so the output does not depend on the
/// number of worker threads.
pub fn synthesize(cfg: &SynthesisConfig) -> Result<Vec<TimeSeriesPair>> {
    cfg.validate()?;
    let n = cfg.samples()?;
    let m = next_fast_len((n as f64 / GUARD_KEEP).ceil() as usize);
    let half = m / 2;
    let angles = cfg.angles();
    let channels = angles.len() + 1;
    let (spin, epr, d) = (cfg.spin, cfg.epr, cfg.det.delta_theta_i());

    let tr = Transfer {
        e_pos: epr.r.exp(),
        e_neg: (-epr.r).exp(),
        sqrt_es: epr.eta_s.sqrt(),
        sqrt_ls: (1.0 - epr.eta_s).sqrt(),
        sqrt_ein: epr.eta_i_in.sqrt(),
        sqrt_lin: (1.0 - epr.eta_i_in).sqrt(),
        sqrt_eout: epr.eta_i_out.sqrt(),
        sqrt_lout: (1.0 - epr.eta_i_out).sqrt(),
        sqrt_th: (2.0 * spin.n_th + 1.0).sqrt(),
        sqrt_bb: (2.0 * spin.n_bb + 1.0).sqrt(),
        cos_d: d.cos(),
        sin2d_half: (2.0 * d).sin() / 2.0,
        trig: angles.iter().map(|t| t.sin_cos()).collect(),
    };
    let scale = 1.0 / (m as f64).sqrt();
    let dw = 2.0 * PI * cfg.sample_rate / m as f64;

    let mut spectra: Vec<Vec<Complex64>> = (0..channels).map(|_| vec![Complex64::default(); half + 1]).collect();
    {
        let mut blocks: Vec<Vec<&mut [Complex64]>> = Vec::new();
        let mut iters: Vec<_> = spectra.iter_mut().map(|s| s.chunks_mut(BLOCK_BINS)).collect();
        'outer: loop {
            let mut row = Vec::with_capacity(channels);
            for it in iters.iter_mut() {
                match it.next() {
                    Some(c) => row.push(c),
                    None => break 'outer,
                }
            }
            blocks.push(row);
        }
        blocks
            .into_par_iter()
            .enumerate()
            .try_for_each(|(b, mut chans)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(b as u64);
                let mut tmp = vec![Complex64::default(); channels];
                let len = chans[0].len();
                for j in 0..len {
                    let k = b * BLOCK_BINS + j;
                    if k == 0 || k == half {
                        continue;
                    }
                    let omega = dw * k as f64;
                    tr.bin(&mut rng, &spin, omega, &mut tmp)
                        .ok_or(Error::Singular { bin: k, omega })?;
                    for (c, v) in chans.iter_mut().zip(&tmp) {
                        c[j] = v * scale;
                    }
                }
                Ok::<_, Error>(())
            })?;
    }

    let plan = RealFftPlanner::<f64>::new().plan_fft_inverse(m);
    let mut records: Vec<Arc<[f64]>> = Vec::with_capacity(channels);
    for mut spec in spectra.into_iter() {
        let mut out = plan.make_output_vec();
        plan.process(&mut spec, &mut out)
            .map_err(|e| Error::Degenerate(format!("inverse transform failed: {e}")))?;
        drop(spec);
        out.truncate(n);
        records.push(Arc::from(out));
    }

    let prov = cfg.digest();
    let idler = records[0].clone();
    records[1..]
        .iter()
        .zip(&angles)
        .map(|(s, t)| {
            TimeSeriesPair::new(
                s.clone(),
                idler.clone(),
                cfg.sample_rate,
                format!("{prov} theta_s={:.6}", t.to_degrees()),
            )
        })
        .collect()
}

/// Writes `# fs=<Hz> seed=<u64> theta_s=<deg>`, a `signal,idler` header and
/// one row per sample with 17 significant digits.
pub fn export_csv(pair: &TimeSeriesPair, path: &Path, seed: u64, theta_s_deg: f64) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# fs={} seed={} theta_s={}", pair.sample_rate, seed, theta_s_deg)?;
        writeln!(w, "signal,idler")?;
        for (s, i) in pair.signal().iter().zip(pair.idler()) {
            writeln!(w, "{s:.16e},{i:.16e}")?;
        }
        Ok(())
    })
}

/// Header fields recovered by [`ingest_csv`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsvHeader {
    pub sample_rate: Option<f64>,
    pub seed: Option<u64>,
    pub theta_s_deg: Option<f64>,
}

fn parse_header(line: &str, h: &mut CsvHeader) {
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            match k {
                "fs" => h.sample_rate = v.parse().ok(),
                "seed" => h.seed = v.parse().ok(),
                "theta_s" => h.theta_s_deg = v.parse().ok(),
                _ => {}
            }
        }
    }
}

/// Reads a two-column (`signal,idler`) or three-column (`time,signal,idler`)
/// record. Lines starting with `#` are comments; a `# fs=` comment supplies
/// the sample rate when `sample_rate` is `None`. One non-numeric header row
/// is allowed before the data.
pub fn ingest_csv(path: &Path, sample_rate: Option<f64>) -> Result<(TimeSeriesPair, CsvHeader)> {
    let file = std::fs::File::open(path)?;
    let mut header = CsvHeader::default();
    let (mut sig, mut idl) = (Vec::new(), Vec::new());
    let mut columns = None;
    let mut seen_data = false;
    let mut seen_names = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            parse_header(t, &mut header);
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if !seen_data && !seen_names && fields.iter().all(|f| f.parse::<f64>().is_err()) {
            seen_names = true;
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: lineno, reason };
        let ncol = *columns.get_or_insert(fields.len());
        if ncol != 2 && ncol != 3 {
            return Err(parse_err(format!("expected 2 or 3 columns, found {ncol}")));
        }
        if fields.len() != ncol {
            return Err(parse_err(format!("expected {ncol} columns, found {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|e| parse_err(format!("`{f}`: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{f}`")));
            }
        }
        let off = ncol - 2;
        sig.push(vals[off]);
        idl.push(vals[off + 1]);
        seen_data = true;
    }
    let fs = sample_rate
        .or(header.sample_rate)
        .ok_or_else(|| invalid("sample_rate", "not given and no `# fs=` header in file"))?;
    header.sample_rate = Some(fs);
    let pair = TimeSeriesPair::new(sig, idl, fs, format!("csv:{}", path.display()))?;
    Ok((pair, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::presets;

    fn vacuum_cfg(seconds: f64) -> SynthesisConfig {
        SynthesisConfig::new(
            65_536.0,
            seconds,
            7,
            SpinParams::decoupled(),
            EprParams::lossless(0.0),
            DetectionConfig::new(0.0, 0.0),
        )
    }

    #[test]
    fn fast_len() {
        assert_eq!(next_fast_len(1), 2);
        assert_eq!(next_fast_len(7), 8);
        assert_eq!(next_fast_len(11), 12);
        assert_eq!(next_fast_len(4097), 4320);
        for n in [100, 1001, 123_457] {
            let m = next_fast_len(n);
            assert!(m >= n && m % 2 == 0);
        }
    }

    #[test]
    fn sample_count_validation() {
        let mut c = vacuum_cfg(1.0);
        assert_eq!(c.samples().unwrap(), 65_536);
        c.duration = 1.0 / 3.0;
        assert!(c.samples().is_err());
        c.duration = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn vacuum_is_unit_variance() {
        let pairs = synthesize(&vacuum_cfg(4.0)).unwrap();
        let p = &pairs[0];
        for x in [p.signal(), p.idler()] {
            let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            // 2^18 samples: relative sd of the variance is sqrt(2/N) = 0.28%
            assert!((var - 1.0).abs() < 0.015, "variance {var}");
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (spin, epr) = presets::positive_mass_10k();
        let cfg = SynthesisConfig::new(64_000.0, 0.5, 3, spin, epr, DetectionConfig::new(0.0, 0.0))
            .with_angles_deg(&[0.0, 90.0]);
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 4;
        assert_ne!(synthesize(&other).unwrap()[0].signal(), a[0].signal());
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].idler(), a[1].idler());
    }

    #[test]
    fn independent_of_worker_count() {
        let (spin, epr) = presets::negative_mass_10k();
        let cfg = SynthesisConfig::new(64_000.0, 2.0, 11, spin, epr, DetectionConfig::from_degrees(30.0, -42.0));
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| synthesize(&cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn singular_bin_is_reported() {
        let spin = SpinParams::new(2.0 * PI * 1000.0, 2.0 * PI * 100.0, 0.0, 0.0, 0.0, 0.0);
        let cfg = SynthesisConfig::new(8_000.0, 0.9, 1, spin, EprParams::lossless(0.5), DetectionConfig::new(0.0, 0.0));
        // period 8000 samples -> 1 Hz bins, 1000 Hz lands exactly on a bin
        assert_eq!(next_fast_len(8000), 8000);
        assert!(matches!(synthesize(&cfg), Err(Error::Singular { .. })));
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let (spin, epr) = presets::positive_mass_10k();
        let cfg = SynthesisConfig::new(16_000.0, 0.25, 9, spin, epr, DetectionConfig::new(0.0, 0.0));
        let pair = synthesize(&cfg).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        export_csv(&pair, &path, 9, 0.0).unwrap();
        let (back, h) = ingest_csv(&path, None).unwrap();
        assert_eq!(back.signal(), pair.signal());
        assert_eq!(back.idler(), pair.idler());
        assert_eq!(h.sample_rate, Some(16_000.0));
        assert_eq!(h.seed, Some(9));
        assert_eq!(h.theta_s_deg, Some(0.0));
    }

    #[test]
    fn csv_ingest_variants_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "1.0,2.0\n3.0,4.0\n").unwrap();
        let (pair, _) = ingest_csv(&p, Some(10.0)).unwrap();
        assert_eq!(pair.len(), 2);
        assert_eq!(pair.idler(), &[2.0, 4.0]);

        std::fs::write(&p, "t,s,i\n0,1,2\n0.1,3,4\n").unwrap();
        let (pair, _) = ingest_csv(&p, Some(10.0)).unwrap();
        assert_eq!(pair.signal(), &[1.0, 3.0]);

        std::fs::write(&p, "1.0,2.0\nNaN,4.0\n").unwrap();
        assert!(matches!(ingest_csv(&p, Some(10.0)), Err(Error::Parse { line: 2, .. })));

        std::fs::write(&p, "1.0,2.0\n1.0\n").unwrap();
        assert!(matches!(ingest_csv(&p, Some(10.0)), Err(Error::Parse { line: 2, .. })));

        std::fs::write(&p, "1.0,2.0\n").unwrap();
        assert!(ingest_csv(&p, None).is_err());
    }

    #[test]
    fn pair_validation() {
        assert!(TimeSeriesPair::new(vec![1.0], vec![1.0, 2.0], 1.0, "x").is_err());
        assert!(TimeSeriesPair::new(vec![f64::NAN], vec![1.0], 1.0, "x").is_err());
    }
}
