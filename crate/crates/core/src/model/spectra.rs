//! Idler, signal and cross spectra, the four idler noise contributions and
//! the optimally conditioned signal spectrum.

use num_complex::Complex64;

use super::response::{backaction_at, bath_coupling_at, vr_effective_params, EffectiveOscillator};
use crate::error::{Error, Result};
use crate::params::{DetectionConfig, EprParams, SpinParams};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries, SHOT_NOISE};

/// Every model quantity at one Fourier frequency.
#[derive(Debug, Clone, Copy)]
pub struct BinTerms {
    pub k_a: Complex64,
    pub k_eff: Complex64,
    pub g_vr: Complex64,
    pub k_th: Complex64,
    pub k_bb: Complex64,
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub s_th: f64,
    pub s_bb: f64,
}

impl BinTerms {
    pub fn extra_noise(&self) -> f64 {
        self.lambda_in + self.lambda_out + self.s_th + self.s_bb
    }
}

/// Precomputed, grid-independent part of the model.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub spin: SpinParams,
    pub epr: EprParams,
    pub det: DetectionConfig,
    pub eff: EffectiveOscillator,
    cosh2r: f64,
    sinh2r: f64,
}

impl Model {
    pub fn new(spin: SpinParams, epr: EprParams, det: DetectionConfig) -> Result<Self> {
        spin.validate()?;
        epr.validate()?;
        let eff = vr_effective_params(&spin, &det)?;
        Ok(Self {
            spin,
            epr,
            det,
            eff,
            cosh2r: (2.0 * epr.r).cosh(),
            sinh2r: (2.0 * epr.r).sinh(),
        })
    }

    pub fn cosh2r(&self) -> f64 {
        self.cosh2r
    }

    pub fn sinh2r(&self) -> f64 {
        self.sinh2r
    }

    pub fn terms(&self, omega: f64) -> Option<BinTerms> {
        let s = &self.spin;
        let d = self.det.delta_theta_i();
        let k_a = backaction_at(s.larmor, s.readout, s.decay, omega)?;
        let k_eff = backaction_at(self.eff.larmor, self.eff.readout, s.decay, omega)?;
        let g_vr = Complex64::new(1.0, 0.0) - k_a * ((2.0 * d).sin() / 2.0);
        let k_th = bath_coupling_at(s.larmor, s.readout, s.decay, omega)?;
        let k_bb = bath_coupling_at(s.larmor, s.bb_readout, s.bb_decay, omega)?;
        let e = &self.epr;
        let cd = d.cos();
        let lambda_in = (1.0 - e.eta_i_in) / 2.0 * (1.0 + k_eff.norm_sqr());
        let lambda_out = (1.0 - e.eta_i_out) / (2.0 * e.eta_i_out * g_vr.norm_sqr());
        let s_th = (k_th * cd / g_vr).norm_sqr() * (0.5 + s.n_th);
        let s_bb = (k_bb * cd / g_vr).norm_sqr() * (0.5 + s.n_bb);
        Some(BinTerms {
            k_a,
            k_eff,
            g_vr,
            k_th,
            k_bb,
            lambda_in,
            lambda_out,
            s_th,
            s_bb,
        })
    }

    pub fn terms_checked(&self, bin: usize, omega: f64) -> Result<BinTerms> {
        self.terms(omega).ok_or(Error::Singular { bin, omega })
    }

    /// `S_Q_s|i / S_SN` at signal angle `theta_s`.
    pub fn conditional(&self, t: &BinTerms, theta_s: f64) -> f64 {
        let e = &self.epr;
        let (c, s) = (self.cosh2r, self.sinh2r);
        let corr = (Complex64::new(theta_s.cos(), 0.0) - t.k_eff * theta_s.sin()).norm_sqr();
        let denom = 1.0 + t.k_eff.norm_sqr() + 2.0 * t.extra_noise() / (e.eta_i_in * c);
        1.0 - e.eta_s + e.eta_s / c * (c * c - s * s * corr / denom)
    }

    /// Conditional spectrum at the per-bin optimal signal angle, through the
    /// closed-form maximum of `|cos t - sin t K|^2` over `t`.
    pub fn conditional_optimal(&self, t: &BinTerms) -> f64 {
        let e = &self.epr;
        let (c, s) = (self.cosh2r, self.sinh2r);
        let m = 1.0 + t.k_eff.norm_sqr();
        let im = t.k_eff.im;
        let corr = m / 2.0 * (1.0 + (1.0 - 4.0 * im * im / (m * m)).max(0.0).sqrt());
        let denom = m + 2.0 * t.extra_noise() / (e.eta_i_in * c);
        1.0 - e.eta_s + e.eta_s / c * (c * c - s * s * corr / denom)
    }

    /// Symmetrized idler PSD `S_Q_i`.
    pub fn idler(&self, t: &BinTerms) -> f64 {
        let e = &self.epr;
        e.eta_i_out
            * t.g_vr.norm_sqr()
            * (self.cosh2r * e.eta_i_in * (1.0 + t.k_eff.norm_sqr()) / 2.0
                + t.lambda_in
                + t.s_th
                + t.s_bb
                + t.lambda_out)
    }

    /// Symmetrized cross spectrum `S_q_s,Q_i`.
    pub fn cross(&self, t: &BinTerms, theta_s: f64) -> Complex64 {
        let e = &self.epr;
        let a = Complex64::new(theta_s.cos(), 0.0) - t.k_eff.conj() * theta_s.sin();
        -(e.eta_s * e.eta_i_out * e.eta_i_in).sqrt() * t.g_vr.conj() * (self.sinh2r / 2.0) * a
    }

    /// Symmetrized signal PSD `S_q_s` (independent of frequency and angle).
    pub fn signal(&self) -> f64 {
        self.epr.eta_s * self.cosh2r / 2.0 + (1.0 - self.epr.eta_s) / 2.0
    }

    pub fn wiener_gain(&self, t: &BinTerms, theta_s: f64) -> Option<Complex64> {
        let sq = self.idler(t);
        if sq == 0.0 {
            return None;
        }
        Some(-self.cross(t, theta_s) / sq)
    }

    fn eval<T>(
        &self,
        grid: &FrequencyGrid,
        f: impl Fn(&BinTerms) -> Result<T, usize>,
    ) -> Result<Vec<T>> {
        grid.iter()
            .enumerate()
            .map(|(bin, w)| {
                let t = self.terms_checked(bin, w)?;
                f(&t).map_err(|_| Error::ZeroIdler { bin })
            })
            .collect()
    }
}

fn real(grid: &FrequencyGrid, v: Vec<f64>, n: Normalization) -> Result<SpectrumSeries> {
    SpectrumSeries::real(grid.clone(), v, n, SpectrumKind::Psd)
}

/// The four idler noise contributions, in the order
/// (lambda_in, lambda_out, thermal, broadband).
pub fn noise_contributions(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<[SpectrumSeries; 4]> {
    let m = Model::new(*spin, *epr, *det)?;
    let terms = m.eval(grid, |t| Ok(*t))?;
    let pick = |f: fn(&BinTerms) -> f64| {
        real(grid, terms.iter().map(f).collect(), Normalization::Symmetrized)
    };
    Ok([
        pick(|t| t.lambda_in)?,
        pick(|t| t.lambda_out)?,
        pick(|t| t.s_th)?,
        pick(|t| t.s_bb)?,
    ])
}

/// Optimally conditioned signal spectrum in shot-noise units at the
/// detection config's `theta_s`.
pub fn conditional_spectrum(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<SpectrumSeries> {
    let m = Model::new(*spin, *epr, *det)?;
    let theta = det.theta_s();
    let v = m.eval(grid, |t| Ok(m.conditional(t, theta)))?;
    real(grid, v, Normalization::ShotNoiseUnits)
}

/// Conditional spectrum with `theta_s` chosen optimally in every bin.
pub fn optimal_conditional_spectrum(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<SpectrumSeries> {
    let m = Model::new(*spin, *epr, *det)?;
    let v = m.eval(grid, |t| Ok(m.conditional_optimal(t)))?;
    real(grid, v, Normalization::ShotNoiseUnits)
}

pub fn idler_spectrum(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<SpectrumSeries> {
    let m = Model::new(*spin, *epr, *det)?;
    let v = m.eval(grid, |t| Ok(m.idler(t)))?;
    real(grid, v, Normalization::Symmetrized)
}

pub fn cross_spectrum(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<SpectrumSeries> {
    let m = Model::new(*spin, *epr, *det)?;
    let theta = det.theta_s();
    let v = m.eval(grid, |t| Ok(m.cross(t, theta)))?;
    SpectrumSeries::complex(grid.clone(), v, Normalization::Symmetrized, SpectrumKind::Csd)
}

/// Flat signal PSD on `grid` (symmetrized units).
pub fn signal_spectrum(epr: &EprParams, grid: &FrequencyGrid) -> Result<SpectrumSeries> {
    epr.validate()?;
    let c = (2.0 * epr.r).cosh();
    let v = epr.eta_s * c / 2.0 + (1.0 - epr.eta_s) / 2.0;
    real(grid, vec![v; grid.len()], Normalization::Symmetrized)
}

pub fn analytical_wiener_gain(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
) -> Result<SpectrumSeries> {
    let m = Model::new(*spin, *epr, *det)?;
    let theta = det.theta_s();
    let v = m.eval(grid, |t| m.wiener_gain(t, theta).ok_or(0usize))?;
    SpectrumSeries::complex(grid.clone(), v, Normalization::ShotNoiseUnits, SpectrumKind::Gain)
}

/// Converts a symmetrized spectrum to shot-noise units.
pub fn to_shot_noise_units(s: &SpectrumSeries) -> SpectrumSeries {
    let mut out = s.clone();
    if s.normalization == Normalization::Symmetrized {
        out.values = match &s.values {
            crate::spectrum::SpectrumValues::Real(v) => {
                crate::spectrum::SpectrumValues::Real(v.iter().map(|x| x / SHOT_NOISE).collect())
            }
            crate::spectrum::SpectrumValues::Complex(v) => {
                crate::spectrum::SpectrumValues::Complex(v.iter().map(|x| x / SHOT_NOISE).collect())
            }
        };
        out.normalization = Normalization::ShotNoiseUnits;
    }
    out
}
