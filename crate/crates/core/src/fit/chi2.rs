use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::simplex::{minimize_bounded, SimplexOptions};
use crate::error::{invalid, Error, Result};
use crate::model::Model;
use crate::params::{DetectionConfig, EprParams, SpinParams};
use crate::spectrum::{hz_to_rad, Normalization, SpectrumSeries, SHOT_NOISE};

/// Relative standard deviation assumed for observations without variance.
pub const ASSUMED_RELATIVE_SD: f64 = 0.01;

/// Half-width of the moving average applied to Welch scatter variances.
pub const VARIANCE_SMOOTHING_BINS: usize = 8;

/// Moving average over `[i - half, i + half]`, truncated at the edges.
pub fn smooth_variance(v: &[f64], half: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(v.len() + 1);
    prefix.push(0.0);
    for x in v {
        prefix.push(prefix.last().unwrap() + x);
    }
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(v.len() - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Larmor,
    Readout,
    Decay,
    BbReadout,
    BbDecay,
    NTh,
    NBb,
    R,
    EtaS,
    EtaIIn,
    EtaIOut,
    ThetaS,
    DeltaThetaI,
}

impl ParamName {
    pub const ALL: [ParamName; 13] = [
        Self::Larmor,
        Self::Readout,
        Self::Decay,
        Self::BbReadout,
        Self::BbDecay,
        Self::NTh,
        Self::NBb,
        Self::R,
        Self::EtaS,
        Self::EtaIIn,
        Self::EtaIOut,
        Self::ThetaS,
        Self::DeltaThetaI,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Larmor => "larmor",
            Self::Readout => "readout",
            Self::Decay => "decay",
            Self::BbReadout => "bb_readout",
            Self::BbDecay => "bb_decay",
            Self::NTh => "n_th",
            Self::NBb => "n_bb",
            Self::R => "r",
            Self::EtaS => "eta_s",
            Self::EtaIIn => "eta_i_in",
            Self::EtaIOut => "eta_i_out",
            Self::ThetaS => "theta_s",
            Self::DeltaThetaI => "delta_theta_i",
        }
    }

    /// Rates and frequencies, stored in rad/s.
    pub fn is_angular_rate(self) -> bool {
        matches!(self, Self::Larmor | Self::Readout | Self::Decay | Self::BbReadout | Self::BbDecay)
    }

    pub fn is_angle(self) -> bool {
        matches!(self, Self::ThetaS | Self::DeltaThetaI)
    }
}

/// The complete parameter set of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub spin: SpinParams,
    pub epr: EprParams,
    pub det: DetectionConfig,
}

impl ParamSet {
    pub fn get(&self, p: ParamName) -> f64 {
        use ParamName::*;
        match p {
            Larmor => self.spin.larmor,
            Readout => self.spin.readout,
            Decay => self.spin.decay,
            BbReadout => self.spin.bb_readout,
            BbDecay => self.spin.bb_decay,
            NTh => self.spin.n_th,
            NBb => self.spin.n_bb,
            R => self.epr.r,
            EtaS => self.epr.eta_s,
            EtaIIn => self.epr.eta_i_in,
            EtaIOut => self.epr.eta_i_out,
            ThetaS => self.det.theta_s(),
            DeltaThetaI => self.det.delta_theta_i(),
        }
    }

    pub fn set(&mut self, p: ParamName, v: f64) {
        use ParamName::*;
        match p {
            Larmor => self.spin.larmor = v,
            Readout => self.spin.readout = v,
            Decay => self.spin.decay = v,
            BbReadout => self.spin.bb_readout = v,
            BbDecay => self.spin.bb_decay = v,
            NTh => self.spin.n_th = v,
            NBb => self.spin.n_bb = v,
            R => self.epr.r = v,
            EtaS => self.epr.eta_s = v,
            EtaIIn => self.epr.eta_i_in = v,
            EtaIOut => self.epr.eta_i_out = v,
            ThetaS => self.det = DetectionConfig::new(v, self.det.delta_theta_i()),
            DeltaThetaI => self.det = DetectionConfig::new(self.det.theta_s(), v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: ParamName,
    pub lower: f64,
    pub upper: f64,
    /// Start value; defaults to the base parameter set.
    #[serde(default)]
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Observable {
    /// Idler PSD.
    Idler,
    /// Signal PSD.
    Signal,
    /// Wiener-conditioned signal PSD at homodyne angle `theta_s` (rad).
    Conditional { theta_s: f64 },
}

/// An observed spectrum in shot-noise units with the variance of each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observable: Observable,
    pub spectrum: SpectrumSeries,
    #[serde(default)]
    pub variance: Option<Vec<f64>>,
}

impl Observation {
    pub fn new(observable: Observable, spectrum: SpectrumSeries, variance: Option<Vec<f64>>) -> Result<Self> {
        if spectrum.normalization != Normalization::ShotNoiseUnits {
            return Err(invalid("spectrum", "observations must be in shot-noise units"));
        }
        if let Some(v) = &variance {
            if v.len() != spectrum.len() {
                return Err(Error::GridMismatch(format!("{} variances for {} bins", v.len(), spectrum.len())));
            }
        }
        Ok(Self {
            observable,
            spectrum,
            variance,
        })
    }

    /// Builds an observation from an absolute Welch PSD of shot-noise
    /// normalized records and its segment-scatter variance. The variance is
    /// smoothed over [`VARIANCE_SMOOTHING_BINS`] neighbours on each side so
    /// that bin weights do not track the noise of the bin itself.
    pub fn from_welch(observable: Observable, psd: &SpectrumSeries, variance: &[f64], fs: f64) -> Result<Self> {
        let k = fs / 2.0;
        let var: Vec<f64> = variance.iter().map(|v| v * k * k).collect();
        Self::new(
            observable,
            crate::estimate::psd_to_shot_noise(psd, fs),
            Some(smooth_variance(&var, VARIANCE_SMOOTHING_BINS)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub base: ParamSet,
    pub free: Vec<FreeParam>,
    pub observed: Vec<Observation>,
    /// Fit window in rad/s.
    pub band: (f64, f64),
    /// Keep `n_bb` equal to `n_th` while fitting.
    #[serde(default)]
    pub tie_n_bb: bool,
    #[serde(default)]
    pub options: SimplexOptions,
}

impl FitProblem {
    pub fn new(base: ParamSet, free: Vec<FreeParam>, observed: Vec<Observation>) -> Self {
        Self {
            base,
            free,
            observed,
            band: (hz_to_rad(3e3), hz_to_rad(60e3)),
            tie_n_bb: false,
            options: SimplexOptions::default(),
        }
    }

    pub fn digest(&self) -> String {
        crate::io::json_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: BTreeMap<String, f64>,
    /// One standard deviation from the local curvature of chi2; `None` when
    /// the curvature matrix is not positive definite.
    pub per_param_uncertainty: BTreeMap<String, Option<f64>>,
    pub chi2: f64,
    pub dof: i64,
    pub converged: bool,
    pub evaluations: usize,
    /// Set when some observation had no variance and the relative standard
    /// deviation [`ASSUMED_RELATIVE_SD`] was used.
    pub assumed_relative_sd: Option<f64>,
    pub input_digest: String,
    /// Best-fit parameter set for model fits.
    #[serde(default)]
    pub params: Option<ParamSet>,
}

impl FitResult {
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

struct Prepared {
    omegas: Vec<f64>,
    obs: Vec<f64>,
    weight: Vec<f64>,
    what: Vec<Observable>,
}

fn prepare(p: &FitProblem) -> Result<(Prepared, bool)> {
    let mut out = Prepared {
        omegas: Vec::new(),
        obs: Vec::new(),
        weight: Vec::new(),
        what: Vec::new(),
    };
    let mut assumed = false;
    for o in &p.observed {
        let v = o.spectrum.re();
        for i in o.spectrum.grid.band_indices(p.band.0, p.band.1) {
            let var = match &o.variance {
                Some(var) => var[i],
                None => {
                    assumed = true;
                    (ASSUMED_RELATIVE_SD * v[i]).powi(2)
                }
            };
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::Degenerate(format!("non-positive variance {var} at bin {i}")));
            }
            out.omegas.push(o.spectrum.grid.values()[i]);
            out.obs.push(v[i]);
            out.weight.push(1.0 / var);
            out.what.push(o.observable);
        }
    }
    Ok((out, assumed))
}

fn apply(base: &ParamSet, free: &[FreeParam], x: &[f64], tie: bool) -> ParamSet {
    let mut ps = *base;
    for (f, &v) in free.iter().zip(x) {
        ps.set(f.name, v);
    }
    if tie {
        ps.spin.n_bb = ps.spin.n_th;
    }
    ps
}

fn chi2(data: &Prepared, ps: &ParamSet) -> f64 {
    let Ok(m) = Model::new(ps.spin, ps.epr, ps.det) else {
        return f64::INFINITY;
    };
    let mut sum = 0.0;
    for i in 0..data.obs.len() {
        let Some(t) = m.terms(data.omegas[i]) else {
            return f64::INFINITY;
        };
        let model = match data.what[i] {
            Observable::Idler => m.idler(&t) / SHOT_NOISE,
            Observable::Signal => m.signal() / SHOT_NOISE,
            Observable::Conditional { theta_s } => m.conditional(&t, theta_s),
        };
        let r = data.obs[i] - model;
        sum += r * r * data.weight[i];
    }
    sum
}

/// Standard deviations from `cov = 2 H^-1` with `H` the finite-difference
/// Hessian of `f` at `x`.
pub(crate) fn curvature_uncertainty(f: &dyn Fn(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Vec<Option<f64>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let f0 = f(x);
    let at = |di: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in di {
            y[i] += d;
        }
        f(&y)
    };
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        h[(i, i)] = (at(&[(i, hi)]) - 2.0 * f0 + at(&[(i, -hi)])) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let v = (at(&[(i, hi), (j, hj)]) - at(&[(i, hi), (j, -hj)]) - at(&[(i, -hi), (j, hj)])
                + at(&[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    match h.clone().cholesky() {
        Some(c) => {
            let inv = c.inverse();
            (0..n)
                .map(|i| {
                    let v = 2.0 * inv[(i, i)];
                    (v > 0.0 && v.is_finite()).then(|| v.sqrt())
                })
                .collect()
        }
        None => vec![None; n],
    }
}

/// Minimizes `sum (observed - model)^2 / variance` over the free parameters.
pub fn fit_model(problem: &FitProblem) -> Result<FitResult> {
    let (data, assumed) = prepare(problem)?;
    let bins = data.obs.len() as i64;
    let nfree = problem.free.len() as i64;
    let dof = bins - nfree;
    if dof <= 0 {
        return Err(invalid("band", format!("{bins} bins in band for {nfree} free parameters")));
    }
    let mut seen = std::collections::BTreeSet::new();
    let (mut lo, mut hi, mut x0) = (Vec::new(), Vec::new(), Vec::new());
    for f in &problem.free {
        if !seen.insert(f.name) {
            return Err(invalid("free", format!("`{}` listed twice", f.name.as_str())));
        }
        if !(f.lower.is_finite() && f.upper.is_finite() && f.lower < f.upper) {
            return Err(invalid("free", format!("bounds of `{}` must be finite and increasing", f.name.as_str())));
        }
        let start = f.initial.unwrap_or_else(|| problem.base.get(f.name));
        if !(f.lower..=f.upper).contains(&start) {
            return Err(invalid(
                "free",
                format!("initial `{}` = {start} outside [{}, {}]", f.name.as_str(), f.lower, f.upper),
            ));
        }
        lo.push(f.lower);
        hi.push(f.upper);
        x0.push(start);
    }
    let tie = problem.tie_n_bb;
    let objective = |x: &[f64]| chi2(&data, &apply(&problem.base, &problem.free, x, tie));
    let min = minimize_bounded(&objective, &lo, &hi, &x0, &problem.options);
    let best = apply(&problem.base, &problem.free, &min.x, tie);

    let steps: Vec<f64> = min
        .x
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(x, (l, h))| (1e-4 * x.abs()).max(1e-7 * (h - l)))
        .collect();
    let sig = curvature_uncertainty(&objective, &min.x, &steps);

    let mut estimates = BTreeMap::new();
    let mut unc = BTreeMap::new();
    for ((f, x), s) in problem.free.iter().zip(&min.x).zip(sig) {
        estimates.insert(f.name.as_str().to_string(), *x);
        unc.insert(f.name.as_str().to_string(), s);
    }
    Ok(FitResult {
        estimates,
        per_param_uncertainty: unc,
        chi2: min.value,
        dof,
        converged: min.converged,
        evaluations: min.evals,
        assumed_relative_sd: assumed.then_some(ASSUMED_RELATIVE_SD),
        input_digest: problem.digest(),
        params: Some(best),
    })
}
