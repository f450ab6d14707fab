//! Run configuration. Every physical quantity is in Hz, degrees or seconds;
//! conversion to angular units happens here.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use condsqz_core::estimate::{ConditioningOptions, Window, WelchConfig};
use condsqz_core::fit::{FreeParam, ImprovementScenario, ParamName, SimplexOptions};
use condsqz_core::spectrum::hz_to_rad;
use condsqz_core::{DetectionConfig, EprParams, SpinParams};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub spin: Option<SpinSection>,
    #[serde(default)]
    pub epr: Option<EprSection>,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub welch: WelchSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub cavity: CavitySection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    /// Negative for a negative-mass oscillator.
    pub larmor_hz: f64,
    pub readout_hz: f64,
    pub decay_hz: f64,
    pub bb_readout_hz: f64,
    pub bb_decay_hz: f64,
    pub n_th: f64,
    /// Defaults to `n_th`.
    #[serde(default)]
    pub n_bb: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprSection {
    pub r: f64,
    pub eta_s: f64,
    pub eta_i_in: f64,
    pub eta_i_out: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub theta_s_deg: Vec<f64>,
    pub delta_theta_i_deg: f64,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            theta_s_deg: vec![90.0],
            delta_theta_i_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: 256_000.0,
            duration_s: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelchSection {
    /// Defaults to the shortest power of two giving 100 Hz resolution.
    pub segment_length: Option<usize>,
    pub overlap: Option<f64>,
    pub window: Option<Window>,
    pub detrend: Option<bool>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub band_hz: [f64; 2],
    pub conditioning: ConditioningOptions,
    pub max_trajectory_points: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            band_hz: [3e3, 60e3],
            conditioning: ConditioningOptions::default(),
            max_trajectory_points: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParamSection {
    pub name: ParamName,
    /// Hz for rates, degrees for angles, plain numbers otherwise.
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Idler,
    Signal,
    Conditional,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub free: Vec<FreeParamSection>,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableKind>,
    #[serde(default = "default_band")]
    pub band_hz: [f64; 2],
    #[serde(default)]
    pub tie_n_bb: bool,
    #[serde(default)]
    pub options: SimplexOptions,
}

fn default_observables() -> Vec<ObservableKind> {
    vec![ObservableKind::Idler, ObservableKind::Conditional]
}

fn default_band() -> [f64; 2] {
    [3e3, 60e3]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    pub finesse: f64,
    pub band_hz: [f64; 2],
}

impl Default for CavitySection {
    fn default() -> Self {
        Self {
            finesse: 6000.0,
            band_hz: [3e3, 60e3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub points: usize,
    pub improvements: Vec<ImprovementScenario>,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            f_min_hz: 100.0,
            f_max_hz: 100e3,
            points: 2000,
            improvements: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn empty() -> Self {
        serde_json::from_str(&format!("{{\"schema_version\": {SCHEMA_VERSION}}}")).expect("defaults parse")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn spin(&self) -> Result<SpinParams, CliError> {
        let s = self.spin.ok_or_else(|| missing("spin"))?;
        let mut p = SpinParams::from_hz(s.larmor_hz, s.readout_hz, s.decay_hz, s.bb_readout_hz, s.bb_decay_hz, s.n_th);
        if let Some(n) = s.n_bb {
            p.n_bb = n;
        }
        p.validate().map_err(CliError::config)?;
        Ok(p)
    }

    pub fn epr(&self) -> Result<EprParams, CliError> {
        let e = self.epr.ok_or_else(|| missing("epr"))?;
        let p = EprParams::new(e.r, e.eta_s, e.eta_i_in, e.eta_i_out);
        p.validate().map_err(CliError::config)?;
        Ok(p)
    }

    /// Detection config at the first listed angle.
    pub fn detection(&self) -> DetectionConfig {
        let theta = self.detection.theta_s_deg.first().copied().unwrap_or(90.0);
        DetectionConfig::from_degrees(theta, self.detection.delta_theta_i_deg)
    }

    pub fn welch(&self, sample_rate: f64) -> Result<WelchConfig, CliError> {
        let d = WelchConfig::for_sample_rate(sample_rate);
        let w = &self.welch;
        let cfg = WelchConfig {
            segment_length: w.segment_length.unwrap_or(d.segment_length),
            overlap: w.overlap.unwrap_or(d.overlap),
            window: w.window.unwrap_or(d.window),
            detrend: w.detrend.unwrap_or(d.detrend),
        };
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }

    pub fn fit_section(&self) -> Result<&FitSection, CliError> {
        self.fit.as_ref().ok_or_else(|| missing("fit"))
    }
}

impl FreeParamSection {
    pub fn to_core(self) -> FreeParam {
        let conv = |v: f64| {
            if self.name.is_angular_rate() {
                hz_to_rad(v)
            } else if self.name.is_angle() {
                v.to_radians()
            } else {
                v
            }
        };
        FreeParam {
            name: self.name,
            lower: conv(self.lower),
            upper: conv(self.upper),
            initial: self.initial.map(conv),
        }
    }
}

/// Value of a fitted parameter in configuration units.
pub fn to_human(name: ParamName, v: f64) -> f64 {
    if name.is_angular_rate() {
        condsqz_core::spectrum::rad_to_hz(v)
    } else if name.is_angle() {
        v.to_degrees()
    } else {
        v
    }
}

pub fn band_rad(b: [f64; 2]) -> Result<(f64, f64), CliError> {
    if !(b[0] >= 0.0 && b[1] > b[0] && b[1].is_finite()) {
        return Err(CliError::Config(format!("band [{}, {}] Hz must satisfy 0 <= lo < hi", b[0], b[1])));
    }
    Ok((hz_to_rad(b[0]), hz_to_rad(b[1])))
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!("missing required key `{key}`"))
}
