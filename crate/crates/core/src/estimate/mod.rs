//! Welch spectral estimation, data-driven Wiener conditioning and
//! readout-angle spectrograms.
//!
//! Estimator spectra are one-sided, in record units squared per Hz
//! ([`Normalization::Absolute`](crate::spectrum::Normalization)). For
//! shot-noise-normalized records the vacuum level is `2/fs`;
//! [`psd_to_shot_noise`] rescales to shot-noise units.

mod export;
mod spectrogram;
mod welch;
mod wiener;

pub use export::{band_stats, read_spectrum_csv, summarize, write_spectrogram_csv, write_spectrum_csv, AnalysisSummary, AngleLevel, BandStats};
pub use spectrogram::{build_spectrogram, db_normalize, empirical_sql_bandwidth, extract_angle_trajectory, Spectrogram};
pub use welch::{psd_to_shot_noise, welch_csd, welch_pair, welch_psd, welch_psd_with_variance, Window, WelchConfig, WelchSpectra};
pub use wiener::{
    apply_conditioning, condition, convolve_noncausal, estimate_wiener, impulse_response, wiener_from_spectra, Conditioned,
    ConditioningMode, ConditioningOptions, GainSource, WienerFilterEstimate, IDLER_FLOOR,
};
