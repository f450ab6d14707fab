//! Simulation and analysis of frequency-dependent conditional squeezing in a
//! two-color EPR source coupled to an atomic spin oscillator.
//!
//! * [`model`]: closed-form response functions and noise spectra.
//! * [`synth`]: seeded two-channel photocurrent synthesis and CSV I/O.
//! * [`estimate`]: Welch spectra, data-driven Wiener conditioning and
//!   readout-angle spectrograms.
//! * [`fit`]: chi-squared parameter recovery and filter-cavity equivalence.

pub mod error;
pub mod estimate;
pub mod fit;
pub mod io;
pub mod model;
pub mod params;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
pub use params::{CavityParams, DetectionConfig, EprParams, SpinParams};
pub use synth::{synthesize, SynthesisConfig, TimeSeriesPair};
pub use spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries, SpectrumValues};
