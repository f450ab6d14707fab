//! Closed-form response functions and noise spectra of the hybrid
//! EPR-source / spin-oscillator network.
//!
//! Conventions: angular frequencies in rad/s, one-sided symmetrized spectra
//! with vacuum level 1/2 unless a series is tagged otherwise. All functions
//! are pure and can be evaluated concurrently.

mod angle;
mod misc;
mod response;
mod spectra;

pub use angle::{angle_diff_mod_pi, fold_pi, optimal_angle, sql_bandwidth, squeezing_angle};
pub use misc::{
    cooperativity, duan_simon_level, equivalent_length, filter_cavity_phase, filter_cavity_phase_at,
    SPEED_OF_LIGHT,
};
pub use response::{
    atomic_backaction, backaction_at, bath_coupling_at, broadband_coupling, lorentzian,
    thermal_coupling, vr_effective_params, vr_gain, vr_gain_at, EffectiveOscillator,
};
pub use spectra::{
    analytical_wiener_gain, conditional_spectrum, cross_spectrum, idler_spectrum,
    noise_contributions, optimal_conditional_spectrum, signal_spectrum, to_shot_noise_units,
    BinTerms, Model,
};
