use condsqz_core::estimate::*;
use condsqz_core::model::*;
use condsqz_core::params::presets;
use condsqz_core::spectrum::*;
use condsqz_core::synth::*;
use condsqz_core::DetectionConfig;

const FS: f64 = 256_000.0;

fn record(theta_deg: f64, dti_deg: f64, seed: u64) -> (TimeSeriesPair, DetectionConfig) {
    let (spin, epr) = presets::negative_mass_10k();
    let det = DetectionConfig::from_degrees(theta_deg, dti_deg);
    let pair = synthesize(&SynthesisConfig::new(FS, 4.0, seed, spin, epr, det)).unwrap().remove(0);
    (pair, det)
}

#[test]
fn parseval_holds_for_long_records() {
    let (pair, _) = record(30.0, 0.0, 3);
    let x = pair.signal();
    let n = 1 << 18;
    let var = x[..n].iter().map(|v| v * v).sum::<f64>() / n as f64;
    let cfg = WelchConfig::for_sample_rate(FS).with_segment_length(1024);
    let psd = welch_psd(&x[..n], FS, &cfg).unwrap();
    let df = FS / 1024.0;
    let power: f64 = psd.re().iter().sum::<f64>() * df;
    // DC bin is absent from the grid and DC is removed by detrending
    assert!((power / var - 1.0).abs() < 0.01, "{power} vs {var}");
}

#[test]
fn idler_and_cross_match_model() {
    let (spin, epr) = presets::negative_mass_10k();
    let (pair, det) = record(60.0, -30.0, 9);
    let cfg = WelchConfig::for_sample_rate(FS);
    let w = welch_pair(&pair, &cfg).unwrap();
    let idx = w.grid.band_indices(hz_to_rad(3e3), hz_to_rad(60e3));
    let scale = 4.0 / FS;
    let idler = idler_spectrum(&spin, &epr, &det, &w.grid).unwrap().re();
    let cross = cross_spectrum(&spin, &epr, &det, &w.grid).unwrap().to_complex();
    let n = idx.len() as f64;
    let idler_ratio = idx.iter().map(|&i| w.psd_idler[i] / (idler[i] * scale)).sum::<f64>() / n;
    assert!((idler_ratio - 1.0).abs() < 0.01, "{idler_ratio}");
    let cross_err = idx.iter().map(|&i| (w.csd[i] - cross[i] * scale).norm()).sum::<f64>()
        / idx.iter().map(|&i| (cross[i] * scale).norm()).sum::<f64>();
    assert!(cross_err < 0.1, "{cross_err}");
    let signal = signal_spectrum(&epr, &w.grid).unwrap().re()[0] * scale;
    let signal_ratio = idx.iter().map(|&i| w.psd_signal[i]).sum::<f64>() / n / signal;
    assert!((signal_ratio - 1.0).abs() < 0.01, "{signal_ratio}");
}

#[test]
fn estimated_gain_tracks_analytical_gain() {
    let (spin, epr) = presets::negative_mass_10k();
    let (pair, det) = record(120.0, 0.0, 4);
    let cfg = WelchConfig::for_sample_rate(FS);
    let est = estimate_wiener(&pair, &cfg).unwrap().gain.to_complex();
    let model = analytical_wiener_gain(&spin, &epr, &det, &cfg.grid(FS).unwrap()).unwrap().to_complex();
    let idx = cfg.grid(FS).unwrap().band_indices(hz_to_rad(3e3), hz_to_rad(60e3));
    let err = idx.iter().map(|&i| (est[i] - model[i]).norm()).sum::<f64>()
        / idx.iter().map(|&i| model[i].norm()).sum::<f64>();
    assert!(err < 0.1, "{err}");
}

#[test]
fn unbiased_and_in_sample_conditioning_agree() {
    let (spin, epr) = presets::negative_mass_10k();
    let (pair, det) = record(90.0, 0.0, 5);
    let cfg = WelchConfig::for_sample_rate(FS);
    let (lo, hi) = (hz_to_rad(3e3), hz_to_rad(60e3));
    let model = conditional_spectrum(&spin, &epr, &det, &cfg.grid(FS).unwrap()).unwrap();
    let want = model.band_mean(lo, hi).unwrap();
    for mode in [ConditioningMode::InSample, ConditioningMode::Unbiased] {
        let opts = ConditioningOptions { mode, ..Default::default() };
        let c = condition(&pair, &cfg, &opts).unwrap();
        let got = psd_to_shot_noise(&c.spectrum, FS).band_mean(lo, hi).unwrap();
        assert!((10.0 * (got / want).log10()).abs() < 0.1, "{mode:?}: {got} vs {want}");
    }
}
