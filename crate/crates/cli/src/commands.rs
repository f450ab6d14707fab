use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use condsqz_core::estimate::*;
use condsqz_core::fit::*;
use condsqz_core::io::json_digest;
use condsqz_core::model::*;
use condsqz_core::spectrum::{rad_to_hz, SHOT_NOISE};
use condsqz_core::synth::{export_csv, ingest_csv, synthesize, SynthesisConfig, TimeSeriesPair};

use condsqz_core::{DetectionConfig, Error, FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};

use crate::config::{band_rad, to_human, Format, ObservableKind, RunConfig};
use crate::error::CliError;
use crate::output::{angle_label, OutputDir};

/// Parameter-validation failures are configuration errors, anything else
/// raised while processing records is a data error.
fn classify(e: Error) -> CliError {
    match e {
        Error::InvalidParameter { .. } | Error::Domain { .. } | Error::InvalidGrid(_) => CliError::config(e),
        _ => CliError::data(e),
    }
}

pub fn simulate(cfg: &RunConfig, seed: Option<u64>, mut out: OutputDir) -> Result<(), CliError> {
    let spin = cfg.spin()?;
    let epr = cfg.epr()?;
    let s = cfg.synthesis;
    let seed = seed.unwrap_or(s.seed);
    let angles = &cfg.detection.theta_s_deg;
    if angles.is_empty() {
        return Err(CliError::Config("detection.theta_s_deg must list at least one angle".into()));
    }
    let sc = SynthesisConfig::new(s.sample_rate_hz, s.duration_s, seed, spin, epr, cfg.detection())
        .with_angles_deg(angles);
    sc.validate().map_err(CliError::config)?;
    sc.samples().map_err(CliError::config)?;
    let pairs = synthesize(&sc).map_err(CliError::config)?;
    let paths: Vec<(PathBuf, &TimeSeriesPair, f64)> = pairs
        .iter()
        .zip(angles)
        .enumerate()
        .map(|(i, (p, a))| (out.record(format!("record_{i:02}_theta_{}.csv", angle_label(*a))), p, *a))
        .collect();
    paths
        .par_iter()
        .try_for_each(|(path, p, a)| export_csv(p, path, seed, *a))
        .map_err(CliError::output)?;
    out.manifest("simulate", Some(seed), sc.digest())
}

pub struct Record {
    pub theta_deg: f64,
    pub pair: TimeSeriesPair,
    pub source: PathBuf,
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::Data(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("record") && name.ends_with(".csv")
                })
                .collect();
            inner.sort();
            if inner.is_empty() {
                return Err(CliError::Data(format!("no record*.csv files in {}", p.display())));
            }
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no input records given".into()));
    }
    Ok(files)
}

/// Loads records; each angle comes from the file header or, failing that,
/// from `detection.theta_s_deg` in file order.
pub fn load_records(cfg: &RunConfig, paths: &[PathBuf], sample_rate: Option<f64>) -> Result<Vec<Record>, CliError> {
    let files = expand(paths)?;
    let loaded = files
        .par_iter()
        .map(|f| {
            ingest_csv(f, sample_rate)
                .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))
                .map(|(pair, h)| (f.clone(), pair, h.theta_s_deg))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fallback = &cfg.detection.theta_s_deg;
    let recs = loaded
        .into_iter()
        .enumerate()
        .map(|(i, (source, pair, theta))| {
            let theta_deg = theta
                .or_else(|| (fallback.len() == files.len()).then(|| fallback[i]))
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: no `theta_s=` header and detection.theta_s_deg does not list one angle per file",
                        source.display()
                    ))
                })?;
            Ok(Record { theta_deg, pair, source })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let fs = recs[0].pair.sample_rate;
    if let Some(r) = recs.iter().find(|r| r.pair.sample_rate != fs) {
        return Err(CliError::Data(format!(
            "{} has sample rate {} Hz, expected {fs} Hz",
            r.source.display(),
            r.pair.sample_rate
        )));
    }
    Ok(recs)
}

fn sorted_spectrogram(rows: &[(f64, SpectrumSeries)]) -> Result<Spectrogram, CliError> {
    if rows.len() >= 3 {
        return build_spectrogram(rows).map_err(CliError::data);
    }
    let mut r: Vec<(f64, &SpectrumSeries)> = rows.iter().map(|(t, s)| (fold_pi(*t), s)).collect();
    r.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Spectrogram {
        theta_s_axis: r.iter().map(|x| x.0).collect(),
        grid: rows[0].1.grid.clone(),
        values: r.iter().map(|x| x.1.re().iter().map(|v| 10.0 * v.log10()).collect()).collect(),
    })
}

pub fn analyze(
    cfg: &RunConfig,
    data: &[PathBuf],
    sample_rate: Option<f64>,
    zero_gain: bool,
    mut out: OutputDir,
) -> Result<(), CliError> {
    let recs = load_records(cfg, data, sample_rate)?;
    let fs = recs[0].pair.sample_rate;
    let wc = cfg.welch(fs)?;
    let band = band_rad(cfg.analysis.band_hz)?;
    let mut opts = cfg.analysis.conditioning;
    opts.zero_gain |= zero_gain;
    let conditioned = recs
        .par_iter()
        .map(|r| condition(&r.pair, &wc, &opts).map_err(|e| CliError::Data(format!("{}: {e}", r.source.display()))))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (r, c) in recs.iter().zip(&conditioned) {
        let l = angle_label(r.theta_deg);
        let w = &c.welch;
        let sn = |s: SpectrumSeries| psd_to_shot_noise(&s, fs);
        out.spectrum(&format!("psd_signal_theta_{l}"), &sn(w.signal().map_err(CliError::data)?))?;
        out.spectrum(&format!("psd_idler_theta_{l}"), &sn(w.idler().map_err(CliError::data)?))?;
        out.spectrum(&format!("csd_theta_{l}"), &sn(w.cross().map_err(CliError::data)?))?;
        out.spectrum(&format!("gain_theta_{l}"), &c.filter.gain)?;
        let cond = sn(c.spectrum.clone());
        out.spectrum(&format!("conditional_theta_{l}"), &cond)?;
        rows.push((r.theta_deg.to_radians(), cond));
    }
    let sg = sorted_spectrogram(&rows)?;
    out.spectrogram("spectrogram", &sg)?;
    let (traj, sql) = if sg.theta_s_axis.len() >= 3 {
        let t = extract_angle_trajectory(&sg).map_err(CliError::data)?;
        out.spectrum("trajectory", &t)?;
        let sql = empirical_sql_bandwidth(&t);
        (Some(t), sql)
    } else {
        (None, None)
    };
    let segments = conditioned[0].welch.segments;
    let summary = summarize(&sg, traj.as_ref(), sql, band, fs, segments, cfg.analysis.max_trajectory_points);
    out.json("summary.json", &summary)?;
    let sources: Vec<String> = recs.iter().map(|r| r.source.display().to_string()).collect();
    out.manifest("analyze", None, json_digest(&(cfg, &sources, zero_gain)))
}

#[derive(Serialize)]
struct FitReport {
    /// Estimates in configuration units (Hz, degrees, plain).
    estimates: BTreeMap<String, f64>,
    uncertainties: BTreeMap<String, Option<f64>>,
    chi2: f64,
    dof: i64,
    reduced_chi2: f64,
    converged: bool,
    evaluations: usize,
    /// Present when a constant relative standard deviation replaced missing
    /// per-bin variances.
    assumed_relative_sd: Option<f64>,
    input_digest: String,
}

pub fn fit(
    cfg: &RunConfig,
    data: &[PathBuf],
    sample_rate: Option<f64>,
    seed: Option<u64>,
    mut out: OutputDir,
) -> Result<(), CliError> {
    let section = cfg.fit_section()?;
    let spin = cfg.spin()?;
    let epr = cfg.epr()?;
    let recs = load_records(cfg, data, sample_rate)?;
    let fs = recs[0].pair.sample_rate;
    let wc = cfg.welch(fs)?;
    let dti = cfg.detection.delta_theta_i_deg;
    let base = ParamSet {
        spin,
        epr,
        det: DetectionConfig::from_degrees(recs[0].theta_deg, dti),
    };
    let opts = cfg.analysis.conditioning;
    let want = |k| section.observables.contains(&k);
    let mut observed = Vec::new();
    for (i, r) in recs.iter().enumerate() {
        let c = condition(&r.pair, &wc, &opts).map_err(|e| CliError::Data(format!("{}: {e}", r.source.display())))?;
        let w = &c.welch;
        if i == 0 && want(ObservableKind::Idler) {
            let s = w.idler().map_err(CliError::data)?;
            observed.push(Observation::from_welch(Observable::Idler, &s, &w.var_idler, fs).map_err(CliError::data)?);
        }
        if i == 0 && want(ObservableKind::Signal) {
            let s = w.signal().map_err(CliError::data)?;
            observed.push(Observation::from_welch(Observable::Signal, &s, &w.var_signal, fs).map_err(CliError::data)?);
        }
        if want(ObservableKind::Conditional) {
            let (s, v) = welch_psd_with_variance(&c.record, fs, &wc).map_err(CliError::data)?;
            let o = Observable::Conditional { theta_s: r.theta_deg.to_radians() };
            observed.push(Observation::from_welch(o, &s, &v, fs).map_err(CliError::data)?);
        }
    }
    if observed.is_empty() {
        return Err(CliError::Config("fit.observables is empty".into()));
    }
    let mut problem = FitProblem::new(base, section.free.iter().map(|f| f.to_core()).collect(), observed);
    problem.band = band_rad(section.band_hz)?;
    problem.tie_n_bb = section.tie_n_bb;
    problem.options = section.options;
    if let Some(s) = seed {
        problem.options.seed = s;
    }
    let r = fit_model(&problem).map_err(classify)?;
    let mut estimates = BTreeMap::new();
    let mut uncertainties = BTreeMap::new();
    for f in &problem.free {
        let key = f.name.as_str();
        estimates.insert(key.to_string(), to_human(f.name, r.estimates[key]));
        uncertainties.insert(key.to_string(), r.per_param_uncertainty[key].map(|u| to_human(f.name, u)));
    }
    let report = FitReport {
        estimates,
        uncertainties,
        chi2: r.chi2,
        dof: r.dof,
        reduced_chi2: r.reduced_chi2(),
        converged: r.converged,
        evaluations: r.evaluations,
        assumed_relative_sd: r.assumed_relative_sd,
        input_digest: r.input_digest.clone(),
    };
    out.json("fit_result.json", &report)?;
    out.manifest("fit", Some(problem.options.seed), r.input_digest.clone())?;
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("stopped after {} evaluations, chi2 {:.6e}", r.evaluations, r.chi2)))
    }
}

pub fn cavity_equiv(
    cfg: &RunConfig,
    trajectory: &Path,
    finesse: Option<f64>,
    mut out: OutputDir,
) -> Result<(), CliError> {
    let finesse = finesse.unwrap_or(cfg.cavity.finesse);
    let (lo, hi) = band_rad(cfg.cavity.band_hz)?;
    let full = read_spectrum_csv(trajectory, SpectrumKind::Angle, Normalization::Absolute)
        .map_err(|e| CliError::Data(format!("{}: {e}", trajectory.display())))?;
    let idx = full.grid.band_indices(lo, hi);
    if idx.len() < 3 {
        return Err(CliError::Data(format!("only {} trajectory points inside the cavity band", idx.len())));
    }
    let v = full.re();
    let grid = FrequencyGrid::new(idx.iter().map(|&i| full.grid.values()[i]).collect()).map_err(CliError::data)?;
    let traj = SpectrumSeries::real(grid, idx.iter().map(|&i| v[i]).collect(), Normalization::Absolute, SpectrumKind::Angle)
        .map_err(CliError::data)?;
    let (cav, r) = fit_cavity_equivalent(&traj, finesse).map_err(classify)?;
    let body = json!({
        "detuning_hz": rad_to_hz(cav.detuning),
        "bandwidth_hz": rad_to_hz(cav.bandwidth),
        "finesse": cav.finesse,
        "length_m": equivalent_length(&cav),
        "length_m_cyclic_bandwidth": SPEED_OF_LIGHT / (2.0 * rad_to_hz(cav.bandwidth) * cav.finesse),
        "chi2_rad2": r.chi2,
        "dof": r.dof,
        "converged": r.converged,
        "uncertainty_hz": {
            "detuning": r.per_param_uncertainty.get("detuning").copied().flatten().map(rad_to_hz),
            "bandwidth": r.per_param_uncertainty.get("bandwidth").copied().flatten().map(rad_to_hz),
        },
        "input_digest": r.input_digest,
    });
    out.json("cavity.json", &body)?;
    out.manifest("cavity-equiv", None, r.input_digest.clone())?;
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("cavity fit stopped after {} evaluations", r.evaluations)))
    }
}

fn min_db(s: &SpectrumSeries) -> (f64, f64) {
    let hz = s.grid.hz();
    s.re()
        .iter()
        .zip(hz)
        .map(|(v, f)| (10.0 * v.log10(), f))
        .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a })
}

pub fn predict(cfg: &RunConfig, mut out: OutputDir) -> Result<(), CliError> {
    let spin = cfg.spin()?;
    let epr = cfg.epr()?;
    let det0 = cfg.detection();
    let p = &cfg.predict;
    let grid = FrequencyGrid::linspace_hz(p.f_min_hz, p.f_max_hz, p.points).map_err(CliError::config)?;
    let eff = vr_effective_params(&spin, &det0).map_err(CliError::config)?;

    let mut levels = Vec::new();
    for &a in &cfg.detection.theta_s_deg {
        let det = det0.with_theta_s(a.to_radians());
        let s = conditional_spectrum(&spin, &epr, &det, &grid).map_err(classify)?;
        out.spectrum(&format!("conditional_theta_{}", angle_label(a)), &s)?;
        let (m, f) = min_db(&s);
        levels.push(json!({"theta_deg": a, "min_db": m, "argmin_hz": f}));
    }
    let opt = optimal_conditional_spectrum(&spin, &epr, &det0, &grid).map_err(classify)?;
    out.spectrum("optimal_conditional", &opt)?;
    out.spectrum("squeezing_angle", &squeezing_angle(&spin, &det0, &grid).map_err(classify)?)?;
    out.spectrum("idler", &to_shot_noise_units(&idler_spectrum(&spin, &epr, &det0, &grid).map_err(classify)?))?;
    let parts = noise_contributions(&spin, &epr, &det0, &grid).map_err(classify)?;
    let mut cols = vec![grid.hz()];
    cols.extend(parts.iter().map(|s| s.re().iter().map(|v| v / SHOT_NOISE).collect()));
    out.table("noise_contributions.csv", &["freq_hz", "lambda_in", "lambda_out", "thermal", "broadband"], &cols)?;

    let mut improvements = Vec::new();
    for (i, sc) in p.improvements.iter().enumerate() {
        let s = project_improvement(&spin, &epr, &det0, &grid, sc).map_err(CliError::config)?;
        out.spectrum(&format!("improvement_{i}"), &s)?;
        let (m, f) = min_db(&s);
        improvements.push(json!({"scenario": sc, "min_db": m, "argmin_hz": f}));
    }
    let ds = duan_simon_level(&epr).map_err(CliError::config)?;
    let (m, f) = min_db(&opt);
    let summary = json!({
        "sql_bandwidth_hz": sql_bandwidth(&spin, &det0).ok().map(rad_to_hz),
        "cooperativity": cooperativity(&spin).ok(),
        "duan_simon_level": ds,
        "duan_simon_db": 10.0 * ds.log10(),
        "effective_larmor_hz": rad_to_hz(eff.larmor),
        "effective_readout_hz": rad_to_hz(eff.readout),
        "effective_readout_half_hz": rad_to_hz(eff.readout) / 2.0,
        "optimal_min_db": m,
        "optimal_argmin_hz": f,
        "conditional_levels": levels,
        "improvements": improvements,
    });
    out.json("prediction.json", &summary)?;
    out.manifest("predict", None, json_digest(cfg))
}

const REPORT_FILES: [&str; 5] = ["manifest.json", "summary.json", "fit_result.json", "cavity.json", "prediction.json"];

pub fn report(dir: &Path, format: Format) -> Result<String, CliError> {
    let mut found = serde_json::Map::new();
    for name in REPORT_FILES {
        let p = dir.join(name);
        if !p.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        found.insert(name.trim_end_matches(".json").to_string(), v);
    }
    if found.is_empty() {
        return Err(CliError::Data(format!("no result files in {}", dir.display())));
    }
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&Value::Object(found.clone())).expect("value serializes") + "\n",
        Format::Csv => render_text(&found),
    };
    let name = match format {
        Format::Json => "report.json",
        Format::Csv => "report.txt",
    };
    condsqz_core::io::write_atomic(&dir.join(name), |w| w.write_all(text.as_bytes())).map_err(CliError::output)?;
    Ok(text)
}

fn render_text(found: &serde_json::Map<String, Value>) -> String {
    let mut s = String::new();
    let num = |v: &Value| v.as_f64().map_or_else(|| v.to_string(), |x| format!("{x:.6}"));
    let txt = |v: &Value| v.as_str().map_or_else(|| v.to_string(), str::to_string);
    if let Some(m) = found.get("manifest") {
        s += &format!("run: {} ({} {})\n", txt(&m["command"]), txt(&m["tool"]), txt(&m["version"]));
        s += &format!("parameter digest: {}\n", txt(&m["parameter_digest"]));
    }
    if let Some(a) = found.get("summary") {
        s += &format!("minimum conditional noise: {} dB at {} Hz, {} deg\n", num(&a["min_db"]), num(&a["argmin_freq_hz"]), num(&a["argmin_theta_deg"]));
        s += &format!("empirical SQL bandwidth: {} Hz\n", num(&a["sql_bandwidth_hz"]));
        for l in a["band_levels"].as_array().into_iter().flatten() {
            s += &format!("  theta {} deg: {} +- {} dB\n", num(&l["theta_deg"]), num(&l["mean_db"]), num(&l["stderr_db"]));
        }
    }
    if let Some(f) = found.get("fit_result") {
        s += &format!("fit: chi2/dof {} converged {}\n", num(&f["reduced_chi2"]), f["converged"]);
        if let Some(e) = f["estimates"].as_object() {
            for (k, v) in e {
                s += &format!("  {k} = {} +- {}\n", num(v), num(&f["uncertainties"][k]));
            }
        }
    }
    if let Some(c) = found.get("cavity") {
        s += &format!(
            "equivalent cavity: detuning {} Hz, bandwidth {} Hz, length {} m\n",
            num(&c["detuning_hz"]),
            num(&c["bandwidth_hz"]),
            num(&c["length_m"])
        );
    }
    if let Some(p) = found.get("prediction") {
        s += &format!("SQL bandwidth: {} Hz, cooperativity {}\n", num(&p["sql_bandwidth_hz"]), num(&p["cooperativity"]));
        s += &format!("entanglement level: {} dB\n", num(&p["duan_simon_db"]));
        s += &format!("optimal conditional minimum: {} dB at {} Hz\n", num(&p["optimal_min_db"]), num(&p["optimal_argmin_hz"]));
    }
    s
}
