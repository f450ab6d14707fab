//! Output directory bookkeeping and the run manifest.

use serde::Serialize;
use std::path::{Path, PathBuf};

use condsqz_core::estimate::{write_spectrogram_csv, write_spectrum_csv, Spectrogram};
use condsqz_core::io::write_atomic;
use condsqz_core::{SpectrumKind, SpectrumSeries, SpectrumValues};

use crate::config::Format;
use crate::error::CliError;

pub struct OutputDir {
    pub dir: PathBuf,
    pub format: Format,
    files: Vec<String>,
}

#[derive(Serialize)]
struct SpectrumJson<'a> {
    freq_hz: Vec<f64>,
    value: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    imag: Option<Vec<f64>>,
    normalization: &'a condsqz_core::Normalization,
    kind: &'a SpectrumKind,
}

#[derive(Serialize)]
struct SpectrogramJson<'a> {
    theta_s_deg: Vec<f64>,
    freq_hz: Vec<f64>,
    values_db: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    parameter_digest: String,
    created_utc: String,
    workers: usize,
    files: &'a [String],
}

impl OutputDir {
    pub fn create(dir: PathBuf, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Other(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            format,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: String) -> PathBuf {
        let p = self.dir.join(&name);
        self.files.push(name);
        p
    }

    pub fn record(&mut self, name: String) -> PathBuf {
        self.path(name)
    }

    /// Writes `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn spectrum(&mut self, stem: &str, s: &SpectrumSeries) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let p = self.path(format!("{stem}.csv"));
                write_spectrum_csv(s, &p).map_err(CliError::output)
            }
            Format::Json => {
                let deg = s.kind == SpectrumKind::Angle;
                let (value, imag) = match &s.values {
                    SpectrumValues::Real(v) => (v.iter().map(|x| if deg { x.to_degrees() } else { *x }).collect(), None),
                    SpectrumValues::Complex(v) => (v.iter().map(|z| z.re).collect(), Some(v.iter().map(|z| z.im).collect())),
                };
                let body = SpectrumJson {
                    freq_hz: s.grid.hz(),
                    value,
                    imag,
                    normalization: &s.normalization,
                    kind: &s.kind,
                };
                self.json(&format!("{stem}.json"), &body)
            }
        }
    }

    pub fn spectrogram(&mut self, stem: &str, sg: &Spectrogram) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let p = self.path(format!("{stem}.csv"));
                write_spectrogram_csv(sg, &p).map_err(CliError::output)
            }
            Format::Json => {
                let body = SpectrogramJson {
                    theta_s_deg: sg.theta_s_axis.iter().map(|t| t.to_degrees()).collect(),
                    freq_hz: sg.grid.hz(),
                    values_db: &sg.values,
                };
                self.json(&format!("{stem}.json"), &body)
            }
        }
    }

    /// Plain CSV table with a header row, written regardless of format.
    pub fn table(&mut self, name: &str, header: &[&str], columns: &[Vec<f64>]) -> Result<(), CliError> {
        let p = self.path(name.to_string());
        let rows = columns.first().map_or(0, Vec::len);
        write_atomic(&p, |w| {
            writeln!(w, "{}", header.join(","))?;
            for i in 0..rows {
                let row: Vec<String> = columns.iter().map(|c| format!("{:.16e}", c[i])).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })
        .map_err(CliError::output)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let p = self.path(name.to_string());
        write_json(&p, value)
    }

    pub fn manifest(mut self, command: &str, seed: Option<u64>, digest: String) -> Result<(), CliError> {
        self.files.sort();
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            parameter_digest: digest,
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            workers: rayon::current_num_threads(),
            files: &self.files,
        };
        write_json(&self.dir.join("manifest.json"), &m)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
    .map_err(CliError::output)
}

/// Angle label for file names: at most six decimals, no trailing zeros.
pub fn angle_label(deg: f64) -> String {
    let s = format!("{:.6}", deg);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(angle_label(45.0), "45");
        assert_eq!(angle_label(12.5), "12.5");
        assert_eq!(angle_label(0.1 + 0.2), "0.3");
        assert_eq!(angle_label(-0.0), "0");
    }
}
