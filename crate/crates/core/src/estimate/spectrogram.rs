use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{invalid, Error, Result};
use crate::model::{angle_diff_mod_pi, fold_pi};
use crate::spectrum::{FrequencyGrid, Normalization, SpectrumKind, SpectrumSeries};

/// Conditional noise in dB relative to shot noise over (angle, frequency).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Radians in [0, pi), ascending.
    pub theta_s_axis: Vec<f64>,
    pub grid: FrequencyGrid,
    /// `values[angle][bin]`.
    pub values: Vec<Vec<f64>>,
}

/// `10 log10(S / S_ref)` per bin.
pub fn db_normalize(s: &SpectrumSeries, shot_reference: f64) -> Result<SpectrumSeries> {
    if !(shot_reference > 0.0 && shot_reference.is_finite()) {
        return Err(invalid("shot_reference", format!("must be positive, got {shot_reference}")));
    }
    let v = s.re().iter().map(|x| 10.0 * (x / shot_reference).log10()).collect();
    Ok(SpectrumSeries {
        grid: s.grid.clone(),
        values: crate::spectrum::SpectrumValues::Real(v),
        normalization: Normalization::ShotNoiseUnits,
        kind: SpectrumKind::Decibel,
    })
}

/// Assembles conditioned spectra, each in shot-noise units, into a
/// spectrogram sorted by angle modulo pi.
pub fn build_spectrogram(entries: &[(f64, SpectrumSeries)]) -> Result<Spectrogram> {
    let mut rows: Vec<(f64, &SpectrumSeries)> = entries.iter().map(|(t, s)| (fold_pi(*t), s)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in rows.windows(2) {
        if (w[1].0 - w[0].0).abs() < 1e-9 {
            return Err(Error::DuplicateAngle(w[1].0.to_degrees()));
        }
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        if rows.len() > 1 && (first.0 + PI - last.0).abs() < 1e-9 {
            return Err(Error::DuplicateAngle(first.0.to_degrees()));
        }
    }
    if rows.len() < 3 {
        return Err(invalid("theta_s", format!("need at least 3 distinct angles, got {}", rows.len())));
    }
    let grid = rows[0].1.grid.clone();
    let mut values = Vec::with_capacity(rows.len());
    for (t, s) in &rows {
        if s.grid != grid {
            return Err(Error::GridMismatch(format!("spectrum at {} deg is on a different grid", t.to_degrees())));
        }
        if s.normalization != Normalization::ShotNoiseUnits || s.kind != SpectrumKind::Psd {
            return Err(invalid("spectrum", "spectrogram entries must be PSDs in shot-noise units"));
        }
        values.push(s.re().iter().map(|x| 10.0 * x.log10()).collect());
    }
    Ok(Spectrogram {
        theta_s_axis: rows.iter().map(|r| r.0).collect(),
        grid,
        values,
    })
}

/// Vertex offset of the parabola through `(a, y0), (0, y1), (b, y2)`, with
/// `a < 0 < b`, clamped to `[a, b]`. Zero when the parabola opens downward.
fn parabola_vertex(a: f64, b: f64, y0: f64, y1: f64, y2: f64) -> f64 {
    let (d0, d2) = (y0 - y1, y2 - y1);
    let det = a * b * (b - a);
    let c1 = (d0 * b * b - d2 * a * a) / det;
    let c2 = (d2 * a - d0 * b) / det;
    if !(c2 > 0.0) {
        return 0.0;
    }
    (-c1 / (2.0 * c2)).clamp(a, b)
}

/// Per-bin angle of minimal conditional noise, refined by a parabola through
/// the minimum and its two angular neighbours. The axis wraps around pi when
/// the wrap gap is no wider than 1.5 times the median spacing.
pub fn extract_angle_trajectory(sg: &Spectrogram) -> Result<SpectrumSeries> {
    let th = &sg.theta_s_axis;
    let n = th.len();
    if n < 3 {
        return Err(invalid("theta_s", "need at least 3 angles"));
    }
    let mut gaps: Vec<f64> = th.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let wraps = th[0] + PI - th[n - 1] <= 1.5 * median;

    let out = (0..sg.grid.len())
        .map(|k| {
            let col = |j: usize| sg.values[j][k];
            let j = (0..n).min_by(|&a, &b| col(a).total_cmp(&col(b))).expect("n >= 3");
            let left = if j > 0 {
                Some((th[j - 1] - th[j], col(j - 1)))
            } else if wraps {
                Some((th[n - 1] - PI - th[j], col(n - 1)))
            } else {
                None
            };
            let right = if j + 1 < n {
                Some((th[j + 1] - th[j], col(j + 1)))
            } else if wraps {
                Some((th[0] + PI - th[j], col(0)))
            } else {
                None
            };
            let shift = match (left, right) {
                (Some((a, y0)), Some((b, y2))) => parabola_vertex(a, b, y0, col(j), y2),
                _ => 0.0,
            };
            fold_pi(th[j] + shift)
        })
        .collect();
    SpectrumSeries::real(sg.grid.clone(), out, Normalization::Absolute, SpectrumKind::Angle)
}

/// Frequency span between the 90 degree crossing of a trajectory and the
/// first point above it where the angle has turned by 45 degrees (rad/s).
pub fn empirical_sql_bandwidth(traj: &SpectrumSeries) -> Option<f64> {
    let w = traj.grid.values();
    let d: Vec<f64> = traj.re().iter().map(|&p| angle_diff_mod_pi(p, FRAC_PI_2)).collect();
    let i = (0..d.len().saturating_sub(1)).find(|&i| {
        d[i].signum() != d[i + 1].signum() && d[i].abs() < FRAC_PI_4 && d[i + 1].abs() < FRAC_PI_4
    })?;
    let f90 = w[i] + (w[i + 1] - w[i]) * d[i].abs() / (d[i].abs() + d[i + 1].abs());
    let j = (i + 1..d.len()).find(|&j| d[j].abs() >= FRAC_PI_4)?;
    let (a, b) = (d[j - 1].abs(), d[j].abs());
    let f45 = if b > a {
        w[j - 1] + (w[j] - w[j - 1]) * (FRAC_PI_4 - a) / (b - a)
    } else {
        w[j]
    };
    Some(f45 - f90)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sn(grid: &FrequencyGrid, v: Vec<f64>) -> SpectrumSeries {
        SpectrumSeries::real(grid.clone(), v, Normalization::ShotNoiseUnits, SpectrumKind::Psd).unwrap()
    }

    #[test]
    fn db_values() {
        let g = FrequencyGrid::new(vec![1.0, 2.0]).unwrap();
        let s = SpectrumSeries::real(g, vec![2.0, 1.0], Normalization::Absolute, SpectrumKind::Psd).unwrap();
        let d = db_normalize(&s, 2.0).unwrap().re();
        assert_eq!(d[0], 0.0);
        assert!((d[1] + 3.0103).abs() < 1e-4);
        assert!(db_normalize(&s, 0.0).is_err());
    }

    #[test]
    fn parabola_recovers_exact_vertex() {
        let f = |x: f64| 3.0 * (x - 0.2).powi(2) + 1.0;
        let v = parabola_vertex(-1.0, 2.0, f(-1.0), f(0.0), f(2.0));
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn trajectory_of_synthetic_cosine_law() {
        // S(theta) = 1 - 0.5 cos^2(theta - phi): minimum at phi, smooth in theta
        let g = FrequencyGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let phis = [0.3, 1.6, 3.0];
        let entries: Vec<(f64, SpectrumSeries)> = (0..18)
            .map(|i| {
                let t = (i as f64 * 10.0).to_radians();
                (t, sn(&g, phis.iter().map(|p| 1.0 - 0.5 * (t - p).cos().powi(2)).collect()))
            })
            .collect();
        let sg = build_spectrogram(&entries).unwrap();
        let tr = extract_angle_trajectory(&sg).unwrap().re();
        for (got, want) in tr.iter().zip(phis) {
            assert!(angle_diff_mod_pi(*got, want).abs().to_degrees() < 1.0, "{got} vs {want}");
        }
    }

    #[test]
    fn flat_spectrogram_gives_constant_trajectory() {
        let g = FrequencyGrid::new((1..50).map(f64::from).collect()).unwrap();
        let entries: Vec<(f64, SpectrumSeries)> = [0.0f64, 45.0, 90.0, 135.0]
            .iter()
            .map(|d| {
                let t = d.to_radians();
                (t, sn(&g, vec![1.0 - 0.5 * (t - 0.5).cos().powi(2); 49]))
            })
            .collect();
        let tr = extract_angle_trajectory(&build_spectrogram(&entries).unwrap()).unwrap().re();
        assert!(tr.iter().all(|&p| p == tr[0]));
    }

    #[test]
    fn duplicate_and_too_few_angles() {
        let g = FrequencyGrid::new(vec![1.0]).unwrap();
        let s = sn(&g, vec![1.0]);
        let e = |d: f64| (d.to_radians(), s.clone());
        assert!(matches!(build_spectrogram(&[e(0.0), e(10.0), e(180.0)]), Err(Error::DuplicateAngle(_))));
        assert!(matches!(build_spectrogram(&[e(0.0), e(10.0), e(10.0)]), Err(Error::DuplicateAngle(_))));
        assert!(build_spectrogram(&[e(0.0), e(10.0)]).is_err());
    }

    #[test]
    fn sql_crossing() {
        // atan law: angle = 90 - atan((w - 10)/2) mapped, 45 degrees at w = 12
        let g = FrequencyGrid::new((1..400).map(|i| i as f64 * 0.05).collect()).unwrap();
        let v = g.iter().map(|w| fold_pi(FRAC_PI_2 - ((w - 10.0) / 2.0).atan())).collect();
        let tr = SpectrumSeries::real(g, v, Normalization::Absolute, SpectrumKind::Angle).unwrap();
        let d = empirical_sql_bandwidth(&tr).unwrap();
        assert!((d - 2.0).abs() < 1e-3, "{d}");
    }
}
