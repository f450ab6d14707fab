//! Bounded Nelder-Mead with seeded jittered restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimplexOptions {
    /// Evaluation budget per run.
    pub max_evals: usize,
    /// Extra runs from jittered starts.
    pub restarts: usize,
    /// Restart jitter as a fraction of each bound width.
    pub jitter: f64,
    /// Relative improvement of the best value over one cycle of `n + 1`
    /// iterations below which a run has converged.
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            restarts: 5,
            jitter: 0.1,
            rel_tol: 1e-9,
            abs_tol: 1e-20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Scaled<'a, F> {
    f: &'a F,
    lo: &'a [f64],
    width: Vec<f64>,
}

impl<F: Fn(&[f64]) -> f64> Scaled<'_, F> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo)
            .zip(&self.width)
            .map(|((u, l), w)| l + u.clamp(0.0, 1.0) * w)
            .collect()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        let v = (self.f)(&self.to_x(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn clamp01(u: &mut [f64]) {
    for v in u {
        *v = v.clamp(0.0, 1.0);
    }
}

fn run<F: Fn(&[f64]) -> f64>(s: &Scaled<F>, u0: &[f64], opts: &SimplexOptions) -> Minimum {
    let n = u0.len();
    let mut pts: Vec<Vec<f64>> = vec![u0.to_vec()];
    for i in 0..n {
        let mut p = u0.to_vec();
        p[i] += if p[i] + 0.05 <= 1.0 { 0.05 } else { -0.05 };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| s.eval(p)).collect();
    let mut evals = n + 1;
    let mut iter = 0usize;
    let mut cycle_best = f64::INFINITY;
    let mut last_best = f64::INFINITY;
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let best = vals[0];
        debug_assert!(best <= last_best, "simplex best value increased");
        last_best = best;

        if iter % (n + 1) == 0 {
            if cycle_best.is_finite() && cycle_best - best <= opts.rel_tol * best.abs() + opts.abs_tol {
                let spread = vals[n] - best;
                if spread <= opts.rel_tol.sqrt() * best.abs() + opts.abs_tol {
                    converged = true;
                    break;
                }
            }
            cycle_best = best;
        }
        iter += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect();
            clamp01(&mut p);
            p
        };
        let xr = along(1.0);
        let fr = s.eval(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = s.eval(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let p = along(0.5);
            let v = s.eval(&p);
            (p, v)
        } else {
            let p = along(-0.5);
            let v = s.eval(&p);
            (p, v)
        };
        evals += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        let b = pts[0].clone();
        for i in 1..=n {
            for (p, bj) in pts[i].iter_mut().zip(&b) {
                *p = bj + 0.5 * (*p - bj);
            }
            vals[i] = s.eval(&pts[i]);
        }
        evals += n;
    }
    let k = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty simplex");
    Minimum {
        x: s.to_x(&pts[k]),
        value: vals[k],
        evals,
        converged,
    }
}

/// Minimizes `f` over the box `[lo, hi]`, starting from `x0` plus
/// `opts.restarts` jittered starts. Runs execute in parallel; the best value
/// wins, ties going to the earliest run. Evaluations are summed over runs.
pub fn minimize_bounded<F>(f: &F, lo: &[f64], hi: &[f64], x0: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let width: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
    let s = Scaled { f, lo, width };
    let u0: Vec<f64> = x0
        .iter()
        .zip(lo)
        .zip(&s.width)
        .map(|((x, l), w)| if *w > 0.0 { ((x - l) / w).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    if u0.is_empty() {
        return Minimum {
            x: Vec::new(),
            value: f(&[]),
            evals: 1,
            converged: true,
        };
    }
    let runs: Vec<Minimum> = (0..=opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut start = u0.clone();
            if r > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                for v in start.iter_mut() {
                    *v += rng.random_range(-opts.jitter..=opts.jitter);
                }
                clamp01(&mut start);
            }
            run(&s, &start, opts)
        })
        .collect();
    let evals = runs.iter().map(|m| m.evals).sum();
    let mut best = runs
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("at least one run");
    best.evals = evals;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize_bounded(&f, &[-2.0, -1.0], &[2.0, 3.0], &[-1.2, 1.0], &SimplexOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn minimum_on_the_bound() {
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2);
        let m = minimize_bounded(&f, &[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.5], &SimplexOptions::default());
        assert!(m.x[0].abs() < 1e-6 && (m.x[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn deterministic_under_threads() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) * (1.0 + x[1].sin().powi(2)) + (x[1] - 2.0).powi(2);
        let opts = SimplexOptions {
            seed: 42,
            ..Default::default()
        };
        let go = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| minimize_bounded(&f, &[-5.0, -5.0], &[5.0, 5.0], &[1.0, 1.0], &opts))
        };
        assert_eq!(go(1), go(3));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.123).powi(2)).sum::<f64>();
        let opts = SimplexOptions {
            max_evals: 20,
            restarts: 0,
            ..Default::default()
        };
        let m = minimize_bounded(&f, &[-1.0; 5], &[1.0; 5], &[0.9; 5], &opts);
        assert!(!m.converged);
        assert!(m.evals >= 20);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] > 0.8 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let m = minimize_bounded(&f, &[0.0], &[1.0], &[0.7], &SimplexOptions::default());
        assert!((m.x[0] - 0.5).abs() < 1e-4);
    }
}
