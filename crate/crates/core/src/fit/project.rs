use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::optimal_conditional_spectrum;
use crate::params::{DetectionConfig, EprParams, SpinParams};
use crate::spectrum::{FrequencyGrid, SpectrumSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImprovementScenario {
    pub n_th_divisor: f64,
    pub bb_readout_divisor: f64,
}

/// Conditional spectrum at the per-bin optimal angle with the thermal
/// occupation `n_th` and the broadband readout rate divided down. `n_bb` is
/// left unchanged. Divisors may be infinite.
pub fn project_improvement(
    spin: &SpinParams,
    epr: &EprParams,
    det: &DetectionConfig,
    grid: &FrequencyGrid,
    scenario: &ImprovementScenario,
) -> Result<SpectrumSeries> {
    for (name, d) in [("n_th_divisor", scenario.n_th_divisor), ("bb_readout_divisor", scenario.bb_readout_divisor)] {
        if !(d >= 1.0) {
            return Err(invalid(name, format!("must be >= 1, got {d}")));
        }
    }
    let mut s = *spin;
    s.n_th /= scenario.n_th_divisor;
    s.bb_readout /= scenario.bb_readout_divisor;
    optimal_conditional_spectrum(&s, epr, det, grid)
}
