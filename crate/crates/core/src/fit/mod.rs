//! Chi-squared parameter recovery, filter-cavity equivalence and
//! improvement projections.

mod cavity;
mod chi2;
mod project;
mod simplex;

pub use cavity::fit_cavity_equivalent;
pub use chi2::{fit_model, FitProblem, FitResult, FreeParam, Observable, Observation, ParamName, ParamSet, ASSUMED_RELATIVE_SD,
    VARIANCE_SMOOTHING_BINS, smooth_variance};
pub use project::{project_improvement, ImprovementScenario};
pub use simplex::{minimize_bounded, Minimum, SimplexOptions};
