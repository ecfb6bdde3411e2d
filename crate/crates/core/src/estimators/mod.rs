//! Monte Carlo and quadrature estimators: Bismut gradients, Lions derivatives,
//! Wasserstein and variation distances, and the distance-bound table.

mod bounds;
mod distance;
mod functions;
mod gradient;
mod lions;
mod record;
mod stats;

pub use bounds::{
    bound_check_est2, shift_families, summarize, BoundOptions, BoundRow, FamilySummary, InitPair, NARROW_SD,
    PARAMETRIX_MAX_ATOMS,
};
pub use distance::{
    kde_on_grid, silverman_bandwidth, terminal_density, var_distance, w2_distance, VarMethod, ASSIGNMENT_LIMIT,
    VAR_COVERAGE_LIMIT,
};
pub use functions::TestFunction;
pub use gradient::{
    bismut_gradient, bismut_gradient_multi, decoupled_expectation, fd_gradient, semigroup_eval, semigroup_eval_on,
    SemigroupEval,
};
pub use lions::{derivative_decomposition, lions_derivative_fd, Decomposition, LionsEstimate, DEFAULT_EPS};
pub use record::{append_records, ResultRecord};
pub use stats::{Estimate, GradientEstimate};
