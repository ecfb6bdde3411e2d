//! Heat-kernel parametrix tools for McKean-Vlasov SDEs: particle simulation,
//! frozen Gaussian kernels, parametrix densities, Bismut gradients, Lions
//! derivatives and distance bounds.

// Negated float comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    builtin_model, push_forward, Coefficients, MeasureFlow, ModelParams, ModelSpec, ParticleCloud,
    PerturbationMap,
};
pub use estimators::{GradientEstimate, ResultRecord, TestFunction, VarMethod};
pub use harness::{Experiment, RunConfig};
pub use kernels::{ParametrixEngine, QuadratureGrid};
pub use solver::{InitDistribution, SolverConfig};
