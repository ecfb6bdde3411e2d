//! Model class, empirical measures and push-forward perturbations.

mod builtin;
mod cloud;
mod flow;
mod perturbation;
mod spec;
mod validate;

pub use builtin::{builtin_model, ModelParams, BUILTIN_MODELS};
pub use cloud::{cloud_cov, cloud_mean, ParticleCloud};
pub use flow::MeasureFlow;
pub(crate) use flow::time_slack;
pub use perturbation::{push_forward, PerturbationMap};
pub use spec::{Coefficients, ModelSpec, ModelTraits, Partners};
pub use validate::{validate_coefficients, ValidationOptions};
