//! Particle, decoupled and variation solvers (Euler-Maruyama).

mod config;
mod decoupled;
mod init;
mod noise;
mod particles;

pub use config::SolverConfig;
pub(crate) use config::StepGrid;
pub use decoupled::{solve_decoupled, variation_frozen, PathSamples, VariationSamples};
pub(crate) use decoupled::{path_rng, run_path, Carry};
pub use init::InitDistribution;
pub use noise::{stream_rng, Substream};
pub use particles::{initial_particles, solve_mckean_vlasov, variation_meanfield, MeanFieldVariation};
