//! Frozen Gaussian kernels, the reference kernel and the parametrix series.

mod frozen;
mod parametrix;
mod quadrature;
mod reference;
mod table;

pub use frozen::{frozen_density, frozen_density_grad, frozen_density_hess, frozen_params, FrozenParams};
pub use parametrix::{
    parametrix_H, parametrix_H_m, parametrix_density, write_density_csv, DensityProfile, DensityResult, DensityRow,
    ParametrixEngine, COVERAGE_LIMIT, MAX_ORDER,
};
pub use quadrature::{GaussLegendre, QuadratureGrid};
pub use reference::{beta_product_identity, reference_kernel, ReferenceKernel};
