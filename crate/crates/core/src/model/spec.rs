use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::validate::{validate_coefficients, ValidationOptions};
use crate::model::ParticleCloud;

/// Structural facts a model can declare so that engines may skip work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelTraits {
    /// Coefficients do not depend on the measure argument.
    pub measure_free: bool,
    /// Coefficients do not depend on the state `x`.
    pub state_independent: bool,
    /// Coefficients do not depend explicitly on `t`.
    pub time_homogeneous: bool,
}

/// Interaction partners for the mean-field pairing sums.
#[derive(Debug, Clone)]
pub enum Partners {
    /// Every particle of the cloud, with its own weight.
    All,
    /// A subset of particle indices with replacement weights summing to one.
    Subset { indices: Vec<usize>, weights: Vec<f64> },
}

impl Partners {
    pub(crate) fn for_each(&self, mu: &ParticleCloud, mut f: impl FnMut(usize, f64)) {
        match self {
            Partners::All => {
                for j in 0..mu.len() {
                    f(j, mu.weight(j));
                }
            }
            Partners::Subset { indices, weights } => {
                for (&j, &w) in indices.iter().zip(weights) {
                    f(j, w);
                }
            }
        }
    }
}

/// Drift and diffusion of a McKean-Vlasov SDE together with their spatial and
/// Lions derivatives.
///
/// Matrix conventions: `drift_grad[(i, j)] = d b_i / d x_j`;
/// `drift_lions(.., y)[(i, k)]` is the `k`-th component of `D^L b_i(x, .)(mu)(y)`;
/// `diffusion_lions(.., y)[k]` is the `d x m` matrix `D^L sigma(x, .)(mu)(y)` contracted
/// with `e_k`.
pub trait Coefficients: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64>;

    fn diffusion(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64>;

    fn drift_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64>;

    /// Directional derivative `nabla_v sigma(., mu)(x)`.
    fn diffusion_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud, v: &[f64]) -> DMatrix<f64>;

    fn drift_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> DMatrix<f64>;

    fn diffusion_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> Vec<DMatrix<f64>>;

    /// The increasing function `K_t` bounding the coefficients.
    fn bound(&self, t: f64) -> f64;

    fn traits(&self) -> ModelTraits {
        ModelTraits::default()
    }

    /// For every particle `i` of `mu`, writes
    /// `sum_j w_j D^L b(t, X_i, .)(mu)(X_j) v_j` into `out[i*d..(i+1)*d]`.
    fn drift_lions_action(
        &self,
        t: f64,
        mu: &ParticleCloud,
        partners: &Partners,
        v: &[f64],
        out: &mut [f64],
    ) {
        let d = mu.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..mu.len() {
            let xi = mu.point(i);
            let oi = &mut out[i * d..(i + 1) * d];
            partners.for_each(mu, |j, w| {
                let dl = self.drift_lions(t, xi, mu, mu.point(j));
                let vj = &v[j * d..(j + 1) * d];
                for a in 0..d {
                    oi[a] += w * (0..d).map(|k| dl[(a, k)] * vj[k]).sum::<f64>();
                }
            });
        }
    }

    /// For every particle `i`, returns `sum_j w_j sum_k (v_j)_k D^L sigma(t, X_i, .)(mu)(X_j)[k]`.
    fn diffusion_lions_action(
        &self,
        t: f64,
        mu: &ParticleCloud,
        partners: &Partners,
        v: &[f64],
        noise_dim: usize,
    ) -> Vec<DMatrix<f64>> {
        let d = mu.dim();
        (0..mu.len())
            .map(|i| {
                let xi = mu.point(i);
                let mut acc = DMatrix::zeros(d, noise_dim);
                partners.for_each(mu, |j, w| {
                    let tensor = self.diffusion_lions(t, xi, mu, mu.point(j));
                    let vj = &v[j * d..(j + 1) * d];
                    for (k, slice) in tensor.iter().enumerate() {
                        acc += slice * (w * vj[k]);
                    }
                });
                acc
            })
            .collect()
    }
}

/// A registered model: named coefficients of known dimensions that passed the
/// coefficient audit.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    noise_dim: usize,
    coeffs: Arc<dyn Coefficients>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Registers a model after auditing it with default options.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        coeffs: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        Self::with_validation(name, dim, noise_dim, coeffs, &ValidationOptions::default())
    }

    pub fn with_validation(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        coeffs: Arc<dyn Coefficients>,
        opts: &ValidationOptions,
    ) -> Result<Self> {
        let name = name.into();
        if dim == 0 || noise_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim".into(),
                reason: "state and noise dimensions must be positive".into(),
            });
        }
        validate_coefficients(&name, dim, noise_dim, coeffs.as_ref(), opts)?;
        Ok(Self { name, dim, noise_dim, coeffs })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn traits(&self) -> ModelTraits {
        self.coeffs.traits()
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coeffs.as_ref()
    }

    pub fn drift(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64> {
        self.coeffs.drift(t, x, mu)
    }

    pub fn diffusion(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> {
        self.coeffs.diffusion(t, x, mu)
    }

    /// `sigma sigma^T` at `(t, x, mu)`.
    pub fn diffusion_cov(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> {
        let s = self.coeffs.diffusion(t, x, mu);
        &s * s.transpose()
    }

    pub fn drift_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> {
        self.coeffs.drift_grad(t, x, mu)
    }

    pub fn diffusion_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud, v: &[f64]) -> DMatrix<f64> {
        self.coeffs.diffusion_grad(t, x, mu, v)
    }

    pub fn drift_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> DMatrix<f64> {
        self.coeffs.drift_lions(t, x, mu, y)
    }

    pub fn diffusion_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.coeffs.diffusion_lions(t, x, mu, y)
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.coeffs.bound(t)
    }
}
