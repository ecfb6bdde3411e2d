use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Dominating Gaussian kernel `h_T(s, y) = (8 pi s K_T)^{-d/2} exp(-|y|^2 / (8 s K_T))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceKernel {
    pub horizon: f64,
    pub k_t: f64,
}

impl ReferenceKernel {
    pub fn new(horizon: f64, k_t: f64) -> Result<Self> {
        if !(k_t > 0.0 && k_t.is_finite()) {
            return Err(Error::InvalidParameter { name: "K_T".into(), reason: "must be positive".into() });
        }
        Ok(Self { horizon, k_t })
    }

    /// Variance per axis at elapsed time `s`.
    pub fn variance(&self, s: f64) -> f64 {
        4.0 * s * self.k_t
    }
}

pub fn reference_kernel(rk: &ReferenceKernel, s: f64, y: &[f64]) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidTimes(format!("reference kernel needs s > 0, got {s}")));
    }
    let c = 8.0 * s * rk.k_t;
    let d = y.len() as f64;
    let r2: f64 = y.iter().map(|v| v * v).sum();
    Ok((std::f64::consts::PI * c).powf(-0.5 * d) * (-r2 / c).exp())
}

/// `prod_{i=1}^{m-1} B(i/2, 1/2)` and `Gamma(1/2)^m / Gamma(m/2)`, both through log-Gamma.
pub fn beta_product_identity(m: usize) -> (f64, f64) {
    assert!(m >= 1, "beta_product_identity needs m >= 1");
    let lg_half = ln_gamma(0.5);
    let lhs: f64 = (1..m)
        .map(|i| {
            let a = i as f64 / 2.0;
            (ln_gamma(a) + lg_half - ln_gamma(a + 0.5)).exp()
        })
        .product();
    let rhs = (m as f64 * lg_half - ln_gamma(m as f64 / 2.0)).exp();
    (lhs, rhs)
}
