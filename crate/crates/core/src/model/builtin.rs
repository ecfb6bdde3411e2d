//! Built-in models. Each one satisfies the coefficient bounds on the box
//! `[-radius, radius]^d`, which is where the audit probes them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::spec::{Coefficients, ModelSpec, ModelTraits, Partners};
use crate::model::ParticleCloud;

pub const BUILTIN_MODELS: [&str; 5] = ["constant", "brownian", "ou", "meanfield_ou", "bounded_interaction"];

/// Parameters shared by the built-in models. Unused fields are ignored by
/// models that do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub dim: usize,
    /// Mean-reversion rate (`ou`, `meanfield_ou`).
    pub alpha: f64,
    /// Noise scale `s0`.
    pub sigma: f64,
    /// Constant drift value (`constant`).
    pub drift: f64,
    /// Confinement strength of `b0(x) = -beta tanh(x)` (`bounded_interaction`).
    pub beta: f64,
    /// Interaction strength of `k(x, y) = kappa sin(y - x)` (`bounded_interaction`).
    pub kappa: f64,
    /// Measure dependence of the noise, `|gamma| < 1` (`bounded_interaction`).
    pub gamma: f64,
    /// Half-width of the box on which the bounds hold.
    pub radius: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            dim: 1,
            alpha: 1.0,
            sigma: 1.0,
            drift: 0.5,
            beta: 0.5,
            kappa: 0.5,
            gamma: 0.0,
            radius: 3.0,
        }
    }
}

fn param_err(name: &str, reason: &str) -> Error {
    Error::InvalidParameter { name: name.into(), reason: reason.into() }
}

impl ModelParams {
    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(param_err("dim", "must be positive"));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("drift", self.drift),
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("radius", self.radius),
        ] {
            if !v.is_finite() {
                return Err(param_err(name, "must be finite"));
            }
        }
        if self.sigma <= 0.0 {
            return Err(param_err("sigma", "must be positive (uniform ellipticity)"));
        }
        if self.alpha < 0.0 {
            return Err(param_err("alpha", "must be nonnegative"));
        }
        if self.gamma.abs() >= 1.0 {
            return Err(param_err("gamma", "|gamma| < 1 is required for ellipticity"));
        }
        if self.radius <= 0.0 {
            return Err(param_err("radius", "must be positive"));
        }
        Ok(())
    }

    fn root_dim(&self) -> f64 {
        (self.dim as f64).sqrt()
    }
}

fn scaled_identity(d: usize, s: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal_element(d, d, s)
}

fn zero_tensor(d: usize, m: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::zeros(d, m); d]
}

fn zero_diffusion_action(mu: &ParticleCloud, m: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::zeros(mu.dim(), m); mu.len()]
}

/// `b = c`, `sigma = s0 Id`.
struct Constant {
    d: usize,
    c: f64,
    s0: f64,
    k: f64,
}

impl Coefficients for Constant {
    fn drift(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DVector<f64> {
        DVector::from_element(self.d, self.c)
    }
    fn diffusion(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
        scaled_identity(self.d, self.s0)
    }
    fn drift_grad(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }
    fn diffusion_grad(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }
    fn drift_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }
    fn diffusion_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> Vec<DMatrix<f64>> {
        zero_tensor(self.d, self.d)
    }
    fn bound(&self, _: f64) -> f64 {
        self.k
    }
    fn traits(&self) -> ModelTraits {
        ModelTraits { measure_free: true, state_independent: true, time_homogeneous: true }
    }
    fn drift_lions_action(&self, _: f64, _: &ParticleCloud, _: &Partners, _: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn diffusion_lions_action(&self, _: f64, mu: &ParticleCloud, _: &Partners, _: &[f64], m: usize) -> Vec<DMatrix<f64>> {
        zero_diffusion_action(mu, m)
    }
}

/// `b = -alpha (x - centre)`, `sigma = s0 Id`, with `centre = 0` (`ou`) or the
/// cloud mean (`meanfield_ou`).
struct LinearReversion {
    d: usize,
    alpha: f64,
    s0: f64,
    mean_field: bool,
    k: f64,
}

impl Coefficients for LinearReversion {
    fn drift(&self, _: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64> {
        if self.mean_field {
            let m = mu.mean();
            DVector::from_iterator(self.d, x.iter().zip(m.iter()).map(|(xi, mi)| -self.alpha * (xi - mi)))
        } else {
            DVector::from_iterator(self.d, x.iter().map(|xi| -self.alpha * xi))
        }
    }
    fn diffusion(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
        scaled_identity(self.d, self.s0)
    }
    fn drift_grad(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
        scaled_identity(self.d, -self.alpha)
    }
    fn diffusion_grad(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }
    fn drift_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
        if self.mean_field {
            scaled_identity(self.d, self.alpha)
        } else {
            DMatrix::zeros(self.d, self.d)
        }
    }
    fn diffusion_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> Vec<DMatrix<f64>> {
        zero_tensor(self.d, self.d)
    }
    fn bound(&self, _: f64) -> f64 {
        self.k
    }
    fn traits(&self) -> ModelTraits {
        ModelTraits { measure_free: !self.mean_field, state_independent: false, time_homogeneous: true }
    }
    fn drift_lions_action(&self, _: f64, mu: &ParticleCloud, partners: &Partners, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if !self.mean_field {
            return;
        }
        // D^L b is the constant alpha Id, so the pairing is alpha times the
        // weighted mean of v, identical for every particle.
        let d = self.d;
        let mut vbar = vec![0.0; d];
        partners.for_each(mu, |j, w| {
            for k in 0..d {
                vbar[k] += w * v[j * d + k];
            }
        });
        for oi in out.chunks_exact_mut(d) {
            for k in 0..d {
                oi[k] = self.alpha * vbar[k];
            }
        }
    }
    fn diffusion_lions_action(&self, _: f64, mu: &ParticleCloud, _: &Partners, _: &[f64], m: usize) -> Vec<DMatrix<f64>> {
        zero_diffusion_action(mu, m)
    }
}

/// `b_i = -beta tanh(x_i) + kappa E sin(Y_i - x_i)`,
/// `sigma_ii = s0 (1 + gamma E tanh(Y_i - x_i))`, `Y ~ mu`.
struct BoundedInteraction {
    d: usize,
    beta: f64,
    kappa: f64,
    s0: f64,
    gamma: f64,
    k: f64,
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

impl BoundedInteraction {
    fn sigma_diag(&self, x: &[f64], mu: &ParticleCloud) -> Vec<f64> {
        (0..self.d)
            .map(|i| self.s0 * (1.0 + self.gamma * mu.expect(|y| (y[i] - x[i]).tanh())))
            .collect()
    }
}

impl Coefficients for BoundedInteraction {
    fn drift(&self, _: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64> {
        DVector::from_iterator(
            self.d,
            (0..self.d).map(|i| -self.beta * x[i].tanh() + self.kappa * mu.expect(|y| (y[i] - x[i]).sin())),
        )
    }
    fn diffusion(&self, _: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.sigma_diag(x, mu)))
    }
    fn drift_grad(&self, _: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> {
        let diag = (0..self.d).map(|i| -self.beta * sech2(x[i]) - self.kappa * mu.expect(|y| (y[i] - x[i]).cos()));
        DMatrix::from_diagonal(&DVector::from_iterator(self.d, diag))
    }
    fn diffusion_grad(&self, _: f64, x: &[f64], mu: &ParticleCloud, v: &[f64]) -> DMatrix<f64> {
        let diag = (0..self.d).map(|i| -self.s0 * self.gamma * v[i] * mu.expect(|y| sech2(y[i] - x[i])));
        DMatrix::from_diagonal(&DVector::from_iterator(self.d, diag))
    }
    fn drift_lions(&self, _: f64, x: &[f64], _: &ParticleCloud, y: &[f64]) -> DMatrix<f64> {
        let diag = (0..self.d).map(|i| self.kappa * (y[i] - x[i]).cos());
        DMatrix::from_diagonal(&DVector::from_iterator(self.d, diag))
    }
    fn diffusion_lions(&self, _: f64, x: &[f64], _: &ParticleCloud, y: &[f64]) -> Vec<DMatrix<f64>> {
        (0..self.d)
            .map(|k| {
                let mut m = DMatrix::zeros(self.d, self.d);
                m[(k, k)] = self.s0 * self.gamma * sech2(y[k] - x[k]);
                m
            })
            .collect()
    }
    fn bound(&self, _: f64) -> f64 {
        self.k
    }
    fn traits(&self) -> ModelTraits {
        ModelTraits { measure_free: false, state_independent: false, time_homogeneous: true }
    }
    fn diffusion_lions_action(&self, t: f64, mu: &ParticleCloud, partners: &Partners, v: &[f64], m: usize) -> Vec<DMatrix<f64>> {
        if self.gamma == 0.0 {
            return zero_diffusion_action(mu, m);
        }
        let d = self.d;
        (0..mu.len())
            .map(|i| {
                let xi = mu.point(i);
                let mut acc = DMatrix::zeros(d, m);
                partners.for_each(mu, |j, w| {
                    let yj = mu.point(j);
                    for k in 0..d {
                        acc[(k, k)] += w * v[j * d + k] * self.s0 * self.gamma * sech2(yj[k] - xi[k]);
                    }
                });
                let _ = t;
                acc
            })
            .collect()
    }
}

/// Builds one of the named built-in models and audits it.
pub fn builtin_model(name: &str, params: &ModelParams) -> Result<ModelSpec> {
    params.check()?;
    let d = params.dim;
    let rd = params.root_dim();
    let s0 = params.sigma;
    let ellip = (s0 * s0).max(1.0 / (s0 * s0));
    let reach = params.radius * rd;
    let coeffs: Arc<dyn Coefficients> = match name {
        "constant" => Arc::new(Constant { d, c: params.drift, s0, k: ellip.max(params.drift.abs() * rd) }),
        "brownian" => Arc::new(Constant { d, c: 0.0, s0: 1.0, k: 1.0 }),
        "ou" => Arc::new(LinearReversion {
            d,
            alpha: params.alpha,
            s0,
            mean_field: false,
            k: ellip.max(params.alpha * (reach + rd)),
        }),
        "meanfield_ou" => Arc::new(LinearReversion {
            d,
            alpha: params.alpha,
            s0,
            mean_field: true,
            k: ellip.max(params.alpha * (2.0 * reach + 2.0 * rd)),
        }),
        "bounded_interaction" => {
            let g = params.gamma.abs();
            let bk = params.beta + params.kappa;
            let k = (2.0 * bk * rd + params.kappa * rd + 2.0 * d as f64 * s0 * s0 * g * g)
                .max(s0 * s0 * (1.0 + g).powi(2))
                .max(1.0 / (s0 * s0 * (1.0 - g).powi(2)));
            Arc::new(BoundedInteraction { d, beta: params.beta, kappa: params.kappa, s0, gamma: params.gamma, k })
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    let opts = crate::model::ValidationOptions { radius: params.radius, ..Default::default() };
    ModelSpec::with_validation(name, d, d, coeffs, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{push_forward, PerturbationMap};

    fn p1() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn brownian_is_trivial() {
        let m = builtin_model("brownian", &p1()).unwrap();
        let c = ParticleCloud::uniform(1, vec![-1.0, 2.0]).unwrap();
        assert_eq!(m.drift(0.3, &[0.7], &c)[0], 0.0);
        assert_eq!(m.diffusion(0.3, &[0.7], &c)[(0, 0)], 1.0);
        assert_eq!(m.drift_grad(0.3, &[0.7], &c)[(0, 0)], 0.0);
        assert_eq!(m.drift_lions(0.3, &[0.7], &c, &[1.0])[(0, 0)], 0.0);
        assert_eq!(m.diffusion_grad(0.3, &[0.7], &c, &[1.0])[(0, 0)], 0.0);
    }

    #[test]
    fn ou_is_measure_free() {
        let m = builtin_model("ou", &p1()).unwrap();
        let c = ParticleCloud::uniform(1, vec![-1.0, 2.0]).unwrap();
        assert_eq!(m.drift(0.0, &[1.5], &c)[0], -1.5);
        assert_eq!(m.diffusion(0.0, &[1.5], &c)[(0, 0)], 1.0);
        assert_eq!(m.drift_grad(0.0, &[1.5], &c)[(0, 0)], -1.0);
        assert_eq!(m.drift_lions(0.0, &[1.5], &c, &[0.0])[(0, 0)], 0.0);
        assert!(m.traits().measure_free);
    }

    #[test]
    fn meanfield_ou_lions_derivative_matches_push_forward() {
        let m = builtin_model("meanfield_ou", &p1()).unwrap();
        let c = ParticleCloud::new(1, vec![-1.0, 0.4, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let x = [0.3];
        let eps = 1e-6;
        let phi = PerturbationMap::constant(vec![1.0]);
        let plus = push_forward(&c, &phi, eps).unwrap();
        let minus = push_forward(&c, &phi, -eps).unwrap();
        let fd = (m.drift(0.0, &x, &plus)[0] - m.drift(0.0, &x, &minus)[0]) / (2.0 * eps);
        assert!((fd - 1.0).abs() < 1e-6, "fd = {fd}");
        for y in [-3.0, 0.0, 5.0] {
            assert_eq!(m.drift_lions(0.0, &x, &c, &[y])[(0, 0)], 1.0);
        }
    }

    #[test]
    fn zero_noise_is_rejected() {
        let p = ModelParams { sigma: 0.0, ..p1() };
        assert!(matches!(builtin_model("ou", &p), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(builtin_model("heston", &p1()), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn every_builtin_passes_the_audit_in_two_dimensions() {
        let p = ModelParams { dim: 2, gamma: 0.3, ..p1() };
        for name in BUILTIN_MODELS {
            let m = builtin_model(name, &p).unwrap();
            assert_eq!(m.dim(), 2);
        }
    }

    #[test]
    fn specialised_pairings_match_the_generic_sums() {
        struct Generic<'a>(&'a dyn Coefficients);
        impl Coefficients for Generic<'_> {
            fn drift(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64> { self.0.drift(t, x, mu) }
            fn diffusion(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> { self.0.diffusion(t, x, mu) }
            fn drift_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud) -> DMatrix<f64> { self.0.drift_grad(t, x, mu) }
            fn diffusion_grad(&self, t: f64, x: &[f64], mu: &ParticleCloud, v: &[f64]) -> DMatrix<f64> { self.0.diffusion_grad(t, x, mu, v) }
            fn drift_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> DMatrix<f64> { self.0.drift_lions(t, x, mu, y) }
            fn diffusion_lions(&self, t: f64, x: &[f64], mu: &ParticleCloud, y: &[f64]) -> Vec<DMatrix<f64>> { self.0.diffusion_lions(t, x, mu, y) }
            fn bound(&self, t: f64) -> f64 { self.0.bound(t) }
        }
        let p = ModelParams { dim: 2, gamma: 0.4, ..p1() };
        let c = ParticleCloud::new(2, vec![0.1, -0.3, 1.2, 0.8, -0.7, 0.2], vec![0.5, 0.25, 0.25]).unwrap();
        let v = vec![0.3, -1.0, 2.0, 0.5, -0.2, 0.9];
        let subset = Partners::Subset { indices: vec![2, 0], weights: vec![0.4, 0.6] };
        for name in BUILTIN_MODELS {
            let m = builtin_model(name, &p).unwrap();
            let g = Generic(m.coefficients());
            for partners in [Partners::All, subset.clone()] {
                let mut fast = vec![0.0; 6];
                let mut slow = vec![0.0; 6];
                m.coefficients().drift_lions_action(0.0, &c, &partners, &v, &mut fast);
                g.drift_lions_action(0.0, &c, &partners, &v, &mut slow);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12, "{name}: {a} vs {b}");
                }
                let fs = m.coefficients().diffusion_lions_action(0.0, &c, &partners, &v, 2);
                let gs = g.diffusion_lions_action(0.0, &c, &partners, &v, 2);
                for (a, b) in fs.iter().zip(&gs) {
                    assert!((a - b).norm() < 1e-12, "{name}");
                }
            }
        }
    }
}
