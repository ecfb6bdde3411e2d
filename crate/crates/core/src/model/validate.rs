//! Coefficient audit run when a model is registered.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::spec::Coefficients;
use crate::model::{push_forward, ParticleCloud, PerturbationMap};

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Number of random `(t, x, cloud)` probes; at least 100.
    pub samples: usize,
    pub seed: u64,
    /// Probes are drawn from `[-radius, radius]^d`.
    pub radius: f64,
    /// Probe times are drawn from `[0, horizon]`.
    pub horizon: f64,
    /// Largest probe cloud size.
    pub max_cloud: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { samples: 100, seed: 0x5eed, radius: 3.0, horizon: 1.0, max_cloud: 6 }
    }
}

const GRAD_STEP: f64 = 1e-5;
const GRAD_RTOL: f64 = 1e-4;
const LIONS_EPS: f64 = 1e-4;
const LIONS_RTOL: f64 = 1e-2;
const ABS_FLOOR: f64 = 1e-6;

struct Audit<'a> {
    name: &'a str,
    d: usize,
    m: usize,
    c: &'a dyn Coefficients,
}

impl Audit<'_> {
    fn fail(&self, reason: String) -> Error {
        Error::ModelValidation { model: self.name.to_string(), reason }
    }

    fn shape(&self, what: &str, rows: usize, cols: usize, er: usize, ec: usize) -> Result<()> {
        if rows != er || cols != ec {
            return Err(self.fail(format!("{what} has shape {rows}x{cols}, expected {er}x{ec}")));
        }
        Ok(())
    }

    fn finite(&self, what: &str, m: &DMatrix<f64>) -> Result<()> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(self.fail(format!("{what} is not finite")));
        }
        Ok(())
    }

    fn probe(&self, t: f64, x: &[f64], mu: &ParticleCloud, rng: &mut ChaCha8Rng) -> Result<()> {
        let (d, m) = (self.d, self.m);
        let k = self.c.bound(t);
        if !(k.is_finite() && k > 0.0) {
            return Err(self.fail(format!("K_{t} = {k} is not a positive real")));
        }
        let tol = k * (1.0 + 1e-9);

        let b = self.c.drift(t, x, mu);
        self.shape("drift", b.nrows(), 1, d, 1)?;
        let sigma = self.c.diffusion(t, x, mu);
        self.shape("diffusion", sigma.nrows(), sigma.ncols(), d, m)?;
        let gb = self.c.drift_grad(t, x, mu);
        self.shape("drift_grad", gb.nrows(), gb.ncols(), d, d)?;
        for (what, mat) in [("drift", DMatrix::from_column_slice(d, 1, b.as_slice())), ("diffusion", sigma.clone()), ("drift_grad", gb.clone())] {
            self.finite(what, &mat)?;
        }

        let a = &sigma * sigma.transpose();
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if lo < 1.0 / tol || hi > tol {
            return Err(self.fail(format!(
                "eigenvalues of sigma sigma^T in [{lo}, {hi}] leave [1/K, K] with K = {k} at t = {t}"
            )));
        }
        if b.norm() > tol {
            return Err(self.fail(format!("|b| = {} exceeds K = {k}", b.norm())));
        }
        if gb.norm() > tol {
            return Err(self.fail(format!("|grad b| = {} exceeds K = {k}", gb.norm())));
        }

        // Squared Hilbert-Schmidt norm of the derivative of sigma.
        let mut gs2 = 0.0;
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let g = self.c.diffusion_grad(t, x, mu, &e);
            self.shape("diffusion_grad", g.nrows(), g.ncols(), d, m)?;
            self.finite("diffusion_grad", &g)?;
            gs2 += g.norm_squared();
        }
        if gs2 > tol {
            return Err(self.fail(format!("|grad sigma|^2 = {gs2} exceeds K = {k}")));
        }

        // Spatial gradients against central differences.
        let h = GRAD_STEP;
        let mut fd = DMatrix::zeros(d, d);
        for j in 0..d {
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[j] += h;
            xm[j] -= h;
            let col = (self.c.drift(t, &xp, mu) - self.c.drift(t, &xm, mu)) / (2.0 * h);
            fd.set_column(j, &col);
        }
        let err = (&fd - &gb).norm();
        if err > GRAD_RTOL * gb.norm() + ABS_FLOOR {
            return Err(self.fail(format!("drift_grad differs from finite differences by {err}")));
        }
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd_s = (self.c.diffusion(t, &xp, mu) - self.c.diffusion(t, &xm, mu)) / (2.0 * h);
        let gs = self.c.diffusion_grad(t, x, mu, &v);
        let err = (&fd_s - &gs).norm();
        if err > GRAD_RTOL * gs.norm() + ABS_FLOOR {
            return Err(self.fail(format!("diffusion_grad differs from finite differences by {err}")));
        }

        // Lions derivatives: bounds, then the push-forward finite difference.
        let mut pair_b = DVector::zeros(d);
        let mut pair_s = DMatrix::zeros(d, m);
        let phi = PerturbationMap::random_smooth(d, rng);
        for (y, w) in mu.iter() {
            let lb = self.c.drift_lions(t, x, mu, y);
            self.shape("drift_lions", lb.nrows(), lb.ncols(), d, d)?;
            self.finite("drift_lions", &lb)?;
            if lb.norm() > tol {
                return Err(self.fail(format!("|D^L b| = {} exceeds K = {k}", lb.norm())));
            }
            let ls = self.c.diffusion_lions(t, x, mu, y);
            if ls.len() != d {
                return Err(self.fail(format!("diffusion_lions has {} slices, expected {d}", ls.len())));
            }
            let mut ls2 = 0.0;
            for sl in &ls {
                self.shape("diffusion_lions", sl.nrows(), sl.ncols(), d, m)?;
                self.finite("diffusion_lions", sl)?;
                ls2 += sl.norm_squared();
            }
            if ls2 > tol {
                return Err(self.fail(format!("|D^L sigma|^2 = {ls2} exceeds K = {k}")));
            }
            let p = phi.apply(y);
            pair_b += &lb * &p * w;
            for (kk, sl) in ls.iter().enumerate() {
                pair_s += sl * (w * p[kk]);
            }
        }
        let plus = push_forward(mu, &phi, LIONS_EPS)?;
        let minus = push_forward(mu, &phi, -LIONS_EPS)?;
        let fd_b = (self.c.drift(t, x, &plus) - self.c.drift(t, x, &minus)) / (2.0 * LIONS_EPS);
        let err = (&fd_b - &pair_b).norm();
        if err > LIONS_RTOL * pair_b.norm() + ABS_FLOOR {
            return Err(self.fail(format!(
                "drift_lions differs from the push-forward difference quotient by {err}"
            )));
        }
        let fd_s = (self.c.diffusion(t, x, &plus) - self.c.diffusion(t, x, &minus)) / (2.0 * LIONS_EPS);
        let err = (&fd_s - &pair_s).norm();
        if err > LIONS_RTOL * pair_s.norm() + ABS_FLOOR {
            return Err(self.fail(format!(
                "diffusion_lions differs from the push-forward difference quotient by {err}"
            )));
        }

        // Lipschitz continuity of the Lions derivatives in x.
        let x2: Vec<f64> = x.iter().map(|xi| xi + rng.gen_range(-0.5..0.5)).collect();
        let dx = x.iter().zip(&x2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let y = mu.point(rng.gen_range(0..mu.len()));
        let db = (self.c.drift_lions(t, x, mu, y) - self.c.drift_lions(t, &x2, mu, y)).norm();
        let ds = self
            .c
            .diffusion_lions(t, x, mu, y)
            .iter()
            .zip(self.c.diffusion_lions(t, &x2, mu, y))
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        if db.max(ds) > tol * dx + 1e-12 {
            return Err(self.fail(format!(
                "Lions derivative moves by {} over |x - x'| = {dx}, above K = {k}",
                db.max(ds)
            )));
        }
        Ok(())
    }
}

fn random_cloud(d: usize, opts: &ValidationOptions, rng: &mut ChaCha8Rng) -> Result<ParticleCloud> {
    let n = rng.gen_range(1..=opts.max_cloud.max(1));
    let pts: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-opts.radius..opts.radius)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    ParticleCloud::with_raw_weights(d, pts, raw)
}

/// Samples random `(t, x, cloud)` triples and checks every bound and
/// derivative identity the rest of the library relies on.
pub fn validate_coefficients(
    name: &str,
    dim: usize,
    noise_dim: usize,
    coeffs: &dyn Coefficients,
    opts: &ValidationOptions,
) -> Result<()> {
    if opts.samples < 100 {
        return Err(Error::InvalidParameter { name: "samples".into(), reason: "at least 100 probes".into() });
    }
    let audit = Audit { name, d: dim, m: noise_dim, c: coeffs };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut times: Vec<f64> = (0..opts.samples).map(|_| rng.gen_range(0.0..=opts.horizon)).collect();
    for _ in 0..opts.samples {
        let t = times[rng.gen_range(0..times.len())];
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-opts.radius..opts.radius)).collect();
        let mu = random_cloud(dim, opts, &mut rng)?;
        audit.probe(t, &x, &mu, &mut rng)?;
    }
    times.sort_by(f64::total_cmp);
    for w in times.windows(2) {
        if coeffs.bound(w[1]) < coeffs.bound(w[0]) {
            return Err(audit.fail(format!("K decreases between t = {} and t = {}", w[0], w[1])));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use std::sync::Arc;

    /// Mean-field drift whose declared Lions derivative has the wrong sign.
    struct WrongSign;
    impl Coefficients for WrongSign {
        fn drift(&self, _: f64, x: &[f64], mu: &ParticleCloud) -> DVector<f64> {
            DVector::from_element(1, -(x[0] - mu.mean()[0]) * 0.1)
        }
        fn diffusion(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
        fn drift_grad(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -0.1)
        }
        fn diffusion_grad(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn drift_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -0.1)
        }
        fn diffusion_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> Vec<DMatrix<f64>> {
            vec![DMatrix::zeros(1, 1)]
        }
        fn bound(&self, _: f64) -> f64 {
            2.0
        }
    }

    #[test]
    fn wrong_lions_derivative_is_caught() {
        let err = ModelSpec::new("wrong", 1, 1, Arc::new(WrongSign)).unwrap_err();
        match err {
            Error::ModelValidation { reason, .. } => assert!(reason.contains("drift_lions"), "{reason}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    struct Degenerate;
    impl Coefficients for Degenerate {
        fn drift(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DVector<f64> {
            DVector::zeros(1)
        }
        fn diffusion(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 1e-3)
        }
        fn drift_grad(&self, _: f64, _: &[f64], _: &ParticleCloud) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn diffusion_grad(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn drift_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn diffusion_lions(&self, _: f64, _: &[f64], _: &ParticleCloud, _: &[f64]) -> Vec<DMatrix<f64>> {
            vec![DMatrix::zeros(1, 1)]
        }
        fn bound(&self, _: f64) -> f64 {
            10.0
        }
    }

    #[test]
    fn weak_noise_fails_ellipticity() {
        let err = ModelSpec::new("degenerate", 1, 1, Arc::new(Degenerate)).unwrap_err();
        assert!(matches!(err, Error::ModelValidation { .. }));
    }

    #[test]
    fn too_few_probes_is_rejected() {
        let opts = ValidationOptions { samples: 10, ..Default::default() };
        assert!(validate_coefficients("x", 1, 1, &Degenerate, &opts).is_err());
    }
}
