use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ParticleCloud;

type PhiFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

/// A vector field `phi: R^d -> R^d` used to perturb a measure as `mu o (Id + eps phi)^{-1}`.
#[derive(Clone)]
pub struct PerturbationMap {
    phi: Arc<PhiFn>,
    /// `||phi||_{L^2(mu)}` when the caller knows it.
    pub l2_norm_hint: Option<f64>,
}

impl fmt::Debug for PerturbationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationMap")
            .field("l2_norm_hint", &self.l2_norm_hint)
            .finish_non_exhaustive()
    }
}

impl PerturbationMap {
    pub fn new(phi: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self { phi: Arc::new(phi), l2_norm_hint: None }
    }

    /// `phi(x) = c`.
    pub fn constant(c: Vec<f64>) -> Self {
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = DVector::from_vec(c);
        Self { phi: Arc::new(move |_| c.clone()), l2_norm_hint: Some(norm) }
    }

    pub fn identity() -> Self {
        Self::new(DVector::from_column_slice)
    }

    /// `phi(x)_k = a_k + b_k sin(c_k x_k + p_k)` with coefficients drawn from `rng`.
    pub fn random_smooth<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let coeffs: Vec<[f64; 4]> = (0..dim)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.2..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                ]
            })
            .collect();
        Self::new(move |x| {
            DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(&coeffs)
                    .map(|(xk, [a, b, c, p])| a + b * (c * xk + p).sin()),
            )
        })
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        (self.phi)(x)
    }

    /// `||phi||_{L^2(mu)}` over the cloud.
    pub fn l2_norm(&self, cloud: &ParticleCloud) -> f64 {
        cloud.expect(|p| self.apply(p).norm_squared()).sqrt()
    }
}

/// Moves every point to `x + eps phi(x)`, keeping weights: the empirical
/// image of `mu o (Id + eps phi)^{-1}`.
pub fn push_forward(cloud: &ParticleCloud, phi: &PerturbationMap, eps: f64) -> Result<ParticleCloud> {
    if !eps.is_finite() {
        return Err(Error::InvalidParameter { name: "eps".into(), reason: "must be finite".into() });
    }
    let d = cloud.dim();
    let mut out = Vec::with_capacity(cloud.points().len());
    for (i, p) in cloud.points().chunks_exact(d).enumerate() {
        let v = phi.apply(p);
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
        for (x, dx) in p.iter().zip(v.iter()) {
            let y = x + eps * dx;
            if !y.is_finite() {
                return Err(Error::InvalidPerturbation { index: i });
            }
            out.push(y);
        }
    }
    ParticleCloud::new(d, out, cloud.weights().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_eps_is_identity() {
        let c = ParticleCloud::new(1, vec![0.3, -2.0, 5.0], vec![0.2, 0.3, 0.5]).unwrap();
        let phi = PerturbationMap::new(|x| DVector::from_element(1, x[0].sin() + 3.0));
        let out = push_forward(&c, &phi, 0.0).unwrap();
        assert_eq!(out.points(), c.points());
        assert_eq!(out.weights(), c.weights());
    }

    #[test]
    fn identity_fixes_the_origin() {
        let c = ParticleCloud::dirac(&[0.0, 0.0]).unwrap();
        let out = push_forward(&c, &PerturbationMap::identity(), 1.0).unwrap();
        assert_eq!(out.points(), &[0.0, 0.0]);
    }

    #[test]
    fn constant_field_shifts_uniformly() {
        let c = ParticleCloud::uniform(1, vec![0.0, 1.0]).unwrap();
        let out = push_forward(&c, &PerturbationMap::constant(vec![1.0]), 0.5).unwrap();
        assert_eq!(out.points(), &[0.5, 1.5]);
    }

    #[test]
    fn non_finite_image_is_rejected() {
        let c = ParticleCloud::dirac(&[1.0]).unwrap();
        let phi = PerturbationMap::new(|_| DVector::from_element(1, f64::INFINITY));
        assert!(matches!(
            push_forward(&c, &phi, 1.0),
            Err(Error::InvalidPerturbation { index: 0 })
        ));
    }

    #[test]
    fn l2_norm_of_constant_matches_hint() {
        let c = ParticleCloud::uniform(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let phi = PerturbationMap::constant(vec![3.0, 4.0]);
        assert!((phi.l2_norm(&c) - 5.0).abs() < 1e-12);
        assert_eq!(phi.l2_norm_hint, Some(5.0));
    }

    proptest! {
        // Constant fields compose additively, exactly, on every coordinate.
        #[test]
        fn constant_shifts_compose(
            pts in prop::collection::vec(-100.0f64..100.0, 1..20),
            c in -10.0f64..10.0,
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let cloud = ParticleCloud::uniform(1, pts).unwrap();
            let phi = PerturbationMap::constant(vec![c]);
            let once = push_forward(&cloud, &phi, a + b).unwrap();
            for (p, q) in cloud.points().iter().zip(once.points()) {
                prop_assert_eq!(*q, p + (a + b) * c);
            }
        }
    }
}
