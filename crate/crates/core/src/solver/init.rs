use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParticleCloud;
use crate::solver::noise::{stream_rng, Substream};

/// Laws from which initial clouds are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitDistribution {
    Dirac { point: Vec<f64> },
    /// Isotropic Gaussian `N(mean, sd^2 Id)`.
    Gaussian { mean: Vec<f64>, sd: f64 },
    /// Uniform on the box `[lo, hi]`.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: Vec<f64>, b: Vec<f64>, p: f64 },
}

impl InitDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::Dirac { point } => point.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Uniform { lo, .. } => lo.len(),
            Self::TwoPoint { a, .. } => a.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParameter { name: "init".into(), reason: reason.into() };
        if self.dim() == 0 {
            return Err(bad("empty point"));
        }
        match self {
            Self::Dirac { .. } => {}
            Self::Gaussian { sd, .. } => {
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(bad("gaussian sd >= 0"));
                }
            }
            Self::Uniform { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(bad("uniform needs lo < hi on every axis"));
                }
            }
            Self::TwoPoint { a, b, p } => {
                if a.len() != b.len() || !(0.0..=1.0).contains(p) {
                    return Err(bad("two_point needs matching points and 0 <= p <= 1"));
                }
            }
        }
        Ok(())
    }

    /// Exact atomic representation of Dirac and two-point laws.
    pub fn atoms(&self) -> Option<ParticleCloud> {
        match self {
            Self::Dirac { point } => ParticleCloud::dirac(point).ok(),
            Self::TwoPoint { a, b, p } => {
                let pts = a.iter().chain(b).copied().collect();
                ParticleCloud::new(a.len(), pts, vec![*p, 1.0 - *p]).ok()
            }
            _ => None,
        }
    }

    /// `n` equally weighted samples.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleCloud> {
        self.validate()?;
        let d = self.dim();
        let mut rng = stream_rng(seed, Substream::InitSampling, 0);
        let mut pts = Vec::with_capacity(n * d);
        for _ in 0..n {
            match self {
                Self::Dirac { point } => pts.extend_from_slice(point),
                Self::Gaussian { mean, sd } => {
                    pts.extend(mean.iter().map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + sd * z
                    }))
                }
                Self::Uniform { lo, hi } => pts.extend(lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b))),
                Self::TwoPoint { a, b, p } => {
                    let pick = if rng.gen::<f64>() < *p { a } else { b };
                    pts.extend_from_slice(pick);
                }
            }
        }
        ParticleCloud::uniform(d, pts)
    }
}
