use crate::error::{Error, Result};

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `(a, b)`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, h * w))
    }
}

/// Uniform tensor grid on a box, plus the time-quadrature size and the
/// truncation order of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub space_lo: Vec<f64>,
    pub space_hi: Vec<f64>,
    /// Points per axis.
    pub n_space: usize,
    /// Gauss-Legendre nodes per time integral.
    pub n_time: usize,
    /// Highest series level `M`.
    pub order: usize,
}

impl QuadratureGrid {
    pub fn new(space_lo: Vec<f64>, space_hi: Vec<f64>, n_space: usize, n_time: usize, order: usize) -> Result<Self> {
        let g = Self { space_lo, space_hi, n_space, n_time, order };
        g.validate()?;
        Ok(g)
    }

    /// Box centred on the segment `[x, z]` with half-width
    /// `6 sqrt(K_T (t - s)) + |x - z|` on every axis.
    pub fn auto(x: &[f64], z: &[f64], span: f64, k_t: f64, n_space: usize, n_time: usize, order: usize) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: z.len() });
        }
        let dist = x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let half = 6.0 * (k_t * span).sqrt() + dist;
        let lo = x.iter().zip(z).map(|(a, b)| 0.5 * (a + b) - half).collect();
        let hi = x.iter().zip(z).map(|(a, b)| 0.5 * (a + b) + half).collect();
        Self::new(lo, hi, n_space, n_time, order)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Error::InvalidParameter { name: name.into(), reason: reason.into() };
        if self.space_lo.is_empty() || self.space_lo.len() != self.space_hi.len() {
            return Err(bad("grid", "box bounds must have the same positive dimension"));
        }
        if self.space_lo.iter().zip(&self.space_hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(bad("grid", "need finite space_lo < space_hi on every axis"));
        }
        if self.n_space < 16 {
            return Err(bad("n_space", "n_space >= 16"));
        }
        if self.n_time == 0 {
            return Err(bad("n_time", "n_time >= 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.space_lo.len()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.space_hi[axis] - self.space_lo[axis]) / (self.n_space - 1) as f64
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let h = self.step(axis);
        (0..self.n_space)
            .map(|i| if i + 1 == self.n_space { self.space_hi[axis] } else { self.space_lo[axis] + i as f64 * h })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.n_space.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major grid points; the last axis varies fastest.
    pub fn points(&self) -> Vec<f64> {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|k| self.axis(k)).collect();
        let mut out = Vec::with_capacity(self.len() * d);
        for flat in 0..self.len() {
            let mut rem = flat;
            let mut idx = vec![0; d];
            for k in (0..d).rev() {
                idx[k] = rem % self.n_space;
                rem /= self.n_space;
            }
            out.extend(idx.iter().enumerate().map(|(k, &i)| axes[k][i]));
        }
        out
    }

    /// Trapezoid weights including the cell volume.
    pub fn weights(&self) -> Vec<f64> {
        let d = self.dim();
        let axis_w = |k: usize, i: usize| {
            let h = self.step(k);
            if i == 0 || i + 1 == self.n_space {
                0.5 * h
            } else {
                h
            }
        };
        (0..self.len())
            .map(|flat| {
                let mut rem = flat;
                let mut w = 1.0;
                for k in (0..d).rev() {
                    w *= axis_w(k, rem % self.n_space);
                    rem /= self.n_space;
                }
                w
            })
            .collect()
    }

    /// Union bound on the mass of `N(mean, cov)` outside the box.
    pub fn tail_mass(&self, mean: &[f64], cov_diag: &[f64]) -> f64 {
        mean.iter()
            .zip(cov_diag)
            .enumerate()
            .map(|(k, (m, v))| {
                let sd = v.sqrt() * std::f64::consts::SQRT_2;
                0.5 * statrs::function::erf::erfc((m - self.space_lo[k]) / sd)
                    + 0.5 * statrs::function::erf::erfc((self.space_hi[k] - m) / sd)
            })
            .sum()
    }
}
