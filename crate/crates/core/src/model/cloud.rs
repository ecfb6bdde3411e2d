use std::io::{BufRead, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weighted empirical measure on R^d.
///
/// Points are stored row-major (`N x d`). The weighted mean is computed
/// once and cached, since mean-field drifts query it for every particle.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: OnceLock<DVector<f64>>,
}

const WEIGHT_TOL: f64 = 1e-12;

fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl ParticleCloud {
    /// Builds a cloud from row-major points and weights summing to one.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCloud("dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if weights.len() != n {
            return Err(Error::InvalidCloud(format!(
                "{} weights for {n} points",
                weights.len()
            )));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidCloud(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidCloud(format!("invalid weight at index {i}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidCloud(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            dim,
            points,
            weights,
            mean: OnceLock::new(),
        })
    }

    /// Uniform weights `1/N`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates do not form points of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// Rescales nonnegative raw weights to sum to one.
    pub fn with_raw_weights(dim: usize, points: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(raw.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidCloud("weights must have positive finite sum".into()));
        }
        let weights = raw.into_iter().map(|w| w / total).collect();
        Self::new(dim, points, weights)
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(x.len(), x.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> &DVector<f64> {
        self.mean.get_or_init(|| {
            let mut m = DVector::zeros(self.dim);
            for (p, w) in self.iter() {
                for (mk, pk) in m.iter_mut().zip(p) {
                    *mk += w * pk;
                }
            }
            m
        })
    }

    /// Weighted (population) covariance of the points.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let d = self.dim;
        let mut c = DMatrix::zeros(d, d);
        for (p, w) in self.iter() {
            for i in 0..d {
                let di = p[i] - m[i];
                for j in 0..d {
                    c[(i, j)] += w * di * (p[j] - m[j]);
                }
            }
        }
        c
    }

    /// Weighted mean of a scalar function over the cloud.
    pub fn expect(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }

    /// Merges coincident points, summing their weights, in order of first
    /// appearance.
    pub fn merged(&self) -> Self {
        let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
        let mut pts = Vec::new();
        let mut wts: Vec<f64> = Vec::new();
        for (p, w) in self.iter() {
            let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
            match index.get(&key) {
                Some(&j) => wts[j] += w,
                None => {
                    index.insert(key, wts.len());
                    pts.extend_from_slice(p);
                    wts.push(w);
                }
            }
        }
        if wts.len() == self.len() {
            return self.clone();
        }
        let mean = OnceLock::new();
        Self { dim: self.dim, points: pts, weights: wts, mean }
    }

    /// Applies `f` to every point, keeping the weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.points.len()];
        for (src, dst) in self
            .points
            .chunks_exact(self.dim)
            .zip(out.chunks_exact_mut(self.dim))
        {
            f(src, dst);
        }
        Self::new(self.dim, out, self.weights.clone())
    }

    /// Writes `x_1..x_d,weight` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|k| format!("x_{k}"))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (p, wt) in self.iter() {
            let mut row: Vec<String> = p.iter().map(|x| crate::harness::fmt_f64(*x)).collect();
            row.push(crate::harness::fmt_f64(wt));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`ParticleCloud::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidCloud("empty csv".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols.last() != Some(&"weight") {
            return Err(Error::InvalidCloud(
                "header must be x_1..x_d,weight".into(),
            ));
        }
        let dim = cols.len() - 1;
        let mut points = Vec::new();
        let mut raw = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                Error::InvalidCloud(format!("line {}: {e}", lineno + 2))
            })?;
            if vals.len() != dim + 1 {
                return Err(Error::InvalidCloud(format!(
                    "line {}: expected {} columns",
                    lineno + 2,
                    dim + 1
                )));
            }
            points.extend_from_slice(&vals[..dim]);
            raw.push(vals[dim]);
        }
        Self::with_raw_weights(dim, points, raw)
    }
}

/// Weighted mean of the cloud.
pub fn cloud_mean(cloud: &ParticleCloud) -> DVector<f64> {
    cloud.mean().clone()
}

/// Weighted covariance of the cloud.
pub fn cloud_cov(cloud: &ParticleCloud) -> DMatrix<f64> {
    cloud.covariance()
}
