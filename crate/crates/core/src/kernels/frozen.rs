use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{MeasureFlow, ModelSpec};

/// Drift and covariance integrals of the coefficients frozen at `z` over `[r, t]`.
#[derive(Debug, Clone)]
pub struct FrozenParams {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub z: Vec<f64>,
    pub mean_shift: DVector<f64>,
    pub covariance: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_norm: f64,
}

impl FrozenParams {
    pub fn new(s: f64, r: f64, t: f64, z: Vec<f64>, mean_shift: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean_shift.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: covariance.nrows() });
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let chol: Cholesky<f64, Dyn> = Cholesky::new(sym.clone()).ok_or(Error::SingularCovariance)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance);
        }
        let inverse = chol.inverse();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self { s, r, t, z, mean_shift, covariance: sym, inverse, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean_shift.len()
    }

    /// `a^{-1}`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    fn residual(&self, x: &[f64], y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|k| y[k] - x[k] - self.mean_shift[k]))
    }
}

/// Trapezoid integral over `[r, t]` of `f(u, cloud at u)`, with the measure
/// read piecewise-constantly from the flow.
fn integrate_on_flow<F>(flow: &MeasureFlow, r: f64, t: f64, mut f: F) -> (DVector<f64>, DMatrix<f64>)
where
    F: FnMut(f64, usize) -> (DVector<f64>, DMatrix<f64>),
{
    let times = flow.times();
    let j = flow.index_at(r).unwrap_or(0);
    let k = flow.index_at(t).unwrap_or(times.len() - 1);
    let mut nodes = vec![(r, j)];
    for (i, &ti) in times.iter().enumerate().take(k + 1).skip(j + 1) {
        if ti > r && ti < t {
            nodes.push((ti, i));
        }
    }
    nodes.push((t, k));
    let vals: Vec<_> = nodes.iter().map(|&(u, i)| f(u, i)).collect();
    let mut m = DVector::zeros(vals[0].0.len());
    let mut a = DMatrix::zeros(vals[0].1.nrows(), vals[0].1.ncols());
    for w in 0..nodes.len() - 1 {
        let h = nodes[w + 1].0 - nodes[w].0;
        m += (&vals[w].0 + &vals[w + 1].0) * (0.5 * h);
        a += (&vals[w].1 + &vals[w + 1].1) * (0.5 * h);
    }
    (m, a)
}

/// `m = int_r^t b_u(z, mu_u) du` and `a = int_r^t (sigma sigma^T)_u(z, mu_u) du`.
pub fn frozen_params(flow: &MeasureFlow, model: &ModelSpec, s: f64, r: f64, t: f64, z: &[f64]) -> Result<FrozenParams> {
    if !(r < t) || s > r {
        return Err(Error::InvalidTimes(format!("need s <= r < t, got s = {s}, r = {r}, t = {t}")));
    }
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: z.len() });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "z".into(), reason: "must be finite".into() });
    }
    flow.check_covers(r, t)?;
    let clouds = flow.clouds();
    let (m, a) = integrate_on_flow(flow, r, t, |u, i| (model.drift(u, z, &clouds[i]), model.diffusion_cov(u, z, &clouds[i])));
    FrozenParams::new(s, r, t, z.to_vec(), m, a)
}

/// Gaussian density of `y` under `N(x + m, a)`.
pub fn frozen_density(fp: &FrozenParams, x: &[f64], y: &[f64]) -> f64 {
    let delta = fp.residual(x, y);
    let q = delta.dot(&(&fp.inverse * &delta));
    (fp.log_norm - 0.5 * q).exp()
}

/// Gradient in the first argument at `(y, z)`: `p a^{-1} (z - y - m)`.
pub fn frozen_density_grad(fp: &FrozenParams, y: &[f64], z: &[f64]) -> DVector<f64> {
    let p = frozen_density(fp, y, z);
    (&fp.inverse * fp.residual(y, z)) * p
}

/// Hessian in the first argument at `(y, z)`: `p (g g^T - a^{-1})` with `g = a^{-1}(z - y - m)`.
pub fn frozen_density_hess(fp: &FrozenParams, y: &[f64], z: &[f64]) -> DMatrix<f64> {
    let p = frozen_density(fp, y, z);
    let g = &fp.inverse * fp.residual(y, z);
    (&g * g.transpose() - &fp.inverse) * p
}
