use crate::model::{time_slack, MeasureFlow, ModelSpec};

/// Drift and `sigma sigma^T` of a model at a fixed set of points, for every
/// cloud of a measure flow, with running trapezoid sums so that frozen
/// parameters over any `[r, u]` cost O(d^2).
///
/// Measure-free, time-homogeneous models collapse to a single time slice.
#[derive(Debug, Clone)]
pub(crate) struct CoefficientTable {
    d: usize,
    npts: usize,
    times: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
    cum_b: Vec<f64>,
    cum_a: Vec<f64>,
}

impl CoefficientTable {
    pub(crate) fn new(model: &ModelSpec, flow: &MeasureFlow, points: &[f64]) -> Self {
        let d = model.dim();
        let npts = points.len() / d;
        let tr = model.traits();
        let collapse = tr.measure_free && tr.time_homogeneous;
        let times: Vec<f64> = if collapse { vec![flow.start()] } else { flow.times().to_vec() };
        let nt = times.len();
        let dd = d * d;
        let mut b = vec![0.0; nt * npts * d];
        let mut a = vec![0.0; nt * npts * dd];
        for (j, &tj) in times.iter().enumerate() {
            let cloud = &flow.clouds()[j];
            for p in 0..npts {
                let x = &points[p * d..(p + 1) * d];
                let bv = model.drift(tj, x, cloud);
                let av = model.diffusion_cov(tj, x, cloud);
                let ob = (j * npts + p) * d;
                b[ob..ob + d].copy_from_slice(bv.as_slice());
                let oa = (j * npts + p) * dd;
                for r in 0..d {
                    for c in 0..d {
                        a[oa + r * d + c] = av[(r, c)];
                    }
                }
            }
        }
        let mut cum_b = vec![0.0; nt * npts * d];
        let mut cum_a = vec![0.0; nt * npts * dd];
        for j in 1..nt {
            let h = 0.5 * (times[j] - times[j - 1]);
            let (lo, hi) = ((j - 1) * npts * d, j * npts * d);
            for i in 0..npts * d {
                cum_b[hi + i] = cum_b[lo + i] + h * (b[lo + i] + b[hi + i]);
            }
            let (lo, hi) = ((j - 1) * npts * dd, j * npts * dd);
            for i in 0..npts * dd {
                cum_a[hi + i] = cum_a[lo + i] + h * (a[lo + i] + a[hi + i]);
            }
        }
        Self { d, npts, times, b, a, cum_b, cum_a }
    }

    pub(crate) fn len(&self) -> usize {
        self.npts
    }

    /// Flow slice in force at time `u`.
    pub(crate) fn index(&self, u: f64) -> usize {
        if self.times.len() == 1 {
            return 0;
        }
        let slack = time_slack(u);
        self.times.partition_point(|&tk| tk <= u + slack).saturating_sub(1)
    }

    pub(crate) fn drift(&self, j: usize, p: usize) -> &[f64] {
        let o = (j * self.npts + p) * self.d;
        &self.b[o..o + self.d]
    }

    pub(crate) fn cov(&self, j: usize, p: usize) -> &[f64] {
        let dd = self.d * self.d;
        let o = (j * self.npts + p) * dd;
        &self.a[o..o + dd]
    }

    /// Frozen drift and covariance integrals at point `p` over `[r, u]`, where
    /// `j` and `k` are the slices in force at `r` and `u`.
    pub(crate) fn integral(&self, p: usize, r: f64, j: usize, u: f64, k: usize, m: &mut [f64], a: &mut [f64]) {
        let d = self.d;
        let dd = d * d;
        let seg = |vals: &[f64], cum: &[f64], w: usize, out: &mut [f64]| {
            let at = |jj: usize, i: usize| vals[(jj * self.npts + p) * w + i];
            let cum_at = |jj: usize, i: usize| cum[(jj * self.npts + p) * w + i];
            for i in 0..w {
                out[i] = if j == k {
                    (u - r) * at(j, i)
                } else {
                    let t1 = self.times[j + 1];
                    let tk = self.times[k];
                    0.5 * (t1 - r) * (at(j, i) + at(j + 1, i)) + (cum_at(k, i) - cum_at(j + 1, i)) + (u - tk) * at(k, i)
                };
            }
        };
        seg(&self.b, &self.cum_b, d, m);
        seg(&self.a, &self.cum_a, dd, a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::frozen_params;
    use crate::model::{builtin_model, ModelParams, ParticleCloud};

    #[test]
    fn matches_direct_frozen_params_on_a_moving_flow() {
        let m = builtin_model("meanfield_ou", &ModelParams { sigma: 0.8, ..ModelParams::default() }).unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let clouds: Vec<ParticleCloud> =
            times.iter().map(|t| ParticleCloud::uniform(1, vec![t * t, -1.0 + t]).unwrap()).collect();
        let flow = MeasureFlow::new(times, clouds).unwrap();
        let pts = [0.3, -1.2];
        let tab = CoefficientTable::new(&m, &flow, &pts);
        for (r, u) in [(0.0, 1.0), (0.13, 0.57), (0.2, 0.3), (0.21, 0.29), (0.45, 0.5)] {
            for (p, z) in pts.iter().enumerate() {
                let fp = frozen_params(&flow, &m, 0.0, r, u, &[*z]).unwrap();
                let (mut mm, mut aa) = ([0.0], [0.0]);
                tab.integral(p, r, tab.index(r), u, tab.index(u), &mut mm, &mut aa);
                assert!((mm[0] - fp.mean_shift[0]).abs() < 1e-13, "[{r},{u}] {} vs {}", mm[0], fp.mean_shift[0]);
                assert!((aa[0] - fp.covariance[(0, 0)]).abs() < 1e-13);
            }
        }
    }
}
