//! Parametrix series for the decoupled transition density.
//!
//! The correction kernel is evaluated on a uniform tensor grid with
//! Gauss-Legendre nodes in time. The series is assembled forward from the
//! start point: `G^0(r, y) = p^y_{s,r}(x, y)` is the kernel frozen at its own
//! endpoint and `G^m(u, z) = int_s^u dr int G^{m-1}(r, y) H*(r, y; u, z) dy`
//! with `H* = -H` the generator difference `(L - L^z) p^z`. The level-`m`
//! term of the density at `(t, z)` is `G^m(t, z)`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::frozen::{frozen_density_grad, frozen_density_hess, frozen_params};
use crate::kernels::quadrature::{GaussLegendre, QuadratureGrid};
use crate::kernels::table::CoefficientTable;
use crate::model::{MeasureFlow, ModelSpec};

/// Highest supported series level.
pub const MAX_ORDER: usize = 3;
/// Largest tail mass of a Gaussian factor allowed outside the box.
pub const COVERAGE_LIMIT: f64 = 1e-6;
/// Kernel entries further than this many standard deviations are skipped.
const BAND_SD: f64 = 8.0;

/// `<b_r(z) - b_r(y), grad p> + 1/2 tr[(A_r(z) - A_r(y)) hess p]`, with `p`
/// the kernel frozen at `z` over `[r, t]` and derivatives in its first argument.
#[allow(non_snake_case)]
pub fn parametrix_H(flow: &MeasureFlow, model: &ModelSpec, s: f64, r: f64, t: f64, y: &[f64], z: &[f64]) -> Result<f64> {
    let fp = frozen_params(flow, model, s, r, t, z)?;
    if y.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), found: y.len() });
    }
    let cloud = flow.cloud_at(r).expect("range checked by frozen_params");
    let db: DVector<f64> = model.drift(r, z, cloud) - model.drift(r, y, cloud);
    let da = model.diffusion_cov(r, z, cloud) - model.diffusion_cov(r, y, cloud);
    let grad = frozen_density_grad(&fp, y, z);
    let hess = frozen_density_hess(&fp, y, z);
    Ok(db.dot(&grad) + 0.5 * (da * hess).trace())
}

/// Level `m` of the iterated kernel, `H^m_{s,r,t}(y, z)`, on `grid`.
#[allow(clippy::too_many_arguments, non_snake_case)]
pub fn parametrix_H_m(
    flow: &MeasureFlow,
    model: &ModelSpec,
    grid: &QuadratureGrid,
    s: f64,
    r: f64,
    t: f64,
    y: &[f64],
    z: &[f64],
    m: usize,
) -> Result<f64> {
    ParametrixEngine::new(model, flow, grid.clone(), s, t)?.h_m(m, r, y, z)
}

/// Parametrix approximation of the decoupled density `p_{s,t}(x, z)`.
pub fn parametrix_density(
    flow: &MeasureFlow,
    model: &ModelSpec,
    grid: &QuadratureGrid,
    s: f64,
    t: f64,
    x: &[f64],
    z: &[f64],
) -> Result<DensityResult> {
    ParametrixEngine::new(model, flow, grid.clone(), s, t)?.density_at(x, z)
}

/// Density at one point together with its series terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityResult {
    pub density: f64,
    /// Signed level terms at the point; `terms[0]` is the frozen kernel.
    pub terms: Vec<f64>,
    /// Sup over the grid of each level's magnitude.
    pub level_sup: Vec<f64>,
    /// Magnitude of the last retained term at the point.
    pub last_term: f64,
    /// Some level failed to shrink by a factor of two.
    pub nonconvergent: bool,
}

/// Density over every grid point for one start point.
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub dim: usize,
    /// Row-major grid points.
    pub points: Vec<f64>,
    pub density: Vec<f64>,
    /// `terms[m][i]`: level `m` at grid point `i`.
    pub terms: Vec<Vec<f64>>,
    pub level_sup: Vec<f64>,
    pub nonconvergent: bool,
}

impl DensityProfile {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_term(&self, i: usize) -> f64 {
        self.terms.last().map_or(0.0, |v| v[i].abs())
    }
}

fn nonconvergent(level_sup: &[f64]) -> bool {
    level_sup.windows(2).any(|w| w[1] > 0.0 && w[1] > 0.5 * w[0])
}

/// One density table row.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub density: f64,
    pub last_term: f64,
}

/// Writes `x_1..x_d,z_1..z_d,density,last_term_magnitude` rows.
pub fn write_density_csv<W: Write>(mut w: W, rows: &[DensityRow]) -> std::io::Result<()> {
    let d = rows.first().map_or(1, |r| r.x.len());
    let mut header: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    header.extend((1..=d).map(|k| format!("z_{k}")));
    header.push("density".into());
    header.push("last_term_magnitude".into());
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let mut cells: Vec<String> = r.x.iter().chain(&r.z).map(|v| crate::harness::fmt_f64(*v)).collect();
        cells.push(crate::harness::fmt_f64(r.density));
        cells.push(crate::harness::fmt_f64(r.last_term));
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Frozen Gaussian at one target point, for `d <= 2`.
struct Local {
    m: [f64; 2],
    prec: [f64; 4],
    log_norm: f64,
    sd: [f64; 2],
}

impl Local {
    fn new(d: usize, m: &[f64], a: &[f64]) -> Result<Self> {
        let mut out = Local { m: [0.0; 2], prec: [0.0; 4], log_norm: 0.0, sd: [0.0; 2] };
        out.m[..d].copy_from_slice(m);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        if d == 1 {
            if !(a[0] > 0.0) {
                return Err(Error::SingularCovariance);
            }
            out.prec[0] = 1.0 / a[0];
            out.log_norm = -0.5 * (ln2pi + a[0].ln());
            out.sd[0] = a[0].sqrt();
        } else {
            let a12 = 0.5 * (a[1] + a[2]);
            let det = a[0] * a[3] - a12 * a12;
            if !(det > 0.0 && a[0] > 0.0) {
                return Err(Error::SingularCovariance);
            }
            out.prec = [a[3] / det, -a12 / det, -a12 / det, a[0] / det];
            out.log_norm = -(ln2pi + 0.5 * det.ln());
            out.sd = [a[0].sqrt(), a[3].sqrt()];
        }
        Ok(out)
    }

    /// `H(y -> z)`, coefficient differences taken as `z` minus `y`.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn h(&self, d: usize, y: &[f64], z: &[f64], by: &[f64], bz: &[f64], ay: &[f64], az: &[f64]) -> f64 {
        if d == 1 {
            let delta = z[0] - y[0] - self.m[0];
            let g = self.prec[0] * delta;
            let p = (self.log_norm - 0.5 * delta * g).exp();
            let da = az[0] - ay[0];
            p * ((bz[0] - by[0]) * g + 0.5 * da * (g * g - self.prec[0]))
        } else {
            let d0 = z[0] - y[0] - self.m[0];
            let d1 = z[1] - y[1] - self.m[1];
            let g0 = self.prec[0] * d0 + self.prec[1] * d1;
            let g1 = self.prec[2] * d0 + self.prec[3] * d1;
            let p = (self.log_norm - 0.5 * (d0 * g0 + d1 * g1)).exp();
            let da = [az[0] - ay[0], az[1] - ay[1], az[2] - ay[2], az[3] - ay[3]];
            let quad = g0 * (da[0] * g0 + da[1] * g1) + g1 * (da[2] * g0 + da[3] * g1);
            let tr = da[0] * self.prec[0] + da[1] * self.prec[2] + da[2] * self.prec[1] + da[3] * self.prec[3];
            p * ((bz[0] - by[0]) * g0 + (bz[1] - by[1]) * g1 + 0.5 * (quad - tr))
        }
    }

    fn density(&self, d: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut q = 0.0;
        let delta: Vec<f64> = (0..d).map(|k| y[k] - x[k] - self.m[k]).collect();
        for i in 0..d {
            for j in 0..d {
                q += delta[i] * self.prec[i * d + j] * delta[j];
            }
        }
        (self.log_norm - 0.5 * q).exp()
    }
}

#[derive(Clone, Copy)]
struct Side<'t> {
    table: &'t CoefficientTable,
    pts: &'t [f64],
}

type Key = (Vec<u64>, usize, u64);

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Grid-based evaluator of the parametrix series for one model, flow and
/// time interval `[s, t]`. Level tables are memoised per start point.
pub struct ParametrixEngine<'a> {
    model: &'a ModelSpec,
    flow: &'a MeasureFlow,
    grid: QuadratureGrid,
    s: f64,
    t: f64,
    d: usize,
    n: usize,
    gl: GaussLegendre,
    pts: Vec<f64>,
    wts: Vec<f64>,
    lo: Vec<f64>,
    h: Vec<f64>,
    table: CoefficientTable,
    forward: Mutex<HashMap<Key, Arc<Vec<f64>>>>,
    backward: Mutex<HashMap<Key, Arc<Vec<f64>>>>,
}

impl<'a> ParametrixEngine<'a> {
    pub fn new(model: &'a ModelSpec, flow: &'a MeasureFlow, grid: QuadratureGrid, s: f64, t: f64) -> Result<Self> {
        grid.validate()?;
        let d = model.dim();
        if grid.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: grid.dim() });
        }
        if d > 2 {
            return Err(Error::Unsupported(format!("parametrix evaluation needs d <= 2, got d = {d}")));
        }
        if grid.order > MAX_ORDER {
            return Err(Error::Unsupported(format!("truncation order {} exceeds {MAX_ORDER}", grid.order)));
        }
        if !(t > s) {
            return Err(Error::InvalidTimes(format!("need t > s, got [{s}, {t}]")));
        }
        flow.check_covers(s, t)?;
        let pts = grid.points();
        let table = CoefficientTable::new(model, flow, &pts);
        Ok(Self {
            model,
            flow,
            s,
            t,
            d,
            n: grid.n_space,
            gl: GaussLegendre::new(grid.n_time),
            wts: grid.weights(),
            lo: grid.space_lo.clone(),
            h: (0..d).map(|k| grid.step(k)).collect(),
            pts,
            table,
            grid,
            forward: Mutex::new(HashMap::new()),
            backward: Mutex::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn grid_points(&self) -> &[f64] {
        &self.pts
    }

    /// Trapezoid weights of the grid, cell volume included.
    pub fn grid_weights(&self) -> &[f64] {
        &self.wts
    }

    fn grid_side(&self) -> Side<'_> {
        Side { table: &self.table, pts: &self.pts }
    }

    fn point_table(&self, x: &[f64]) -> Result<CoefficientTable> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        Ok(CoefficientTable::new(self.model, self.flow, x))
    }

    fn local(&self, side: Side<'_>, p: usize, r: f64, u: f64) -> Result<Local> {
        let (j, k) = (side.table.index(r), side.table.index(u));
        let mut m = [0.0; 2];
        let mut a = [0.0; 4];
        let dd = self.d * self.d;
        side.table.integral(p, r, j, u, k, &mut m[..self.d], &mut a[..dd]);
        Local::new(self.d, &m[..self.d], &a[..dd])
    }

    /// Calls `f` for every grid index within the band around `c`.
    fn for_band(&self, c: &[f64], sd: &[f64], mut f: impl FnMut(usize)) {
        let n = self.n as f64;
        let range = |k: usize| {
            let lo = ((c[k] - BAND_SD * sd[k] - self.lo[k]) / self.h[k]).ceil().clamp(0.0, n);
            let hi = ((c[k] + BAND_SD * sd[k] - self.lo[k]) / self.h[k]).floor().clamp(-1.0, n - 1.0);
            (lo as i64, hi as i64)
        };
        let (a0, b0) = range(0);
        if self.d == 1 {
            for i in a0..=b0 {
                f(i as usize);
            }
        } else {
            let (a1, b1) = range(1);
            for i in a0..=b0 {
                for j in a1..=b1 {
                    f(i as usize * self.n + j as usize);
                }
            }
        }
    }

    /// `out[z] -= sum_y q[y] H(r, y; u, z)` over grid sources `y` and the targets of `tgt`.
    fn forward_apply(&self, r: f64, u: f64, q: &[f64], tgt: Side<'_>, out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let j = self.table.index(r);
        for pt in 0..tgt.table.len() {
            let loc = self.local(tgt, pt, r, u)?;
            let z = &tgt.pts[pt * d..(pt + 1) * d];
            let (bz, az) = (tgt.table.drift(j, pt), tgt.table.cov(j, pt));
            let c: Vec<f64> = (0..d).map(|k| z[k] - loc.m[k]).collect();
            let mut acc = 0.0;
            self.for_band(&c, &loc.sd[..d], |py| {
                if q[py] != 0.0 {
                    let y = &self.pts[py * d..(py + 1) * d];
                    acc += q[py] * loc.h(d, y, z, self.table.drift(j, py), bz, self.table.cov(j, py), az);
                }
            });
            out[pt] -= acc;
        }
        Ok(())
    }

    /// `out[y] += sum_z c[z] H(r, y; u, z)` over grid sources `y` and the targets of `tgt`.
    fn backward_apply(&self, r: f64, u: f64, c: &[f64], tgt: Side<'_>, out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let j = self.table.index(r);
        for pt in 0..tgt.table.len() {
            if c[pt] == 0.0 {
                continue;
            }
            let loc = self.local(tgt, pt, r, u)?;
            let z = &tgt.pts[pt * d..(pt + 1) * d];
            let (bz, az) = (tgt.table.drift(j, pt), tgt.table.cov(j, pt));
            let centre: Vec<f64> = (0..d).map(|k| z[k] - loc.m[k]).collect();
            let cz = c[pt];
            self.for_band(&centre, &loc.sd[..d], |py| {
                let y = &self.pts[py * d..(py + 1) * d];
                out[py] += cz * loc.h(d, y, z, self.table.drift(j, py), bz, self.table.cov(j, py), az);
            });
        }
        Ok(())
    }

    /// `G^0(u, y) = p^y_{s,u}(x, y)` on the grid.
    fn level0(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        let d = self.d;
        (0..self.table.len())
            .map(|p| {
                let loc = self.local(self.grid_side(), p, self.s, u)?;
                Ok(loc.density(d, x, &self.pts[p * d..(p + 1) * d]))
            })
            .collect()
    }

    /// `G^m(u, .)` on the grid.
    fn level(&self, x: &[f64], m: usize, u: f64) -> Result<Arc<Vec<f64>>> {
        if m == 0 {
            return Ok(Arc::new(self.level0(x, u)?));
        }
        let key = (bits(x), m, u.to_bits());
        if let Some(v) = self.forward.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let mut out = vec![0.0; self.table.len()];
        let mut q = vec![0.0; self.table.len()];
        let nodes: Vec<(f64, f64)> = self.gl.on(self.s, u).collect();
        for (r, w) in nodes {
            let prev = self.level(x, m - 1, r)?;
            for ((qi, pi), wi) in q.iter_mut().zip(prev.iter()).zip(&self.wts) {
                *qi = w * wi * pi;
            }
            self.forward_apply(r, u, &q, self.grid_side(), &mut out)?;
        }
        let out = Arc::new(out);
        self.forward.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    fn check_start(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        let fp = frozen_params(self.flow, self.model, self.s, self.s, self.t, x)?;
        let mean: Vec<f64> = (0..self.d).map(|k| x[k] + fp.mean_shift[k]).collect();
        let var: Vec<f64> = (0..self.d).map(|k| fp.covariance[(k, k)]).collect();
        let tail = self.grid.tail_mass(&mean, &var);
        if tail > COVERAGE_LIMIT {
            return Err(Error::Coverage { tail_mass: tail, limit: COVERAGE_LIMIT });
        }
        Ok(())
    }

    fn check_end(&self, z: &[f64]) -> Result<()> {
        let fp = frozen_params(self.flow, self.model, self.s, self.s, self.t, z)?;
        let mean: Vec<f64> = (0..self.d).map(|k| z[k] - fp.mean_shift[k]).collect();
        let var: Vec<f64> = (0..self.d).map(|k| fp.covariance[(k, k)]).collect();
        let tail = self.grid.tail_mass(&mean, &var);
        if tail > COVERAGE_LIMIT {
            return Err(Error::Coverage { tail_mass: tail, limit: COVERAGE_LIMIT });
        }
        Ok(())
    }

    /// Density at every grid point for start point `x`.
    pub fn profile(&self, x: &[f64]) -> Result<DensityProfile> {
        self.check_start(x)?;
        let mut terms = vec![self.level0(x, self.t)?];
        for m in 1..=self.grid.order {
            terms.push(self.level(x, m, self.t)?.as_ref().clone());
        }
        let density: Vec<f64> = (0..self.table.len()).map(|i| terms.iter().map(|v| v[i]).sum()).collect();
        let level_sup: Vec<f64> = terms.iter().map(|v| v.iter().fold(0.0f64, |a, b| a.max(b.abs()))).collect();
        Ok(DensityProfile {
            dim: self.d,
            points: self.pts.clone(),
            density,
            nonconvergent: nonconvergent(&level_sup),
            terms,
            level_sup,
        })
    }

    /// Level sups only, reusing the memoised tables.
    fn level_sups(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut sups = vec![self.level0(x, self.t)?.iter().fold(0.0f64, |a, b| a.max(b.abs()))];
        for m in 1..=self.grid.order {
            sups.push(self.level(x, m, self.t)?.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        }
        Ok(sups)
    }

    /// Density at an arbitrary point `z` of the box.
    pub fn density_at(&self, x: &[f64], z: &[f64]) -> Result<DensityResult> {
        self.check_start(x)?;
        self.check_end(z)?;
        let ztab = self.point_table(z)?;
        let zside = Side { table: &ztab, pts: z };
        let loc = self.local(zside, 0, self.s, self.t)?;
        let mut terms = vec![loc.density(self.d, x, z)];
        let nodes: Vec<(f64, f64)> = self.gl.on(self.s, self.t).collect();
        let mut q = vec![0.0; self.table.len()];
        for m in 1..=self.grid.order {
            let mut acc = [0.0];
            for &(r, w) in &nodes {
                let prev = self.level(x, m - 1, r)?;
                for ((qi, pi), wi) in q.iter_mut().zip(prev.iter()).zip(&self.wts) {
                    *qi = w * wi * pi;
                }
                self.forward_apply(r, self.t, &q, zside, &mut acc)?;
            }
            terms.push(acc[0]);
        }
        let level_sup = self.level_sups(x)?;
        Ok(DensityResult {
            density: terms.iter().sum(),
            last_term: terms.last().unwrap().abs(),
            nonconvergent: nonconvergent(&level_sup),
            terms,
            level_sup,
        })
    }

    /// `T^k(u, .) = H^k_{s,u,t}(., z)` on the grid.
    fn backward_table(&self, zside: Side<'_>, k: usize, u: f64) -> Result<Arc<Vec<f64>>> {
        let key = (bits(zside.pts), k, u.to_bits());
        if let Some(v) = self.backward.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let mut out = vec![0.0; self.table.len()];
        if k == 1 {
            self.backward_apply(u, self.t, &[1.0], zside, &mut out)?;
        } else {
            let mut c = vec![0.0; self.table.len()];
            let nodes: Vec<(f64, f64)> = self.gl.on(u, self.t).collect();
            for (v, w) in nodes {
                let prev = self.backward_table(zside, k - 1, v)?;
                for ((ci, pi), wi) in c.iter_mut().zip(prev.iter()).zip(&self.wts) {
                    *ci = w * wi * pi;
                }
                self.backward_apply(u, v, &c, self.grid_side(), &mut out)?;
            }
        }
        let out = Arc::new(out);
        self.backward.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    /// `H^m_{s,r,t}(y, z)` by nested quadrature, each factor using
    /// the same sign as `parametrix_H`.
    pub fn h_m(&self, m: usize, r: f64, y: &[f64], z: &[f64]) -> Result<f64> {
        if m == 0 {
            return Err(Error::InvalidParameter { name: "m".into(), reason: "level must be at least 1".into() });
        }
        if !(r < self.t) || r < self.s {
            return Err(Error::InvalidTimes(format!("need s <= r < t, got r = {r}")));
        }
        if y.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: y.len() });
        }
        self.check_end(z)?;
        let d = self.d;
        let ztab = self.point_table(z)?;
        let zside = Side { table: &ztab, pts: z };
        let ytab = self.point_table(y)?;
        let j = ytab.index(r);
        if m == 1 {
            let loc = self.local(zside, 0, r, self.t)?;
            return Ok(loc.h(d, y, z, ytab.drift(j, 0), ztab.drift(j, 0), ytab.cov(j, 0), ztab.cov(j, 0)));
        }
        let mut total = 0.0;
        let nodes: Vec<(f64, f64)> = self.gl.on(r, self.t).collect();
        for (v, w) in nodes {
            let tab = self.backward_table(zside, m - 1, v)?;
            let grid = self.grid_side();
            for pt in 0..self.table.len() {
                let c = w * self.wts[pt] * tab[pt];
                if c == 0.0 {
                    continue;
                }
                let loc = self.local(grid, pt, r, v)?;
                let zp = &self.pts[pt * d..(pt + 1) * d];
                total += c * loc.h(d, y, zp, ytab.drift(j, 0), self.table.drift(j, pt), ytab.cov(j, 0), self.table.cov(j, pt));
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{frozen_density, frozen_params};
    use crate::model::{builtin_model, ModelParams, ParticleCloud};

    fn flow(t: f64) -> MeasureFlow {
        MeasureFlow::constant(ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, t, 50).unwrap()
    }

    fn ou_density(x: f64, z: f64, t: f64) -> f64 {
        let m = x * (-t).exp();
        let v = 0.5 * (1.0 - (-2.0 * t).exp());
        (-(z - m) * (z - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    #[test]
    fn h_examples() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let f = flow(1.0);
        let v = parametrix_H(&f, &ou, 0.0, 0.0, 1.0, &[1.0], &[0.0]).unwrap();
        assert!((v + 0.241_970_724_519_143_37).abs() < 1e-12, "{v}");
        assert_eq!(parametrix_H(&f, &ou, 0.0, 0.2, 1.0, &[0.4], &[0.4]).unwrap(), 0.0);
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        assert_eq!(parametrix_H(&f, &bm, 0.0, 0.2, 1.0, &[0.4], &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn brownian_series_is_the_frozen_kernel() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let f = flow(1.0);
        for order in 0..=3 {
            let grid = QuadratureGrid::auto(&[0.0], &[1.0], 1.0, 1.0, 101, 4, order).unwrap();
            let r = parametrix_density(&f, &bm, &grid, 0.0, 1.0, &[0.0], &[1.0]).unwrap();
            assert!((r.density - 0.241_970_724_519_143_37).abs() < 1e-14);
            assert!(!r.nonconvergent);
        }
    }

    #[test]
    fn engine_matches_pointwise_h() {
        let p = ModelParams { gamma: 0.4, ..ModelParams::default() };
        let m = builtin_model("bounded_interaction", &p).unwrap();
        let cloud = ParticleCloud::uniform(1, vec![-0.5, 0.2, 1.0]).unwrap();
        let f = MeasureFlow::constant(cloud, 0.0, 0.5, 5).unwrap();
        let grid = QuadratureGrid::auto(&[0.0], &[0.0], 0.5, 4.0, 64, 4, 1).unwrap();
        let e = ParametrixEngine::new(&m, &f, grid, 0.0, 0.5).unwrap();
        for (r, y, z) in [(0.0, 0.3, -0.2), (0.1, -0.4, 0.5), (0.33, 1.0, 0.9)] {
            let a = e.h_m(1, r, &[y], &[z]).unwrap();
            let b = parametrix_H(&f, &m, 0.0, r, 0.5, &[y], &[z]).unwrap();
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn ou_density_matches_closed_form() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let t = 0.5;
        let f = flow(t);
        let x = [0.3];
        let grid = QuadratureGrid::new(vec![-5.0], vec![5.0], 401, 8, 3).unwrap();
        let e = ParametrixEngine::new(&ou, &f, grid, 0.0, t).unwrap();
        let prof = e.profile(&x).unwrap();
        let sd = (0.5 * (1.0 - (-2.0 * t).exp())).sqrt();
        let mean = x[0] * (-t).exp();
        let mut worst = 0.0f64;
        for i in 0..prof.density.len() {
            let z = prof.point(i)[0];
            if (z - mean).abs() < 2.0 * sd {
                let exact = ou_density(x[0], z, t);
                worst = worst.max((prof.density[i] - exact).abs() / exact);
            }
        }
        assert!(worst < 1e-2, "worst relative error {worst}");
        assert!(!prof.nonconvergent, "{:?}", prof.level_sup);
        let mass: f64 = prof.density.iter().zip(e.grid_weights()).map(|(p, w)| p * w).sum();
        assert!((mass - 1.0).abs() < 5e-3, "mass {mass}");
        let off = e.density_at(&x, &[0.123]).unwrap();
        assert!((off.density - ou_density(x[0], 0.123, t)).abs() / off.density < 1e-2);
    }

    #[test]
    fn constant_model_terms_vanish_at_every_level() {
        let c = builtin_model("constant", &ModelParams::default()).unwrap();
        let f = flow(1.0);
        let grid = QuadratureGrid::auto(&[0.0], &[0.5], 1.0, c.bound(1.0), 64, 4, 3).unwrap();
        let e = ParametrixEngine::new(&c, &f, grid, 0.0, 1.0).unwrap();
        for m in 1..=3 {
            assert_eq!(e.h_m(m, 0.2, &[0.1], &[0.5]).unwrap(), 0.0);
        }
        let r = e.density_at(&[0.0], &[0.5]).unwrap();
        let fp = frozen_params(&f, &c, 0.0, 0.0, 1.0, &[0.5]).unwrap();
        assert!((r.density - frozen_density(&fp, &[0.0], &[0.5])).abs() < 1e-14);
    }

    #[test]
    fn small_box_is_a_coverage_error() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let f = flow(0.5);
        let grid = QuadratureGrid::new(vec![-1.0], vec![1.0], 64, 4, 2).unwrap();
        let e = ParametrixEngine::new(&ou, &f, grid, 0.0, 0.5).unwrap();
        assert!(matches!(e.density_at(&[0.0], &[0.0]), Err(Error::Coverage { .. })));
    }

    #[test]
    fn csv_layout() {
        let rows = vec![DensityRow { x: vec![0.0], z: vec![1.0], density: 0.5, last_term: 1e-3 }];
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x_1,z_1,density,last_term_magnitude\n"));
        assert_eq!(s.lines().count(), 2);
    }
}
