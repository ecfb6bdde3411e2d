use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{ParametrixEngine, QuadratureGrid};
use crate::model::{MeasureFlow, ModelSpec, ParticleCloud};

/// Largest cloud handled by the assignment solver in `d >= 2`.
pub const ASSIGNMENT_LIMIT: usize = 512;

/// Largest tail mass a density estimate may leave outside the grid box.
pub const VAR_COVERAGE_LIMIT: f64 = 1e-4;

/// 2-Wasserstein distance between two empirical measures.
///
/// In `d = 1` the quantile coupling is exact for any weights. In `d >= 2` a
/// single-atom side has a closed form; otherwise both clouds must be
/// uniformly weighted, of equal size at most [`ASSIGNMENT_LIMIT`], and the
/// optimal assignment is solved exactly.
pub fn w2_distance(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    if a.dim() == 1 {
        return Ok(quantile_w2_sq(a, b).sqrt());
    }
    if a.len() == 1 || b.len() == 1 {
        let (single, other) = if a.len() == 1 { (a, b) } else { (b, a) };
        let y = single.point(0);
        return Ok(other.iter().map(|(p, w)| w * sq(p, y)).sum::<f64>().sqrt());
    }
    let n = a.len();
    if n != b.len() || !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported(
            "W2 in d >= 2 needs uniformly weighted clouds of equal size".into(),
        ));
    }
    if n > ASSIGNMENT_LIMIT {
        return Err(Error::SizeLimit { n, limit: ASSIGNMENT_LIMIT });
    }
    let cost: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sq(a.point(i), b.point(j))).collect();
    let assignment = hungarian(n, &cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total / n as f64).sqrt())
}

fn sorted_with_cdf(c: &ParticleCloud) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c.point(i)[0].total_cmp(&c.point(j)[0]));
    let xs: Vec<f64> = order.iter().map(|&i| c.point(i)[0]).collect();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = order
        .iter()
        .map(|&i| {
            acc += c.weight(i);
            acc
        })
        .collect();
    let total = acc;
    cdf.iter_mut().for_each(|v| *v /= total);
    *cdf.last_mut().unwrap() = 1.0;
    (xs, cdf)
}

/// `int_0^1 |F_a^{-1}(u) - F_b^{-1}(u)|^2 du` by merging the two step CDFs.
fn quantile_w2_sq(a: &ParticleCloud, b: &ParticleCloud) -> f64 {
    let (xa, ca) = sorted_with_cdf(a);
    let (xb, cb) = sorted_with_cdf(b);
    let (mut i, mut j, mut prev, mut acc) = (0, 0, 0.0, 0.0);
    while i < xa.len() && j < xb.len() {
        let next = ca[i].min(cb[j]);
        acc += (next - prev) * (xa[i] - xb[j]).powi(2);
        prev = next;
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    acc
}

/// Minimum-cost perfect matching on an `n x n` row-major cost matrix
/// (shortest augmenting paths with potentials, O(n^3)). Returns the column
/// assigned to each row.
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    // p[j]: row matched to column j, 1-based; 0 is the virtual column.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

/// How terminal densities are obtained for the variation distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarMethod {
    /// Parametrix density from every atom of the initial cloud.
    Parametrix,
    /// Gaussian kernel density estimate of the terminal cloud.
    Kde,
}

impl fmt::Display for VarMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Parametrix => "parametrix",
            Self::Kde => "kde",
        })
    }
}

impl FromStr for VarMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parametrix" => Ok(Self::Parametrix),
            "kde" => Ok(Self::Kde),
            _ => Err(Error::InvalidParameter { name: "method".into(), reason: format!("unknown `{s}`, expected parametrix or kde") }),
        }
    }
}

/// Per-axis Silverman bandwidth `sd_k (4 / ((d + 2) n))^{1 / (d + 4)}`, with the
/// Kish effective size for `n`, floored at the grid step so that the
/// trapezoid rule resolves every kernel.
pub fn silverman_bandwidth(cloud: &ParticleCloud, grid: &QuadratureGrid) -> Vec<f64> {
    let d = cloud.dim();
    let n_eff = 1.0 / cloud.weights().iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((d as f64 + 2.0) * n_eff)).powf(1.0 / (d as f64 + 4.0));
    let cov = cloud.covariance();
    (0..d).map(|k| (cov[(k, k)].max(0.0).sqrt() * factor).max(grid.step(k))).collect()
}

/// Gaussian product-kernel density estimate of `cloud` at every grid point.
pub fn kde_on_grid(cloud: &ParticleCloud, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let d = cloud.dim();
    if grid.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: grid.dim() });
    }
    if d > 2 {
        return Err(Error::Unsupported(format!("density estimates on a grid need d <= 2, got d = {d}")));
    }
    let h = silverman_bandwidth(cloud, grid);
    let var: Vec<f64> = h.iter().map(|x| x * x).collect();
    let tail: f64 = cloud.iter().map(|(p, w)| w * grid.tail_mass(p, &var)).sum();
    if tail > VAR_COVERAGE_LIMIT {
        return Err(Error::Coverage { tail_mass: tail, limit: VAR_COVERAGE_LIMIT });
    }
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.sort_by(|&i, &j| cloud.point(i)[0].total_cmp(&cloud.point(j)[0]));
    let first: Vec<f64> = order.iter().map(|&i| cloud.point(i)[0]).collect();
    let norm: f64 = h.iter().map(|hk| 1.0 / (hk * (2.0 * std::f64::consts::PI).sqrt())).product();
    let cut = 8.0;
    let pts = grid.points();
    Ok(pts
        .chunks_exact(d)
        .map(|z| {
            let lo = first.partition_point(|&x| x < z[0] - cut * h[0]);
            let hi = first.partition_point(|&x| x <= z[0] + cut * h[0]);
            let mut acc = 0.0;
            for &i in &order[lo..hi] {
                let p = cloud.point(i);
                let q: f64 = (0..d).map(|k| ((z[k] - p[k]) / h[k]).powi(2)).sum();
                if q <= cut * cut {
                    acc += cloud.weight(i) * (-0.5 * q).exp();
                }
            }
            acc * norm
        })
        .collect())
}

/// Mixture of parametrix densities from the atoms of the initial cloud.
fn parametrix_mixture(model: &ModelSpec, flow: &MeasureFlow, grid: &QuadratureGrid, s: f64, t: f64) -> Result<Vec<f64>> {
    let init = flow.cloud_at(s).ok_or(Error::FlowRange { r: s, t, start: flow.start(), end: flow.end() })?.merged();
    let engine = ParametrixEngine::new(model, flow, grid.clone(), s, t)?;
    let mut out = vec![0.0; grid.len()];
    for (x, w) in init.iter() {
        let prof = engine.profile(x)?;
        out.iter_mut().zip(&prof.density).for_each(|(o, p)| *o += w * p);
    }
    Ok(out)
}

/// Terminal density at time `t` of the law carried by `flow` from time `s`.
pub fn terminal_density(
    model: &ModelSpec,
    flow: &MeasureFlow,
    grid: &QuadratureGrid,
    s: f64,
    t: f64,
    method: VarMethod,
) -> Result<Vec<f64>> {
    match method {
        VarMethod::Parametrix => parametrix_mixture(model, flow, grid, s, t),
        VarMethod::Kde => {
            flow.check_covers(s, t)?;
            let cloud = flow.cloud_at(t).ok_or(Error::FlowRange { r: s, t, start: flow.start(), end: flow.end() })?;
            kde_on_grid(cloud, grid)
        }
    }
}

/// `||P*_{s,t} mu - P*_{s,t} nu||_var = int |p_mu - p_nu|` over the grid box,
/// where `mu`, `nu` are the clouds of the two flows at `s`.
///
/// This is the supremum over `||f||_inf <= 1`, twice the usual total
/// variation distance, so disjoint laws are at distance 2.
pub fn var_distance(
    model: &ModelSpec,
    flow_a: &MeasureFlow,
    flow_b: &MeasureFlow,
    grid: &QuadratureGrid,
    s: f64,
    t: f64,
    method: VarMethod,
) -> Result<f64> {
    let pa = terminal_density(model, flow_a, grid, s, t, method)?;
    let pb = terminal_density(model, flow_b, grid, s, t, method)?;
    let dist: f64 = grid.weights().iter().zip(pa.iter().zip(&pb)).map(|(w, (a, b))| w * (a - b).abs()).sum();
    if !(0.0..=2.0 + 1e-6).contains(&dist) {
        return Err(Error::Quadrature(format!("variation distance {dist} outside [0, 2]")));
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ModelParams};
    use crate::solver::InitDistribution;
    use proptest::prelude::*;

    fn cloud1(xs: &[f64]) -> ParticleCloud {
        ParticleCloud::uniform(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn dirac_distances() {
        let a = ParticleCloud::dirac(&[0.0]).unwrap();
        let b = ParticleCloud::dirac(&[1.0]).unwrap();
        assert_eq!(w2_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(w2_distance(&a, &a).unwrap(), 0.0);
        let c = ParticleCloud::dirac(&[0.0, 0.0]).unwrap();
        let d = ParticleCloud::uniform(2, vec![3.0, 4.0, -3.0, -4.0]).unwrap();
        assert!((w2_distance(&c, &d).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_quantile_coupling() {
        // Half the mass moves by 2, the other half stays put.
        let a = ParticleCloud::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let b = ParticleCloud::new(1, vec![0.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert!((w2_distance(&a, &b).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        // Uniform on {0,1,2,3} against the two-point law (1/4, 3/4) on {0, 3}.
        let c = cloud1(&[3.0, 1.0, 0.0, 2.0]);
        let e = ParticleCloud::new(1, vec![0.0, 3.0], vec![0.25, 0.75]).unwrap();
        assert!((w2_distance(&c, &e).unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_shift_from_samples() {
        let a = InitDistribution::Gaussian { mean: vec![0.0], sd: 1.0 }.sample(10_000, 1).unwrap();
        let b = InitDistribution::Gaussian { mean: vec![0.5], sd: 1.0 }.sample(10_000, 2).unwrap();
        let w = w2_distance(&a, &b).unwrap();
        assert!((w - 0.5).abs() < 0.05, "{w}");
    }

    #[test]
    fn assignment_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for n in 2..=6 {
            let pa: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pb: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = ParticleCloud::uniform(2, pa).unwrap();
            let b = ParticleCloud::uniform(2, pb).unwrap();
            let cost = |i: usize, j: usize| (a.point(i)[0] - b.point(j)[0]).powi(2) + (a.point(i)[1] - b.point(j)[1]).powi(2);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| best = best.min(p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum()));
            let w = w2_distance(&a, &b).unwrap();
            assert!((w * w * n as f64 - best).abs() < 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }

    #[test]
    fn assignment_size_limit() {
        let a = ParticleCloud::uniform(2, vec![0.0; 2 * 513]).unwrap();
        assert!(matches!(w2_distance(&a, &a), Err(Error::SizeLimit { n: 513, limit: 512 })));
        let b = ParticleCloud::uniform(2, vec![0.0; 6]).unwrap();
        assert!(matches!(w2_distance(&a, &b), Err(Error::Unsupported(_))));
    }

    fn brownian_flow(x: f64) -> MeasureFlow {
        MeasureFlow::constant(ParticleCloud::dirac(&[x]).unwrap(), 0.0, 1.0, 4).unwrap()
    }

    #[test]
    fn parametrix_shifted_gaussians() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let grid = QuadratureGrid::new(vec![-8.0], vec![8.5], 801, 8, 2).unwrap();
        let v = var_distance(&bm, &brownian_flow(0.0), &brownian_flow(0.5), &grid, 0.0, 1.0, VarMethod::Parametrix).unwrap();
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let exact = 2.0 * (2.0 * normal.cdf(0.25) - 1.0);
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
        assert!((exact - 0.3949).abs() < 1e-4);
        let same = var_distance(&bm, &brownian_flow(0.0), &brownian_flow(0.0), &grid, 0.0, 1.0, VarMethod::Parametrix).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn kde_shifted_gaussians() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let a = InitDistribution::Gaussian { mean: vec![0.0], sd: 1.0 }.sample(20_000, 1).unwrap();
        let b = InitDistribution::Gaussian { mean: vec![0.5], sd: 1.0 }.sample(20_000, 2).unwrap();
        let fa = MeasureFlow::constant(a, 0.0, 1.0, 1).unwrap();
        let fb = MeasureFlow::constant(b, 0.0, 1.0, 1).unwrap();
        let grid = QuadratureGrid::new(vec![-7.0], vec![7.5], 401, 1, 0).unwrap();
        let v = var_distance(&bm, &fa, &fb, &grid, 0.0, 1.0, VarMethod::Kde).unwrap();
        assert!((v - 0.3949).abs() < 0.03, "{v}");
    }

    #[test]
    fn kde_disjoint_clouds_are_at_distance_two() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let a = InitDistribution::Gaussian { mean: vec![-3.0], sd: 0.1 }.sample(2000, 1).unwrap();
        let b = InitDistribution::Gaussian { mean: vec![3.0], sd: 0.1 }.sample(2000, 2).unwrap();
        let fa = MeasureFlow::constant(a, 0.0, 1.0, 1).unwrap();
        let fb = MeasureFlow::constant(b, 0.0, 1.0, 1).unwrap();
        let grid = QuadratureGrid::new(vec![-5.0], vec![5.0], 1001, 1, 0).unwrap();
        let v = var_distance(&bm, &fa, &fb, &grid, 0.0, 1.0, VarMethod::Kde).unwrap();
        assert!(v > 2.0 - 1e-3 && v <= 2.0 + 1e-6, "{v}");
        assert_eq!(var_distance(&bm, &fa, &fa, &grid, 0.0, 1.0, VarMethod::Kde).unwrap(), 0.0);
    }

    #[test]
    fn kde_box_must_cover_the_kernels() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let a = InitDistribution::Gaussian { mean: vec![0.0], sd: 1.0 }.sample(1000, 1).unwrap();
        let fa = MeasureFlow::constant(a, 0.0, 1.0, 1).unwrap();
        let grid = QuadratureGrid::new(vec![-1.0], vec![1.0], 101, 1, 0).unwrap();
        assert!(matches!(var_distance(&bm, &fa, &fa, &grid, 0.0, 1.0, VarMethod::Kde), Err(Error::Coverage { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn w2_is_a_symmetric_metric_that_scales(
            xs in prop::collection::vec(-5.0f64..5.0, 1..40),
            ys in prop::collection::vec(-5.0f64..5.0, 1..40),
            zs in prop::collection::vec(-5.0f64..5.0, 1..40),
            c in 0.1f64..10.0,
        ) {
            let (a, b, e) = (cloud1(&xs), cloud1(&ys), cloud1(&zs));
            let ab = w2_distance(&a, &b).unwrap();
            prop_assert!((ab - w2_distance(&b, &a).unwrap()).abs() <= 1e-12 * (1.0 + ab));
            prop_assert!(ab <= w2_distance(&a, &e).unwrap() + w2_distance(&e, &b).unwrap() + 1e-9);
            let scale = |cl: &ParticleCloud| cl.map_points(|p, q| q[0] = c * p[0]).unwrap();
            let scaled = w2_distance(&scale(&a), &scale(&b)).unwrap();
            prop_assert!((scaled - c * ab).abs() <= 1e-9 * (1.0 + c * ab));
        }

        #[test]
        fn w2_in_two_dimensions_is_symmetric(
            xs in prop::collection::vec(-3.0f64..3.0, 16),
            ys in prop::collection::vec(-3.0f64..3.0, 16),
        ) {
            let a = ParticleCloud::uniform(2, xs).unwrap();
            let b = ParticleCloud::uniform(2, ys).unwrap();
            let ab = w2_distance(&a, &b).unwrap();
            prop_assert!((ab - w2_distance(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}
