use crate::error::{Error, Result};
use crate::estimators::distance::{var_distance, w2_distance, VarMethod};
use crate::kernels::QuadratureGrid;
use crate::model::{push_forward, MeasureFlow, ModelSpec, ParticleCloud, PerturbationMap};
use crate::solver::{solve_mckean_vlasov, InitDistribution, SolverConfig};

/// Two initial laws whose terminal laws are compared.
#[derive(Debug, Clone)]
pub struct InitPair {
    pub family: String,
    pub mu: ParticleCloud,
    pub nu: ParticleCloud,
}

/// Standard deviation of the narrow Gaussian family.
pub const NARROW_SD: f64 = 0.05;

/// Pairs differing by a shift `eps` along the first axis: Diracs at the
/// origin, a narrow Gaussian sample (`n_samples` points, sd [`NARROW_SD`]) and
/// the two-point law `(delta_{-e1/2} + delta_{e1/2}) / 2`.
pub fn shift_families(dim: usize, eps: f64, n_samples: usize, seed: u64) -> Result<Vec<InitPair>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter { name: "eps".into(), reason: "eps > 0".into() });
    }
    let mut e1 = vec![0.0; dim];
    e1[0] = eps;
    let shift = PerturbationMap::constant(e1);
    let origin = vec![0.0; dim];
    let mut half = vec![0.0; dim];
    half[0] = 0.5;
    let minus_half: Vec<f64> = half.iter().map(|h| -h).collect();
    let laws = [
        ("dirac_shift", ParticleCloud::dirac(&origin)?),
        ("gaussian_shift", InitDistribution::Gaussian { mean: origin.clone(), sd: NARROW_SD }.sample(n_samples, seed)?),
        (
            "two_point_shift",
            InitDistribution::TwoPoint { a: minus_half, b: half, p: 0.5 }.atoms().expect("two-point law has atoms"),
        ),
    ];
    laws.into_iter()
        .map(|(name, mu)| {
            let nu = push_forward(&mu, &shift, 1.0)?;
            Ok(InitPair { family: name.into(), mu, nu })
        })
        .collect()
}

/// Grid and method settings for [`bound_check_est2`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    pub n_space: usize,
    pub n_time: usize,
    pub order: usize,
    /// `None` picks the parametrix for one-dimensional pairs with at most
    /// [`PARAMETRIX_MAX_ATOMS`] atoms each, and kernel density estimates otherwise.
    pub method: Option<VarMethod>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { n_space: 401, n_time: 8, order: 2, method: None }
    }
}

pub const PARAMETRIX_MAX_ATOMS: usize = 8;

/// One row of the bound table.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub family: String,
    pub horizon: f64,
    pub method: VarMethod,
    pub w2: f64,
    pub var: f64,
    /// `var / w2`.
    pub ratio: f64,
    /// `ratio * sqrt(horizon)`.
    pub scaled: f64,
    pub skipped: Option<String>,
}

fn pick_method(pair: &InitPair, opts: &BoundOptions) -> VarMethod {
    opts.method.unwrap_or_else(|| {
        let small = pair.mu.merged().len() <= PARAMETRIX_MAX_ATOMS && pair.nu.merged().len() <= PARAMETRIX_MAX_ATOMS;
        if small && pair.mu.dim() == 1 {
            VarMethod::Parametrix
        } else {
            VarMethod::Kde
        }
    })
}

/// Box around both terminal clouds, widened by eight of their standard
/// deviations on every axis.
fn grid_for(a: &ParticleCloud, b: &ParticleCloud, opts: &BoundOptions) -> Result<QuadratureGrid> {
    let d = a.dim();
    let (ca, cb) = (a.covariance(), b.covariance());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (p, _) in a.iter().chain(b.iter()) {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..d {
        let margin = 8.0 * ca[(k, k)].max(cb[(k, k)]).sqrt().max(1e-3);
        lo[k] -= margin;
        hi[k] += margin;
    }
    QuadratureGrid::new(lo, hi, opts.n_space, opts.n_time, opts.order)
}

/// For every pair and horizon `h`, the ratio `R = ||P*_{0,h} mu - P*_{0,h} nu||_var / W2(mu, nu)`
/// and `R sqrt(h)`. Both flows of a pair share the seed.
pub fn bound_check_est2(
    model: &ModelSpec,
    pairs: &[InitPair],
    horizons: &[f64],
    cfg: &SolverConfig,
    opts: &BoundOptions,
) -> Result<Vec<BoundRow>> {
    if horizons.is_empty() || horizons.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidParameter { name: "horizons".into(), reason: "need positive horizons".into() });
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for pair in pairs {
        let method = pick_method(pair, opts);
        let w2 = w2_distance(&pair.mu, &pair.nu)?;
        if w2 == 0.0 {
            rows.extend(horizons.iter().map(|&h| BoundRow {
                family: pair.family.clone(),
                horizon: h,
                method,
                w2,
                var: f64::NAN,
                ratio: f64::NAN,
                scaled: f64::NAN,
                skipped: Some("zero denominator: W2(mu, nu) = 0".into()),
            }));
            continue;
        }
        let fa = solve_mckean_vlasov(model, &pair.mu, 0.0, t_max, cfg)?;
        let fb = solve_mckean_vlasov(model, &pair.nu, 0.0, t_max, cfg)?;
        for &h in horizons {
            let var = var_at(model, &fa, &fb, h, method, opts)?;
            let ratio = var / w2;
            rows.push(BoundRow {
                family: pair.family.clone(),
                horizon: h,
                method,
                w2,
                var,
                ratio,
                scaled: ratio * h.sqrt(),
                skipped: None,
            });
        }
    }
    Ok(rows)
}

fn var_at(model: &ModelSpec, fa: &MeasureFlow, fb: &MeasureFlow, h: f64, method: VarMethod, opts: &BoundOptions) -> Result<f64> {
    let range = |f: &MeasureFlow| Error::FlowRange { r: 0.0, t: h, start: f.start(), end: f.end() };
    let ta = fa.cloud_at(h).ok_or_else(|| range(fa))?;
    let tb = fb.cloud_at(h).ok_or_else(|| range(fb))?;
    let grid = grid_for(ta, tb, opts)?;
    var_distance(model, fa, fb, &grid, 0.0, h, method)
}

/// Spread of `R sqrt(h)` over the horizons of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub family: String,
    pub min_scaled: f64,
    pub max_scaled: f64,
}

impl FamilySummary {
    /// `max / min`; finite and small when a single constant fits.
    pub fn spread(&self) -> f64 {
        self.max_scaled / self.min_scaled
    }
}

/// Per-family summaries of the rows that were not skipped, in first-appearance order.
pub fn summarize(rows: &[BoundRow]) -> Vec<FamilySummary> {
    let mut out: Vec<FamilySummary> = Vec::new();
    for r in rows.iter().filter(|r| r.skipped.is_none()) {
        match out.iter_mut().find(|s| s.family == r.family) {
            Some(s) => {
                s.min_scaled = s.min_scaled.min(r.scaled);
                s.max_scaled = s.max_scaled.max(r.scaled);
            }
            None => out.push(FamilySummary { family: r.family.clone(), min_scaled: r.scaled, max_scaled: r.scaled }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ModelParams};

    #[test]
    fn equal_laws_are_skipped() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let mu = ParticleCloud::dirac(&[0.0]).unwrap();
        let pair = InitPair { family: "same".into(), mu: mu.clone(), nu: mu };
        let cfg = SolverConfig { n_particles: 10, dt: 0.01, ..SolverConfig::default() };
        let rows = bound_check_est2(&bm, &[pair], &[0.1, 0.2], &cfg, &BoundOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.skipped.as_deref().is_some_and(|s| s.contains("zero denominator"))));
        assert!(summarize(&rows).is_empty());
    }

    #[test]
    fn brownian_dirac_shift_scales_like_root_two_over_pi() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let pairs = shift_families(1, 0.1, 200, 7).unwrap();
        assert_eq!(pairs.len(), 3);
        let cfg = SolverConfig { n_particles: 50, dt: 0.01, ..SolverConfig::default() };
        let rows = bound_check_est2(&bm, &pairs[..1], &[0.05, 0.1, 0.2, 0.4], &cfg, &BoundOptions::default()).unwrap();
        let target = (2.0 / std::f64::consts::PI).sqrt();
        for r in &rows {
            assert_eq!(r.method, VarMethod::Parametrix);
            assert!((r.w2 - 0.1).abs() < 1e-15);
            assert!((r.scaled / target - 1.0).abs() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn families_shift_by_eps() {
        for pair in shift_families(2, 0.3, 64, 1).unwrap() {
            assert!((w2_distance(&pair.mu, &pair.nu).unwrap() - 0.3).abs() < 1e-12, "{}", pair.family);
        }
    }
}
