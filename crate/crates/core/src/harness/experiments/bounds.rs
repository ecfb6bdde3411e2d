//! Variation distance over `W2` for shifted initial laws across horizons.

use crate::error::Result;
use crate::estimators::{bound_check_est2, shift_families, summarize, BoundOptions};
use crate::harness::experiments::Ctx;
use crate::harness::report::{num, Table};

pub(crate) const MIN_HORIZONS: usize = 4;
pub(crate) const MIN_FAMILIES: usize = 3;
pub(crate) const SCALING_SPREAD: f64 = 2.0;
pub(crate) const BROWNIAN_REL_TOL: f64 = 0.05;

/// `R sqrt(h)` for two unit-noise Brownian Diracs a small distance apart.
pub fn brownian_shift_constant() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let bc = &cfg.bounds;
    let pairs = shift_families(cfg.dim(), bc.eps, bc.n_samples, cfg.solver.seed)?;
    let opts = BoundOptions {
        n_space: cfg.grid.n_space,
        n_time: cfg.grid.n_time,
        order: cfg.grid.order,
        method: cfg.var_method()?,
    };
    let rows = bound_check_est2(&ctx.model, &pairs, &bc.horizons, &cfg.solver, &opts)?;

    let mut table = Table::new("bounds", &["family", "horizon", "method", "w2", "var", "ratio", "scaled", "skipped"]);
    for r in &rows {
        table.push(vec![
            r.family.clone(),
            num(r.horizon),
            r.method.to_string(),
            num(r.w2),
            num(r.var),
            num(r.ratio),
            num(r.scaled),
            r.skipped.clone().unwrap_or_default(),
        ]);
        if r.skipped.is_none() {
            ctx.record(format!("scaled_{}_h{}", r.family, num(r.horizon)), r.scaled, 0.0);
        }
    }
    ctx.tables.push(table);

    let summaries = summarize(&rows);
    let mut table = Table::new("bounds_summary", &["family", "min_scaled", "max_scaled", "spread"]);
    for sm in &summaries {
        table.push(vec![sm.family.clone(), num(sm.min_scaled), num(sm.max_scaled), num(sm.spread())]);
        let sp = sm.spread();
        ctx.check(
            format!("bounds_spread_{}", sm.family),
            sp.is_finite() && sp < SCALING_SPREAD,
            format!("R sqrt(h) in [{}, {}]", num(sm.min_scaled), num(sm.max_scaled)),
        );
    }
    ctx.tables.push(table);

    let mut horizons: Vec<f64> = rows.iter().filter(|r| r.skipped.is_none()).map(|r| r.horizon).collect();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    ctx.check(
        "bounds_coverage",
        horizons.len() >= MIN_HORIZONS && summaries.len() >= MIN_FAMILIES,
        format!("{} horizons and {} families reported", horizons.len(), summaries.len()),
    );

    if cfg.model.name == "brownian" {
        let target = brownian_shift_constant();
        let devs: Vec<f64> = rows
            .iter()
            .filter(|r| r.family == "dirac_shift" && r.skipped.is_none())
            .map(|r| (r.scaled - target).abs() / target)
            .collect();
        let worst = devs.iter().copied().fold(0.0, f64::max);
        ctx.check(
            "brownian_dirac_shift",
            !devs.is_empty() && worst <= BROWNIAN_REL_TOL,
            format!("largest relative deviation from {} is {} over {} horizons", num(target), num(worst), devs.len()),
        );
    }
    Ok(())
}
