use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{time_slack, MeasureFlow};

/// Step size, particle count, seed and Monte Carlo size shared by the solvers
/// and estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub n_mc: usize,
    /// Interaction partners per particle in the mean-field variation; `None`
    /// uses every particle.
    pub partners: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dt: 1e-3, n_particles: 10_000, seed: 42, n_mc: 100_000, partners: None }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |field: &str, invariant: &str| Error::ConfigRange { field: field.into(), invariant: invariant.into() };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(range("dt", "dt > 0"));
        }
        if self.n_particles == 0 {
            return Err(range("n_particles", "N >= 1"));
        }
        if self.n_mc == 0 {
            return Err(range("n_mc", "n_mc >= 1"));
        }
        if self.partners == Some(0) {
            return Err(range("partners", "partners >= 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Uniform time grid over `[s, t]` with step at most `dt`.
pub(crate) fn time_grid(s: f64, t: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t > s) || !s.is_finite() || !t.is_finite() {
        return Err(Error::InvalidTimes(format!("need finite t > s, got [{s}, {t}]")));
    }
    let steps = (((t - s) / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    Ok((0..=steps).map(|k| if k == steps { t } else { s + k as f64 * h }).collect())
}

/// Step grid of a decoupled run together with the flow slice used at each step.
#[derive(Debug, Clone)]
pub(crate) struct StepGrid {
    pub times: Vec<f64>,
    pub cloud: Vec<usize>,
}

impl StepGrid {
    pub(crate) fn new(flow: &MeasureFlow, s: f64, t: f64, dt: f64) -> Result<Self> {
        flow.check_covers(s, t)?;
        let times = time_grid(s, t, dt)?;
        let cloud = times
            .iter()
            .map(|&u| flow.index_at(u.min(flow.end())).unwrap_or(if u < flow.start() + time_slack(u) { 0 } else { flow.len() - 1 }))
            .collect();
        Ok(Self { times, cloud })
    }

    pub(crate) fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_ranges() {
        let c = SolverConfig::default();
        assert_eq!((c.dt, c.n_particles, c.n_mc, c.seed), (1e-3, 10_000, 100_000, 42));
        let bad = SolverConfig { dt: 0.0, ..c };
        match bad.validate() {
            Err(Error::ConfigRange { invariant, .. }) => assert_eq!(invariant, "dt > 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_hits_both_ends() {
        let g = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[4], 1.0);
        assert_eq!(time_grid(0.0, 1.0, 0.1).unwrap().len(), 11);
    }
}
