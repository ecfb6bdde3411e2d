use std::io::Write;

use crate::error::{Error, Result};
use crate::model::ParticleCloud;

/// Time-indexed sequence of particle clouds approximating `t -> P*_{s,t} mu`.
#[derive(Debug, Clone)]
pub struct MeasureFlow {
    times: Vec<f64>,
    clouds: Vec<ParticleCloud>,
    seed: Option<u64>,
}

/// Slack used when locating a time on the flow grid.
pub(crate) fn time_slack(u: f64) -> f64 {
    1e-12 * u.abs().max(1.0)
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, clouds: Vec<ParticleCloud>) -> Result<Self> {
        if times.is_empty() || times.len() != clouds.len() {
            return Err(Error::InvalidTimes(format!(
                "{} times for {} clouds",
                times.len(),
                clouds.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTimes("time grid must be strictly increasing".into()));
        }
        let (n, d) = (clouds[0].len(), clouds[0].dim());
        for c in &clouds[1..] {
            if c.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
            }
            if c.len() != n {
                return Err(Error::InvalidCloud(format!(
                    "flow clouds must share N = {n}, found {}",
                    c.len()
                )));
            }
        }
        Ok(Self { times, clouds, seed: None })
    }

    /// A flow that holds one cloud fixed on a uniform grid over `[s, t]`.
    ///
    /// Useful for measure-free models, where the flow only fixes the time range.
    pub fn constant(cloud: ParticleCloud, s: f64, t: f64, steps: usize) -> Result<Self> {
        if !(t > s) || steps == 0 {
            return Err(Error::InvalidTimes(format!("need t > s and steps > 0, got [{s}, {t}]")));
        }
        let h = (t - s) / steps as f64;
        let times: Vec<f64> = (0..=steps)
            .map(|k| if k == steps { t } else { s + k as f64 * h })
            .collect();
        let clouds = vec![cloud; steps + 1];
        Self::new(times, clouds)
    }

    pub(crate) fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Seed of the particle run that produced this flow, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[ParticleCloud] {
        &self.clouds
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim()
    }

    pub fn initial(&self) -> &ParticleCloud {
        &self.clouds[0]
    }

    pub fn terminal(&self) -> &ParticleCloud {
        self.clouds.last().unwrap()
    }

    /// Index of the last grid time at or below `u` (piecewise-constant lookup).
    pub fn index_at(&self, u: f64) -> Option<usize> {
        let slack = time_slack(u);
        if u < self.times[0] - slack || u > self.end() + slack {
            return None;
        }
        let k = self.times.partition_point(|&tk| tk <= u + slack);
        Some(k.saturating_sub(1))
    }

    pub fn cloud_at(&self, u: f64) -> Option<&ParticleCloud> {
        self.index_at(u).map(|k| &self.clouds[k])
    }

    pub(crate) fn check_covers(&self, r: f64, t: f64) -> Result<()> {
        if r < self.start() - time_slack(r) || t > self.end() + time_slack(t) {
            return Err(Error::FlowRange { r, t, start: self.start(), end: self.end() });
        }
        Ok(())
    }

    /// Single-file export with a leading `time` column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header = vec!["time".to_string()];
        header.extend((1..=d).map(|k| format!("x_{k}")));
        header.push("weight".into());
        writeln!(w, "{}", header.join(","))?;
        for (t, c) in self.times.iter().zip(&self.clouds) {
            for (p, wt) in c.iter() {
                let mut row = vec![crate::harness::fmt_f64(*t)];
                row.extend(p.iter().map(|x| crate::harness::fmt_f64(*x)));
                row.push(crate::harness::fmt_f64(wt));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow() -> MeasureFlow {
        let c = ParticleCloud::dirac(&[0.0]).unwrap();
        MeasureFlow::constant(c, 0.0, 1.0, 10).unwrap()
    }

    #[test]
    fn lookup_is_piecewise_constant_from_below() {
        let f = flow();
        assert_eq!(f.index_at(0.0), Some(0));
        assert_eq!(f.index_at(0.05), Some(0));
        assert_eq!(f.index_at(0.1), Some(1));
        assert_eq!(f.index_at(0.3 - 1e-15), Some(3));
        assert_eq!(f.index_at(1.0), Some(10));
        assert_eq!(f.index_at(1.1), None);
        assert_eq!(f.index_at(-0.1), None);
    }

    #[test]
    fn rejects_non_increasing_grid() {
        let c = ParticleCloud::dirac(&[0.0]).unwrap();
        assert!(MeasureFlow::new(vec![0.0, 0.0], vec![c.clone(), c]).is_err());
    }

    #[test]
    fn rejects_mixed_sizes() {
        let a = ParticleCloud::dirac(&[0.0]).unwrap();
        let b = ParticleCloud::uniform(1, vec![0.0, 1.0]).unwrap();
        assert!(MeasureFlow::new(vec![0.0, 1.0], vec![a, b]).is_err());
    }
}
