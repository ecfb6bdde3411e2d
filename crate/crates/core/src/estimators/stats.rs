/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub value: f64,
    /// Sample standard deviation over `sqrt(n_mc)` for plain averages; the
    /// propagated error for derived quantities.
    pub std_error: f64,
    pub n_mc: usize,
}

/// Scalar estimates share the gradient layout.
pub type Estimate = GradientEstimate;

impl GradientEstimate {
    /// A deterministic value.
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, n_mc: 1 }
    }

    /// Plain average of equally weighted samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut m = Moments::default();
        samples.iter().for_each(|&x| m.push(x));
        m.finish()
    }

    /// Weighted average of samples; weights must sum to one.
    pub fn weighted(samples: &[f64], weights: &[f64]) -> Self {
        let n = samples.len();
        let mean: f64 = samples.iter().zip(weights).map(|(x, w)| w * x).sum();
        let var: f64 = samples.iter().zip(weights).map(|(x, w)| (w * (x - mean)).powi(2)).sum();
        let se = if n > 1 { (var * n as f64 / (n - 1) as f64).sqrt() } else { f64::INFINITY };
        Self { value: mean, std_error: se, n_mc: n }
    }

    /// `sqrt(se_a^2 + se_b^2)` for independent estimates.
    pub fn joint_se(&self, other: &Self) -> f64 {
        self.std_error.hypot(other.std_error)
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Self) -> Self {
        Self { value: self.value - other.value, std_error: self.joint_se(other), n_mc: self.n_mc.min(other.n_mc) }
    }

    /// `|value - target| <= k se + 1e-8`; the floor covers estimates that are
    /// exact up to rounding.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + 1e-8
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    /// Variance of the mean.
    pub(crate) fn var_of_mean(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            self.m2 / (self.n - 1) as f64 / self.n as f64
        }
    }

    pub(crate) fn finish(&self) -> GradientEstimate {
        GradientEstimate { value: self.mean, std_error: self.var_of_mean().sqrt(), n_mc: self.n }
    }
}
