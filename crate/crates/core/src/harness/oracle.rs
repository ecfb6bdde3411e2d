//! Closed forms for the linear built-in models.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::estimators::TestFunction;
use crate::model::ModelParams;

/// `X_t ~ N(mean, sd^2 Id)` started from `x`, with `d mean / dx = jac Id`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GaussLaw {
    pub mean: Vec<f64>,
    pub sd: f64,
    pub jac: f64,
}

/// `(1 - e^{-2 a tau}) / 2a`, the OU variance factor, with its `a -> 0` limit.
fn ou_factor(a: f64, tau: f64) -> f64 {
    if a == 0.0 {
        tau
    } else {
        -(-2.0 * a * tau).exp_m1() / (2.0 * a)
    }
}

/// Transition law of the measure-free linear models.
pub(crate) fn gaussian_transition(name: &str, p: &ModelParams, x: &[f64], tau: f64) -> Option<GaussLaw> {
    match name {
        "brownian" => Some(GaussLaw { mean: x.to_vec(), sd: tau.sqrt(), jac: 1.0 }),
        "constant" => Some(GaussLaw { mean: x.iter().map(|v| v + p.drift * tau).collect(), sd: p.sigma * tau.sqrt(), jac: 1.0 }),
        "ou" => {
            let decay = (-p.alpha * tau).exp();
            Some(GaussLaw { mean: x.iter().map(|v| v * decay).collect(), sd: p.sigma * ou_factor(p.alpha, tau).sqrt(), jac: decay })
        }
        _ => None,
    }
}

impl GaussLaw {
    pub fn pdf(&self, z: &[f64]) -> f64 {
        let n = Normal::new(0.0, self.sd).expect("positive sd");
        z.iter().zip(&self.mean).map(|(zk, mk)| n.pdf(zk - mk)).product()
    }

    /// `<grad_x E f(X_t), v>` for `f` acting on the first coordinate.
    pub fn gradient(&self, f: &TestFunction, v: &[f64]) -> f64 {
        let m = self.mean[0];
        let s = self.sd;
        let n = Normal::new(0.0, 1.0).expect("standard normal");
        let dm = match *f {
            TestFunction::Identity => 1.0,
            TestFunction::One => 0.0,
            TestFunction::Square => 2.0 * m,
            TestFunction::Clipped(c) => n.cdf((c - m) / s) - n.cdf((-c - m) / s),
            TestFunction::Cos => -m.sin() * (-0.5 * s * s).exp(),
            TestFunction::Step => n.pdf(m / s) / s,
            TestFunction::Tanh => {
                // E sech^2(m + s Z) by the trapezoid rule on +-12 sd.
                let k = 4801;
                let h = 24.0 / (k - 1) as f64;
                (0..k)
                    .map(|i| {
                        let z = -12.0 + i as f64 * h;
                        let w = if i == 0 || i + 1 == k { 0.5 } else { 1.0 };
                        w * h * n.pdf(z) / (m + s * z).cosh().powi(2)
                    })
                    .sum()
            }
        };
        self.jac * v[0] * dm
    }
}

/// Linear moment equations `m' = a m + c`, `V' = 2 a_v V + q` per axis, for
/// the models where they close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LinearMoments {
    pub a: f64,
    pub c: f64,
    pub a_v: f64,
    pub q: f64,
}

pub(crate) fn linear_moments(name: &str, p: &ModelParams) -> Option<LinearMoments> {
    let q = p.sigma * p.sigma;
    match name {
        "brownian" => Some(LinearMoments { a: 0.0, c: 0.0, a_v: 0.0, q: 1.0 }),
        "constant" => Some(LinearMoments { a: 0.0, c: p.drift, a_v: 0.0, q }),
        "ou" => Some(LinearMoments { a: -p.alpha, c: 0.0, a_v: -p.alpha, q }),
        // The interaction pulls towards the mean, so the mean itself is free.
        "meanfield_ou" => Some(LinearMoments { a: 0.0, c: 0.0, a_v: -p.alpha, q }),
        _ => None,
    }
}

impl LinearMoments {
    /// RK4 for `(m, V)` from `u0` to `u1` with at most `h` per step.
    pub fn integrate(&self, m0: f64, v0: f64, u0: f64, u1: f64, h: f64) -> (f64, f64) {
        let n = (((u1 - u0) / h) - 1e-9).ceil().max(1.0) as usize;
        let h = (u1 - u0) / n as f64;
        let rhs = |m: f64, v: f64| (self.a * m + self.c, 2.0 * self.a_v * v + self.q);
        let (mut m, mut v) = (m0, v0);
        for _ in 0..n {
            let k1 = rhs(m, v);
            let k2 = rhs(m + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = rhs(m + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rhs(m + h * k3.0, v + h * k3.1);
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (m, v)
    }

    /// Variance of the noise in the empirical mean of `n` particles after `tau`.
    pub fn mean_noise_var(&self, tau: f64, n: usize) -> f64 {
        self.q * ou_factor(-self.a, tau) / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_law_matches_the_textbook_form() {
        let p = ModelParams::default();
        let law = gaussian_transition("ou", &p, &[1.0], 0.5).unwrap();
        assert!((law.mean[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((law.sd * law.sd - (1.0 - (-1.0f64).exp()) / 2.0).abs() < 1e-15);
        assert!(gaussian_transition("meanfield_ou", &p, &[0.0], 0.5).is_none());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let p = ModelParams::default();
        let v = [1.0];
        for f in [TestFunction::Clipped(1.0), TestFunction::Cos, TestFunction::Tanh, TestFunction::Step, TestFunction::Square] {
            let x = 0.4;
            // Midpoint rule on a fixed grid in y: the jumps and kinks of f sit on
            // cell edges and stay put as x moves.
            let expect = |x: f64| {
                let law = gaussian_transition("ou", &p, &[x], 0.3).unwrap();
                let n = Normal::new(law.mean[0], law.sd).unwrap();
                let k = 16000;
                let h = 16.0 / k as f64;
                (0..k).map(|i| -8.0 + (i as f64 + 0.5) * h).map(|y| h * n.pdf(y) * f.eval(&[y])).sum::<f64>()
            };
            let fd = (expect(x + 1e-4) - expect(x - 1e-4)) / 2e-4;
            let g = gaussian_transition("ou", &p, &[x], 0.3).unwrap().gradient(&f, &v);
            assert!((fd - g).abs() < 1e-5, "{f}: {fd} vs {g}");
        }
    }

    #[test]
    fn rk4_matches_the_variance_solution() {
        let lm = linear_moments("ou", &ModelParams::default()).unwrap();
        let (m, v) = lm.integrate(2.0, 0.0, 0.0, 1.0, 1e-3);
        assert!((m - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-12);
        assert!((lm.mean_noise_var(1.0, 1) - v).abs() < 1e-12);
    }
}
