use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scalar test functions of the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Identity,
    /// `x` clipped to `[-c, c]`.
    Clipped(f64),
    Cos,
    Tanh,
    /// Indicator of `(0, inf)`.
    Step,
    One,
    Square,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let u = x[0];
        match *self {
            Self::Identity => u,
            Self::Clipped(c) => u.clamp(-c, c),
            Self::Cos => u.cos(),
            Self::Tanh => u.tanh(),
            Self::Step => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::One => 1.0,
            Self::Square => u * u,
        }
    }

    /// `||f||_inf`, infinite for unbounded functions.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Self::Identity | Self::Square => f64::INFINITY,
            Self::Clipped(c) => c,
            Self::Cos | Self::Tanh | Self::Step | Self::One => 1.0,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm().is_finite()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Clipped(c) => write!(f, "clipped:{c}"),
            Self::Cos => write!(f, "cos"),
            Self::Tanh => write!(f, "tanh"),
            Self::Step => write!(f, "step"),
            Self::One => write!(f, "one"),
            Self::Square => write!(f, "square"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Names as printed by `Display`; `clipped` alone clips at 1.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter { name: "test function".into(), reason: format!("unknown `{s}`") };
        Ok(match s {
            "identity" => Self::Identity,
            "clipped" => Self::Clipped(1.0),
            "cos" => Self::Cos,
            "tanh" => Self::Tanh,
            "step" => Self::Step,
            "one" => Self::One,
            "square" => Self::Square,
            _ => match s.strip_prefix("clipped:") {
                Some(c) => {
                    let c: f64 = c.parse().map_err(|_| bad())?;
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(bad());
                    }
                    Self::Clipped(c)
                }
                None => return Err(bad()),
            },
        })
    }
}
