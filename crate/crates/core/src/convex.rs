//! Convex generators `f: (0, inf) -> R` shared by every divergence.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};

/// Lower clamp for ratios fed to a generator in exact computations.
pub const DEFAULT_FLOOR: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied generator. Derivatives fall back to finite differences.
#[derive(Clone)]
pub struct CustomGenerator {
    name: String,
    value: ScalarFn,
    derivative: Option<ScalarFn>,
}

impl CustomGenerator {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: None,
        }
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }
}

#[derive(Clone)]
pub enum ConvexGenerator {
    /// `t log t`; the scaled Bregman divergence is then KL for any base.
    TLogT,
    /// `-log t`.
    NegLog,
    /// `(t - 1)^2`.
    Square,
    /// `(t log t - (t + 1) log((t + 1) / 2)) / 2`; its f-divergence is the
    /// Jensen-Shannon divergence, `log 2` for disjoint supports.
    JensenShannon,
    Custom(CustomGenerator),
}

impl fmt::Debug for ConvexGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for ConvexGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl ConvexGenerator {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tlogt" | "kl" => Ok(Self::TLogT),
            "neglog" => Ok(Self::NegLog),
            "square" => Ok(Self::Square),
            "js" | "js-generator" => Ok(Self::JensenShannon),
            other => Err(invalid(
                "f",
                format!("unknown generator `{other}` (expected tlogt, neglog, square or js)"),
            )),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::TLogT => "tlogt",
            Self::NegLog => "neglog",
            Self::Square => "square",
            Self::JensenShannon => "js",
            Self::Custom(c) => &c.name,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::TLogT => xlogx(t),
            Self::NegLog => -t.ln(),
            Self::Square => (t - 1.0) * (t - 1.0),
            Self::JensenShannon => 0.5 * (xlogx(t) - (t + 1.0) * ((t + 1.0) / 2.0).ln()),
            Self::Custom(c) => (c.value)(t),
        }
    }

    pub fn right_derivative(&self, t: f64) -> f64 {
        match self {
            Self::TLogT => t.ln() + 1.0,
            Self::NegLog => -1.0 / t,
            Self::Square => 2.0 * (t - 1.0),
            Self::JensenShannon => 0.5 * (t.ln() - ((t + 1.0) / 2.0).ln()),
            Self::Custom(c) => match &c.derivative {
                Some(d) => d(t),
                None => {
                    let h = 1e-6 * t.abs().max(1.0);
                    if t > h {
                        ((c.value)(t + h) - (c.value)(t - h)) / (2.0 * h)
                    } else {
                        ((c.value)(t + h) - (c.value)(t)) / h
                    }
                }
            },
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match self {
            Self::TLogT => 1.0 / t,
            Self::NegLog => 1.0 / (t * t),
            Self::Square => 2.0,
            Self::JensenShannon => 0.5 * (1.0 / t - 1.0 / (t + 1.0)),
            Self::Custom(_) => {
                let h = 1e-5 * t.abs().max(1.0);
                let lo = (t - h).max(0.5 * t);
                (self.right_derivative(t + h) - self.right_derivative(lo)) / (t + h - lo)
            }
        }
    }

    /// Pointwise Bregman term `f(a) - f(b) - f'(b) (a - b)`.
    pub fn bregman(&self, a: f64, b: f64) -> f64 {
        self.value(a) - self.value(b) - self.right_derivative(b) * (a - b)
    }

    /// Partial derivatives of [`Self::bregman`] in `a` and `b`.
    pub fn bregman_partials(&self, a: f64, b: f64) -> (f64, f64) {
        (
            self.right_derivative(a) - self.right_derivative(b),
            -self.second_derivative(b) * (a - b),
        )
    }
}

fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

/// Clamps a ratio into `[floor, 1 / floor]`; NaN (0/0) maps to the floor.
pub fn clamp_ratio(t: f64, floor: f64) -> f64 {
    if t.is_nan() {
        return floor;
    }
    t.clamp(floor, 1.0 / floor)
}
