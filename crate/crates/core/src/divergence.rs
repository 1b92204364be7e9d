//! Quadrature evaluation of separable Bregman, f- and scaled Bregman
//! divergences between analytic measures.
//!
//! These are exact up to the trapezoid rule and serve as the reference for
//! the sample-based estimator. Ratios and densities are clamped into
//! `[floor, 1/floor]` before a generator is applied, with
//! `floor = DEFAULT_FLOOR`.

use crate::convex::{clamp_ratio, ConvexGenerator, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::measures::{Measure, QuadratureGrid};

/// Base measure for [`scaled_bregman`].
#[derive(Debug, Clone, Copy)]
pub enum BaseDensity<'a> {
    Measure(&'a Measure),
    /// Unit density on the grid box. Unnormalized; with it the scaled
    /// divergence coincides with the separable one.
    Lebesgue,
}

/// Density below which a base measure counts as vanishing.
const ZERO_BASE: f64 = f64::MIN_POSITIVE;
/// Density above which `p` or `q` make a vanishing base ill-posed.
const ILL_POSED_MASS: f64 = 1e-6;

fn check_dims(grid: &QuadratureGrid, measures: &[&Measure]) -> Result<()> {
    for m in measures {
        if m.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: m.dim(),
            });
        }
    }
    Ok(())
}

/// `int f(p) - f(q) - f'(q) (p - q) dx`.
pub fn separable_bregman(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_dims(grid, &[p, q])?;
    let pd = grid.densities(p)?;
    let qd = grid.densities(q)?;
    Ok(pd
        .iter()
        .zip(&qd)
        .zip(grid.weights())
        .map(|((a, b), w)| {
            let a = clamp_ratio(*a, DEFAULT_FLOOR);
            let b = clamp_ratio(*b, DEFAULT_FLOOR);
            w * f.bregman(a, b)
        })
        .sum())
}

/// Weighted per-node terms of `int q f(p / q) dx`.
///
/// Where `q` vanishes the weight uses the clamped `q`, so that the
/// recession term `p * lim f(t)/t` is picked up on `p`-only regions.
pub fn f_divergence_terms(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_dims(grid, &[p, q])?;
    let pd = grid.densities(p)?;
    let qd = grid.densities(q)?;
    Ok(pd
        .iter()
        .zip(&qd)
        .zip(grid.weights())
        .map(|((a, b), w)| {
            let qc = b.max(DEFAULT_FLOOR);
            let t = clamp_ratio(a / qc, DEFAULT_FLOOR);
            w * qc * f.value(t)
        })
        .collect())
}

pub fn f_divergence(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    grid: &QuadratureGrid,
) -> Result<f64> {
    Ok(f_divergence_terms(f, p, q, grid)?.iter().sum())
}

/// Per-node scaled Bregman terms split as `slope + rest`, both weighted.
///
/// `slope = -f'(q/m) p` carries the clamp-sized part when `q` vanishes
/// under `p` and depends on the base only through the clamp, while `rest`
/// stays of order one. Differencing the two parts separately keeps
/// finite-difference gradients free of rounding in the huge part.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTerms {
    pub slope: Vec<f64>,
    pub rest: Vec<f64>,
}

impl ScaledTerms {
    pub fn total(&self) -> f64 {
        self.slope.iter().sum::<f64>() + self.rest.iter().sum::<f64>()
    }

    /// `sum(self - other)` taken part by part.
    pub fn difference(&self, other: &ScaledTerms) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>();
        d(&self.slope, &other.slope) + d(&self.rest, &other.rest)
    }
}

pub fn scaled_bregman_parts(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    base: BaseDensity<'_>,
    grid: &QuadratureGrid,
) -> Result<ScaledTerms> {
    check_dims(grid, &[p, q])?;
    let pd = grid.densities(p)?;
    let qd = grid.densities(q)?;
    let md = match base {
        BaseDensity::Measure(m) => {
            check_dims(grid, &[m])?;
            grid.densities(m)?
        }
        BaseDensity::Lebesgue => vec![1.0; grid.len()],
    };
    let mut slope = Vec::with_capacity(grid.len());
    let mut rest = Vec::with_capacity(grid.len());
    for (((a, b), m), w) in pd.iter().zip(&qd).zip(&md).zip(grid.weights()) {
        if *m < ZERO_BASE {
            let worst = a.max(*b);
            if worst > ILL_POSED_MASS {
                return Err(Error::IllPosedBase { value: worst });
            }
            slope.push(0.0);
            rest.push(0.0);
            continue;
        }
        let (rp, rq) = (a / m, b / m);
        let tp = clamp_ratio(rp, DEFAULT_FLOOR);
        let tq = clamp_ratio(rq, DEFAULT_FLOOR);
        // m t is replaced by the unscaled density wherever no clamp is active
        let mp = if tp == rp { *a } else { m * tp };
        let mq = if tq == rq { *b } else { m * tq };
        let d = f.right_derivative(tq);
        slope.push(-w * d * mp);
        rest.push(w * (m * (f.value(tp) - f.value(tq)) + d * mq));
    }
    Ok(ScaledTerms { slope, rest })
}

/// Weighted per-node terms of the scaled Bregman divergence.
pub fn scaled_bregman_terms(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    base: BaseDensity<'_>,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    let t = scaled_bregman_parts(f, p, q, base, grid)?;
    Ok(t.slope.iter().zip(&t.rest).map(|(a, b)| a + b).collect())
}

/// `int [f(p/m) - f(q/m) - f'(q/m) (p/m - q/m)] dM`.
pub fn scaled_bregman(
    f: &ConvexGenerator,
    p: &Measure,
    q: &Measure,
    base: BaseDensity<'_>,
    grid: &QuadratureGrid,
) -> Result<f64> {
    Ok(scaled_bregman_terms(f, p, q, base, grid)?.iter().sum())
}
