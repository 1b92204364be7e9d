//! Probability measures with analytic densities and seeded samplers.
//!
//! A [`Measure`] is one of five kinds: Gaussian, uniform box, finite mixture,
//! empirical sample table, or a Gaussian convolution of another measure.
//! Every kind can be sampled. All kinds except empirical have a density;
//! empirical measures are only reachable through density-ratio models.

mod quadrature;

pub use quadrature::QuadratureGrid;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::sample_table::SampleTable;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal distribution with cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(invalid("mean", "empty mean vector"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        let chol = spd_cholesky(&cov)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            chol,
            log_det,
        })
    }

    /// `N(mean, var * I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * var)
    }

    /// Zero-mean noise `N(0, cov)`.
    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        Self::new(vec![0.0; d], cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (d as f64 * LN_2PI + self.log_det + y.norm_squared())
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Writes `mean + L z` into `out`.
    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        self.transform_into(&z, out);
    }

    /// Writes `mean + L z` for a given standard-normal draw `z`.
    pub fn transform_into(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.mean[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.chol[(i, j)] * zj;
            }
            *o = acc;
        }
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[(i, j)].abs() <= 1e-15))
    }
}

/// Axis-aligned box with uniform density.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    volume: f64,
}

impl UniformBox {
    /// Rejects empty and zero-width axes.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid("lo/hi", "bounds must be nonempty and equal length"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(invalid("lo/hi", format!("degenerate axis [{a}, {b}]")));
            }
        }
        let volume = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        Ok(Self { lo, hi, volume })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b);
        if inside {
            1.0 / self.volume
        } else {
            0.0
        }
    }

    /// Mean density over the cell `x ± half`.
    fn cell_density(&self, x: &[f64], half: &[f64]) -> f64 {
        let mut frac = 1.0;
        for (i, v) in x.iter().enumerate() {
            let h = half[i];
            if h <= 0.0 {
                if v < &self.lo[i] || v > &self.hi[i] {
                    return 0.0;
                }
                continue;
            }
            let overlap = (v + h).min(self.hi[i]) - (v - h).max(self.lo[i]);
            if overlap <= 0.0 {
                return 0.0;
            }
            frac *= overlap / (2.0 * h);
        }
        frac / self.volume
    }
}

/// Finite mixture with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Measure>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Measure>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(invalid(
                "weights",
                "need one weight per component and at least one component",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights", "weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("weights sum to {total}, not 1")));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Measure] {
        &self.components
    }
}

/// `base * N(0, noise)`: the law of `X + E` with independent `E ~ N(0, noise)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Convolved {
    base: Box<Measure>,
    noise: Gaussian,
}

impl Convolved {
    pub fn base(&self) -> &Measure {
        &self.base
    }

    pub fn noise(&self) -> &Gaussian {
        &self.noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Gaussian(Gaussian),
    Uniform(UniformBox),
    Mixture(Mixture),
    Empirical(SampleTable),
    Convolved(Convolved),
}

impl From<Gaussian> for Measure {
    fn from(g: Gaussian) -> Self {
        Measure::Gaussian(g)
    }
}

impl From<UniformBox> for Measure {
    fn from(u: UniformBox) -> Self {
        Measure::Uniform(u)
    }
}

impl Measure {
    pub fn gaussian(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Gaussian::new(mean, cov).map(Measure::Gaussian)
    }

    /// One-dimensional `N(mean, var)`.
    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        Gaussian::isotropic(vec![mean], var).map(Measure::Gaussian)
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        UniformBox::new(lo, hi).map(Measure::Uniform)
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Measure>) -> Result<Self> {
        Mixture::new(weights, components).map(Measure::Mixture)
    }

    pub fn empirical(samples: SampleTable) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid(
                "samples",
                "empirical measure needs at least one sample",
            ));
        }
        Ok(Measure::Empirical(samples))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Measure::Gaussian(_) => "gaussian",
            Measure::Uniform(_) => "uniform",
            Measure::Mixture(_) => "mixture",
            Measure::Empirical(_) => "empirical",
            Measure::Convolved(_) => "convolved",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::Uniform(u) => u.dim(),
            Measure::Mixture(m) => m.components[0].dim(),
            Measure::Empirical(s) => s.dim(),
            Measure::Convolved(c) => c.noise.dim(),
        }
    }

    /// Whether [`Measure::density`] is available.
    pub fn is_analytic(&self) -> bool {
        match self {
            Measure::Empirical(_) => false,
            Measure::Mixture(m) => m.components.iter().all(Measure::is_analytic),
            Measure::Convolved(c) => c.base.is_analytic(),
            _ => true,
        }
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.density_unchecked(x)
    }

    fn density_unchecked(&self, x: &[f64]) -> Result<f64> {
        match self {
            Measure::Gaussian(g) => Ok(g.density(x)),
            Measure::Uniform(u) => Ok(u.density(x)),
            Measure::Mixture(m) => {
                let mut acc = 0.0;
                for (w, c) in m.weights.iter().zip(&m.components) {
                    if *w > 0.0 {
                        acc += w * c.density_unchecked(x)?;
                    }
                }
                Ok(acc)
            }
            Measure::Empirical(_) => Err(Error::NoDensity("empirical")),
            Measure::Convolved(c) => convolved_density(&c.base, c.noise.cov(), x),
        }
    }

    /// Density averaged over the axis-aligned cell `x ± half`.
    ///
    /// Box densities are averaged exactly so that quadrature sums over a
    /// fixed grid stay continuous when a box edge moves between nodes. Smooth
    /// kinds use the point value.
    pub fn cell_density(&self, x: &[f64], half: &[f64]) -> Result<f64> {
        match self {
            Measure::Uniform(u) => Ok(u.cell_density(x, half)),
            Measure::Mixture(m) => {
                let mut acc = 0.0;
                for (w, c) in m.weights.iter().zip(&m.components) {
                    if *w > 0.0 {
                        acc += w * c.cell_density(x, half)?;
                    }
                }
                Ok(acc)
            }
            _ => self.density(x),
        }
    }

    /// Draws `n` points. Deterministic given the RNG state.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<SampleTable> {
        if n == 0 {
            return Err(invalid("n", "sample count must be at least 1"));
        }
        let mut out = SampleTable::zeros(n, self.dim());
        for i in 0..n {
            self.sample_point(rng, out.row_mut(i));
        }
        Ok(out)
    }

    pub fn sample_point(&self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            Measure::Gaussian(g) => g.sample_into(rng, out),
            Measure::Uniform(u) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let t: f64 = rng.random();
                    *o = u.lo[i] + (u.hi[i] - u.lo[i]) * t;
                }
            }
            Measure::Mixture(m) => {
                let k = pick_component(&m.weights, rng.random());
                m.components[k].sample_point(rng, out);
            }
            Measure::Empirical(s) => {
                let j = rng.random_range(0..s.len());
                out.copy_from_slice(s.row(j));
            }
            Measure::Convolved(c) => {
                c.base.sample_point(rng, out);
                let mut e = vec![0.0; out.len()];
                c.noise.sample_into(rng, &mut e);
                out.iter_mut().zip(&e).for_each(|(o, v)| *o += v);
            }
        }
    }

    /// Per-axis bounds outside of which the measure has negligible mass.
    pub fn effective_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Measure::Gaussian(g) => {
                let d = g.dim();
                let lo = (0..d)
                    .map(|i| g.mean[i] - 6.0 * g.cov[(i, i)].sqrt())
                    .collect();
                let hi = (0..d)
                    .map(|i| g.mean[i] + 6.0 * g.cov[(i, i)].sqrt())
                    .collect();
                (lo, hi)
            }
            Measure::Uniform(u) => (u.lo.clone(), u.hi.clone()),
            Measure::Mixture(m) => union_bounds(m.components.iter().map(Measure::effective_bounds)),
            Measure::Empirical(s) => {
                let d = s.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for r in s.rows() {
                    for j in 0..d {
                        lo[j] = lo[j].min(r[j]);
                        hi[j] = hi[j].max(r[j]);
                    }
                }
                (lo, hi)
            }
            Measure::Convolved(c) => {
                let (mut lo, mut hi) = c.base.effective_bounds();
                for i in 0..lo.len() {
                    let s = 6.0 * c.noise.cov[(i, i)].sqrt();
                    lo[i] -= s;
                    hi[i] += s;
                }
                (lo, hi)
            }
        }
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub(crate) fn union_bounds(it: impl Iterator<Item = (Vec<f64>, Vec<f64>)>) -> (Vec<f64>, Vec<f64>) {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for (l, h) in it {
        if lo.is_empty() {
            lo = l;
            hi = h;
            continue;
        }
        for i in 0..lo.len() {
            lo[i] = lo[i].min(l[i]);
            hi[i] = hi[i].max(h[i]);
        }
    }
    (lo, hi)
}

/// Convolves `measure` with `N(0, cov)`.
pub fn convolve_gaussian(measure: &Measure, cov: DMatrix<f64>) -> Result<Measure> {
    let noise = Gaussian::centered(cov)?;
    if noise.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            got: noise.dim(),
        });
    }
    Ok(Measure::Convolved(Convolved {
        base: Box::new(measure.clone()),
        noise,
    }))
}

/// Isotropic convenience wrapper for [`convolve_gaussian`].
pub fn convolve_isotropic(measure: &Measure, var: f64) -> Result<Measure> {
    let d = measure.dim();
    convolve_gaussian(measure, DMatrix::identity(d, d) * var)
}

fn convolved_density(base: &Measure, noise: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    match base {
        Measure::Gaussian(g) => {
            let g2 = Gaussian::new(g.mean.iter().copied().collect(), &g.cov + noise)?;
            Ok(g2.density(x))
        }
        Measure::Uniform(u) => {
            let n = Gaussian::centered(noise.clone())?;
            if !n.is_diagonal() {
                return Err(Error::Unsupported(
                    "box convolved with correlated noise".into(),
                ));
            }
            let mut acc = 1.0 / u.volume;
            for i in 0..x.len() {
                let s = noise[(i, i)].sqrt();
                acc *= normal_interval_mass((x[i] - u.lo[i]) / s, (x[i] - u.hi[i]) / s);
            }
            Ok(acc)
        }
        Measure::Mixture(m) => {
            let mut acc = 0.0;
            for (w, c) in m.weights.iter().zip(&m.components) {
                if *w > 0.0 {
                    acc += w * convolved_density(c, noise, x)?;
                }
            }
            Ok(acc)
        }
        Measure::Convolved(c) => convolved_density(&c.base, &(c.noise.cov() + noise), x),
        Measure::Empirical(_) => Err(Error::NoDensity("empirical")),
    }
}

/// `Phi(a) - Phi(b)` for `a >= b`, evaluated through whichever tail keeps
/// full relative precision.
pub(crate) fn normal_interval_mass(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let v = if b >= 0.0 {
        0.5 * (libm::erfc(b * r) - libm::erfc(a * r))
    } else if a <= 0.0 {
        0.5 * (libm::erfc(-a * r) - libm::erfc(-b * r))
    } else {
        1.0 - 0.5 * libm::erfc(a * r) - 0.5 * libm::erfc(-b * r)
    };
    v.max(0.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

pub(crate) fn spd_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(Error::NotSpd("matrix is not square".into()));
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (cov[(i, j)], cov[(j, i)]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::NotSpd(format!("asymmetric entry ({i},{j})")));
            }
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotSpd("not positive definite".into()))
}
