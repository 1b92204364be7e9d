use crate::error::{invalid, Result};
use crate::measures::{union_bounds, Measure};

/// Composite trapezoid rule on a 1D interval or a 2D rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    half: Vec<f64>,
}

pub const MIN_POINTS: usize = 64;

impl QuadratureGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        let dim = lo.len();
        if !(1..=2).contains(&dim) || hi.len() != dim {
            return Err(invalid("grid", "quadrature supports dimension 1 or 2"));
        }
        if points_per_axis < MIN_POINTS {
            return Err(invalid(
                "points",
                format!("need at least {MIN_POINTS} points per axis"),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite())
        {
            return Err(invalid("grid", "each axis needs finite lo < hi"));
        }
        let n = points_per_axis;
        let axes: Vec<(Vec<f64>, Vec<f64>)> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| {
                let step = (b - a) / (n - 1) as f64;
                let x: Vec<f64> = (0..n)
                    .map(|i| if i == n - 1 { b } else { a + i as f64 * step })
                    .collect();
                let w: Vec<f64> = (0..n)
                    .map(|i| {
                        if i == 0 || i == n - 1 {
                            0.5 * step
                        } else {
                            step
                        }
                    })
                    .collect();
                (x, w)
            })
            .collect();
        let half = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| 0.5 * (b - a) / (n - 1) as f64)
            .collect();
        let (nodes, weights) = if dim == 1 {
            (axes[0].0.clone(), axes[0].1.clone())
        } else {
            let mut nodes = Vec::with_capacity(2 * n * n);
            let mut weights = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    nodes.push(axes[0].0[i]);
                    nodes.push(axes[1].0[j]);
                    weights.push(axes[0].1[i] * axes[1].1[j]);
                }
            }
            (nodes, weights)
        };
        Ok(Self {
            lo,
            hi,
            points_per_axis,
            nodes,
            weights,
            half,
        })
    }

    /// Default resolution: 1024 nodes in 1D, 256 per axis in 2D.
    pub fn default_points(dim: usize) -> usize {
        if dim == 1 {
            1024
        } else {
            256
        }
    }

    /// Box covering the effective support of every measure, padded by 5% of
    /// its width so box edges fall strictly inside.
    pub fn for_measures(measures: &[&Measure], points_per_axis: usize) -> Result<Self> {
        let (mut lo, mut hi) = union_bounds(measures.iter().map(|m| m.effective_bounds()));
        if lo.is_empty() {
            return Err(invalid("measures", "no measures given"));
        }
        for i in 0..lo.len() {
            let pad = 0.05 * (hi[i] - lo[i]).max(1e-6);
            lo[i] -= pad;
            hi[i] += pad;
        }
        Self::new(lo, hi, points_per_axis)
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

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Half the node spacing on each axis.
    pub fn half_widths(&self) -> &[f64] {
        &self.half
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.points()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Density at every node, box kinds cell-averaged.
    pub fn densities(&self, measure: &Measure) -> Result<Vec<f64>> {
        self.points()
            .map(|x| measure.cell_density(x, &self.half))
            .collect()
    }

    pub fn total_mass(&self, measure: &Measure) -> Result<f64> {
        Ok(self
            .densities(measure)?
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum())
    }
}
