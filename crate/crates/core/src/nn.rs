//! Small fully connected networks with tanh hidden layers and a linear head.
//!
//! Parameters live in one flat vector laid out layer by layer as a row-major
//! weight matrix `(out x in)` followed by the bias `(out)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; a two-entry list is affine.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(
                "sizes",
                "need input and output widths, all positive",
            ));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// LeCun-normal weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let scale = (1.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                out.push(scale * z);
            }
            out.extend(std::iter::repeat_n(0.0, w[1]));
        }
        out
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let acts = self.activations(params, x);
        out.copy_from_slice(acts.last().unwrap());
    }

    /// Layer outputs; index 0 is the input.
    fn activations(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(params.len(), self.param_count());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = &acts[l];
            let mut next: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(next);
        }
        acts
    }

    /// Accumulates `J^T gout` into `gparams` and, when given, into `gx`.
    pub fn vjp(
        &self,
        params: &[f64],
        x: &[f64],
        gout: &[f64],
        gparams: &mut [f64],
        gx: Option<&mut [f64]>,
    ) {
        let acts = self.activations(params, x);
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut g = gout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // through tanh: d tanh = 1 - tanh^2
                for (gi, a) in g.iter_mut().zip(&acts[l + 1]) {
                    *gi *= 1.0 - a * a;
                }
            }
            let o = offsets[l];
            let prev = &acts[l];
            for r in 0..n_out {
                let row = &mut gparams[o + r * n_in..o + (r + 1) * n_in];
                for (gw, a) in row.iter_mut().zip(prev) {
                    *gw += g[r] * a;
                }
                gparams[o + n_in * n_out + r] += g[r];
            }
            if l == 0 && gx.is_none() {
                break;
            }
            let weights = &params[o..o + n_in * n_out];
            let mut gprev = vec![0.0; n_in];
            for r in 0..n_out {
                for (c, gp) in gprev.iter_mut().enumerate() {
                    *gp += g[r] * weights[r * n_in + c];
                }
            }
            g = gprev;
        }
        if let Some(gx) = gx {
            gx.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
}
