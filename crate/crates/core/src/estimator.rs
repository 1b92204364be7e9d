//! Sample-based scaled Bregman estimation and its gradient in the generator
//! parameters.
//!
//! [`Pipeline::evaluate`] is the objective `B(phi; seed)`. Every random draw
//! (data, generator noise, base-branch choices, convolution noise) comes
//! from streams of `seed` and does not depend on `phi`, so finite differences
//! at `phi +- h` use common random numbers. The ratio models are refit inside
//! every evaluation, so gradients see how the fitted ratios move with `phi`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convex::ConvexGenerator;
use crate::dre::{
    clamp_ratio, fit_discriminator_warm, fit_mmd_ratio_pair, shifted_kernel_row, Bandwidth,
    DiscriminatorSpec, KernelSpec, KernelSystem, RatioModel, RATIO_FLOOR,
};
use crate::error::{invalid, Error, Result};
use crate::measures::Measure;
use crate::model::GeneratorModel;
use crate::rng::{stream, Rng};
use crate::sample_table::{sq_dist, SampleTable};

/// Value and per-sample terms of the empirical scaled Bregman estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BregmanEstimate {
    pub value: f64,
    pub terms: Vec<f64>,
    pub n: usize,
    pub f: String,
    pub seed: u64,
}

/// Mean over `base_samples` of `f(a) - f(b) - f'(b)(a - b)` with
/// `a = r_pm(x)` and `b = r_qm(x)`.
pub fn estimate(
    f: &ConvexGenerator,
    r_pm: &RatioModel,
    r_qm: &RatioModel,
    base_samples: &SampleTable,
    seed: u64,
) -> Result<BregmanEstimate> {
    if base_samples.is_empty() {
        return Err(invalid("base_samples", "need at least one base sample"));
    }
    let mut terms = Vec::with_capacity(base_samples.len());
    for x in base_samples.rows() {
        let a = r_pm.evaluate(x)?;
        let b = r_qm.evaluate(x)?;
        assert!(
            a.is_finite() && b.is_finite(),
            "ratio models must return clamped values"
        );
        let t = f.bregman(a, b);
        if !t.is_finite() {
            return Err(Error::NonFinite("scaled Bregman term"));
        }
        terms.push(t);
    }
    Ok(BregmanEstimate {
        value: terms.iter().sum::<f64>() / terms.len() as f64,
        n: terms.len(),
        terms,
        f: f.name().to_string(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DreKind {
    /// Closed-form kernel solve.
    Mmd,
    /// Logistic classifiers.
    Discriminator,
    /// Plug-in ratios of closed-form densities.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DreSpec {
    pub kind: DreKind,
    pub bandwidth: Bandwidth,
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for DreSpec {
    fn default() -> Self {
        let k = KernelSpec::default();
        let d = DiscriminatorSpec::default();
        Self {
            kind: DreKind::Mmd,
            bandwidth: k.bandwidth,
            lambda: k.lambda,
            steps: d.steps,
            lr: d.lr,
            hidden: d.hidden,
        }
    }
}

impl DreSpec {
    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            bandwidth: self.bandwidth,
            lambda: self.lambda,
        }
    }

    pub fn discriminator(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            hidden: self.hidden.clone(),
            steps: self.steps,
            lr: self.lr,
        }
    }
}

/// Noisy base `alpha (P * N(0, sigma1 I)) + (1 - alpha) (Q * N(0, sigma2 I))`;
/// `sigma1`, `sigma2` are variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSpec {
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for BaseSpec {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma1: 0.001,
            sigma2: 0.001,
        }
    }
}

impl BaseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("base.alpha", "must lie in [0, 1]"));
        }
        if !(self.sigma1 > 0.0) || !(self.sigma2 > 0.0) {
            return Err(invalid("base.sigma1", "noise variances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// Finite differences up to 64 parameters, pathwise above.
    Auto,
    Fd,
    Pathwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Base samples per estimate.
    pub n_base: usize,
    /// Samples per side used to fit each ratio model.
    pub n_fit: usize,
    /// Relative finite-difference step: `h = fd_step (1 + |phi_i|)`.
    pub fd_step: f64,
    /// Steps between re-resolving the bandwidth and discriminator warm start.
    pub refit_every: usize,
    pub gradient: GradientMode,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            n_base: 2048,
            n_fit: 256,
            fd_step: 1e-3,
            refit_every: 1,
            gradient: GradientMode::Auto,
        }
    }
}

/// Largest parameter count differentiated by finite differences in auto mode.
pub const MAX_FD_PARAMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Scaled Bregman divergence against the noisy base.
    ScaledBregman,
    /// The f-divergence: base equal to the model distribution.
    FDivergence,
}

/// Fit-time state carried across evaluations: the resolved bandwidth and
/// discriminator warm starts. Held fixed across the `phi +- h` evaluations
/// of one gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitContext {
    pub prepared: bool,
    pub bandwidth: Option<f64>,
    pub disc_p: Option<Vec<f64>>,
    pub disc_q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Parameter-independent draws for one seed.
#[derive(Debug, Clone)]
pub struct Draws {
    /// Data sample for the `p` side of the ratio fits.
    pub xp: SampleTable,
    /// Generator noise for the `q_phi` side of the ratio fits.
    pub xi: SampleTable,
    /// Base points that carry the kernel fits.
    pub fit: BaseDraws,
    /// Base points the estimate averages over.
    pub eval: BaseDraws,
}

/// Base point `i` is `data_i + sqrt(sigma1) eps_i` when `from_p[i]`, else
/// `G_phi(noise_i) + sqrt(sigma2) eps_i`.
#[derive(Debug, Clone)]
pub struct BaseDraws {
    pub from_p: Vec<bool>,
    pub data: SampleTable,
    pub noise: SampleTable,
    pub eps: SampleTable,
}

/// The objective `B(phi; seed)` and its gradient.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    pub f: ConvexGenerator,
    pub data: &'a Measure,
    pub generator: &'a GeneratorModel,
    pub base: BaseSpec,
    pub dre: DreSpec,
    pub estimator: EstimatorSpec,
    pub objective: Objective,
}

impl<'a> Pipeline<'a> {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.dre.kernel().validate()?;
        if self.data.dim() != self.generator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: self.generator.dim(),
            });
        }
        if self.estimator.n_base == 0 || self.estimator.n_fit < 2 {
            return Err(invalid(
                "estimator.n_base",
                "need n_base >= 1 and n_fit >= 2",
            ));
        }
        if !(self.estimator.fd_step > 0.0) {
            return Err(invalid(
                "estimator.fd_step",
                "finite-difference step must be positive",
            ));
        }
        if self.estimator.refit_every == 0 {
            return Err(invalid("estimator.refit_every", "must be at least 1"));
        }
        Ok(())
    }

    fn base_draws(&self, n: usize, rng: &mut Rng) -> BaseDraws {
        use rand::Rng as _;
        let d = self.data.dim();
        let k = self.generator.noise_dim();
        let mut from_p = Vec::with_capacity(n);
        let mut data = SampleTable::zeros(n, d);
        let mut noise = SampleTable::zeros(n, k);
        let mut eps = SampleTable::zeros(n, d);
        let unit = Measure::gaussian(vec![0.0; d], nalgebra::DMatrix::identity(d, d))
            .expect("identity covariance");
        for i in 0..n {
            let u: f64 = rng.random();
            from_p.push(match self.objective {
                Objective::ScaledBregman => u < self.base.alpha,
                Objective::FDivergence => false,
            });
            self.data.sample_point(rng, data.row_mut(i));
            self.generator.noise_point(rng, noise.row_mut(i));
            unit.sample_point(rng, eps.row_mut(i));
        }
        BaseDraws {
            from_p,
            data,
            noise,
            eps,
        }
    }

    pub fn draws(&self, seed: u64) -> Result<Draws> {
        let n = self.estimator.n_fit;
        Ok(Draws {
            xp: self.data.sample(n, &mut stream(seed, 0))?,
            xi: self.generator.draw_noise(n, &mut stream(seed, 1)),
            fit: self.base_draws(n, &mut stream(seed, 2)),
            eval: self.base_draws(self.estimator.n_base, &mut stream(seed, 3)),
        })
    }

    pub fn base_points(&self, phi: &[f64], b: &BaseDraws) -> SampleTable {
        let d = self.data.dim();
        let (s1, s2) = match self.objective {
            Objective::ScaledBregman => (self.base.sigma1.sqrt(), self.base.sigma2.sqrt()),
            Objective::FDivergence => (0.0, 0.0),
        };
        let mut out = SampleTable::zeros(b.from_p.len(), d);
        for i in 0..b.from_p.len() {
            let row = out.row_mut(i);
            let s = if b.from_p[i] {
                row.copy_from_slice(b.data.row(i));
                s1
            } else {
                self.generator.generate_point(phi, b.noise.row(i), row);
                s2
            };
            row.iter_mut()
                .zip(b.eps.row(i))
                .for_each(|(x, e)| *x += s * e);
        }
        out
    }

    /// Bandwidth for kernel fits: fixed, or the median heuristic over the
    /// data and generated fit samples at `phi`.
    pub fn resolve_bandwidth(&self, phi: &[f64], draws: &Draws) -> Result<f64> {
        let xq = self.generator.generate(phi, &draws.xi);
        self.dre.kernel().resolve_bandwidth(&[&draws.xp, &xq])
    }

    /// Context for evaluations around `phi`, reusing `prev` unless `refit`.
    pub fn prepare_context(
        &self,
        phi: &[f64],
        seed: u64,
        prev: &FitContext,
        refit: bool,
    ) -> Result<FitContext> {
        let mut ctx = prev.clone();
        if !refit && ctx.prepared {
            return Ok(ctx);
        }
        let draws = self.draws(seed)?;
        if self.dre.kind == DreKind::Mmd {
            ctx.bandwidth = Some(self.resolve_bandwidth(phi, &draws)?);
        }
        if self.dre.kind == DreKind::Discriminator {
            let (mp, mq) = self.fit_discriminators(phi, &draws, &ctx, seed)?;
            if let (
                RatioModel::Logistic { params: a, .. },
                RatioModel::Logistic { params: b, .. },
            ) = (mp, mq)
            {
                ctx.disc_p = Some(a);
                ctx.disc_q = Some(b);
            }
        }
        ctx.prepared = true;
        Ok(ctx)
    }

    fn fit_discriminators(
        &self,
        phi: &[f64],
        draws: &Draws,
        ctx: &FitContext,
        seed: u64,
    ) -> Result<(RatioModel, RatioModel)> {
        let spec = self.dre.discriminator();
        let net = spec.network(self.data.dim())?;
        let init = |stored: &Option<Vec<f64>>, idx: u64| {
            stored
                .clone()
                .unwrap_or_else(|| net.init(&mut stream(seed, 10 + idx)))
        };
        let xq = self.generator.generate(phi, &draws.xi);
        match self.objective {
            Objective::ScaledBregman => {
                let z = self.base_points(phi, &draws.fit);
                Ok((
                    fit_discriminator_warm(&draws.xp, &z, &spec, init(&ctx.disc_p, 0))?,
                    fit_discriminator_warm(&xq, &z, &spec, init(&ctx.disc_q, 1))?,
                ))
            }
            Objective::FDivergence => Ok((
                fit_discriminator_warm(&draws.xp, &xq, &spec, init(&ctx.disc_p, 0))?,
                RatioModel::Unit,
            )),
        }
    }

    /// Ratio models `r_pm`, `r_qm` and evaluation points at `phi`.
    pub fn fit(
        &self,
        phi: &[f64],
        draws: &Draws,
        ctx: &FitContext,
        seed: u64,
    ) -> Result<(RatioModel, RatioModel, SampleTable)> {
        self.generator.check_params(phi)?;
        let y = self.base_points(phi, &draws.eval);
        let (rp, rq) = match self.dre.kind {
            DreKind::Mmd => {
                let h = match ctx.bandwidth {
                    Some(h) => h,
                    None => self.resolve_bandwidth(phi, draws)?,
                };
                let xq = self.generator.generate(phi, &draws.xi);
                match self.objective {
                    Objective::ScaledBregman => {
                        let z = self.base_points(phi, &draws.fit);
                        fit_mmd_ratio_pair(&draws.xp, &xq, &z, h, self.dre.lambda)?
                    }
                    Objective::FDivergence => {
                        let z = self.base_points(phi, &draws.fit);
                        let sys = KernelSystem::new(z.clone(), h, self.dre.lambda)?;
                        let w = sys.solve(&sys.embed(&draws.xp)?)?;
                        (
                            RatioModel::kernel(z, h, w.iter().copied().collect()),
                            RatioModel::Unit,
                        )
                    }
                }
            }
            DreKind::Discriminator => self.fit_discriminators(phi, draws, ctx, seed)?,
            DreKind::Exact => {
                let q = self.generator.pushforward(phi)?;
                match self.objective {
                    Objective::ScaledBregman => {
                        let m = crate::base_measure::build_isotropic_base(
                            self.data,
                            &q,
                            self.base.alpha,
                            self.base.sigma1,
                            self.base.sigma2,
                        )?
                        .measure()
                        .clone();
                        (
                            RatioModel::Analytic {
                                num: self.data.clone(),
                                den: m.clone(),
                            },
                            RatioModel::Analytic { num: q, den: m },
                        )
                    }
                    Objective::FDivergence => (
                        RatioModel::Analytic {
                            num: self.data.clone(),
                            den: q,
                        },
                        RatioModel::Unit,
                    ),
                }
            }
        };
        Ok((rp, rq, y))
    }

    pub fn evaluate_with(
        &self,
        phi: &[f64],
        draws: &Draws,
        ctx: &FitContext,
        seed: u64,
    ) -> Result<BregmanEstimate> {
        let (rp, rq, y) = self.fit(phi, draws, ctx, seed)?;
        estimate(&self.f, &rp, &rq, &y, seed)
    }

    pub fn evaluate(&self, phi: &[f64], seed: u64, ctx: &FitContext) -> Result<f64> {
        Ok(self
            .evaluate_with(phi, &self.draws(seed)?, ctx, seed)?
            .value)
    }

    fn use_pathwise(&self, n_params: usize) -> bool {
        match self.estimator.gradient {
            GradientMode::Fd => false,
            GradientMode::Pathwise => true,
            GradientMode::Auto => n_params > MAX_FD_PARAMS,
        }
    }

    /// Loss at `phi` and its gradient under common random numbers.
    pub fn gradient(&self, phi: &[f64], seed: u64, ctx: &FitContext) -> Result<GradientResult> {
        self.validate()?;
        self.generator.check_params(phi)?;
        let prepared;
        let ctx = if ctx.prepared {
            ctx
        } else {
            prepared = self.prepare_context(phi, seed, ctx, true)?;
            &prepared
        };
        let draws = self.draws(seed)?;
        if self.use_pathwise(phi.len()) {
            return self.pathwise(phi, &draws, ctx);
        }
        let loss = self.evaluate_with(phi, &draws, ctx, seed)?.value;
        let coord = |i: usize| -> Result<f64> {
            let h = self.estimator.fd_step * (1.0 + phi[i].abs());
            let mut a = phi.to_vec();
            let mut b = phi.to_vec();
            a[i] += h;
            b[i] -= h;
            let fa = self.evaluate_with(&a, &draws, ctx, seed)?.value;
            let fb = self.evaluate_with(&b, &draws, ctx, seed)?.value;
            Ok((fa - fb) / (2.0 * h))
        };
        #[cfg(feature = "parallel")]
        let grad: Result<Vec<f64>> = {
            use rayon::prelude::*;
            (0..phi.len()).into_par_iter().map(coord).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let grad: Result<Vec<f64>> = (0..phi.len()).map(coord).collect();
        Ok(GradientResult { loss, grad: grad? })
    }

    /// Reverse-mode gradient through the kernel-ratio pipeline.
    ///
    /// The bandwidth is held fixed, clamped weights pass no gradient, and
    /// kernel-weighted averages are differentiated in their shifted form.
    fn pathwise(&self, phi: &[f64], draws: &Draws, ctx: &FitContext) -> Result<GradientResult> {
        if self.dre.kind != DreKind::Mmd || self.objective != Objective::ScaledBregman {
            return Err(Error::Unsupported(
                "pathwise gradients need dre.kind = mmd and the scaled Bregman objective".into(),
            ));
        }
        let g = self.generator;
        let h = match ctx.bandwidth {
            Some(h) => h,
            None => self.resolve_bandwidth(phi, draws)?,
        };
        let h2 = h * h;
        let xp = &draws.xp;
        let xq = g.generate(phi, &draws.xi);
        let z = self.base_points(phi, &draws.fit);
        let y = self.base_points(phi, &draws.eval);
        let (nz, ny, d) = (z.len(), y.len(), z.dim());
        let sys = KernelSystem::new(z.clone(), h, self.dre.lambda)?;
        let sp = nz as f64 / xp.len() as f64;
        let sq = nz as f64 / xq.len() as f64;
        let wp = sys.solve(&sys.embed(xp)?)?;
        let wq = sys.solve(&sys.embed(&xq)?)?;
        let wp_c: Vec<f64> = wp.iter().map(|w| clamp_ratio(*w)).collect();
        let wq_c: Vec<f64> = wq.iter().map(|w| clamp_ratio(*w)).collect();

        let mut gy = SampleTable::zeros(ny, d);
        let mut gz = SampleTable::zeros(nz, d);
        let mut gwp = vec![0.0; nz];
        let mut gwq = vec![0.0; nz];
        let mut loss = 0.0;
        let inv_n = 1.0 / ny as f64;
        for i in 0..ny {
            let yi = y.row(i);
            let (k, s) = shifted_kernel_row(yi, &z, h);
            let rp: f64 = k.iter().zip(&wp_c).map(|(a, b)| a * b).sum::<f64>() / s;
            let rq: f64 = k.iter().zip(&wq_c).map(|(a, b)| a * b).sum::<f64>() / s;
            let (rp, rq) = (clamp_ratio(rp), clamp_ratio(rq));
            loss += self.f.bregman(rp, rq) * inv_n;
            let (da, db) = self.f.bregman_partials(rp, rq);
            let (ga, gb) = (da * inv_n, db * inv_n);
            for j in 0..nz {
                gwp[j] += ga * k[j] / s;
                gwq[j] += gb * k[j] / s;
                let gk = (ga * (wp_c[j] - rp) + gb * (wq_c[j] - rq)) / s;
                if gk == 0.0 {
                    continue;
                }
                // d k(y, z) / dy = -k (y - z) / h^2
                let c = gk * k[j] / h2;
                let zj = z.row(j);
                for a in 0..d {
                    let diff = yi[a] - zj[a];
                    gy.row_mut(i)[a] -= c * diff;
                    gz.row_mut(j)[a] += c * diff;
                }
            }
        }
        for (gw, w) in gwp.iter_mut().zip(wp.iter()) {
            if !(RATIO_FLOOR..=1.0 / RATIO_FLOOR).contains(w) {
                *gw = 0.0;
            }
        }
        for (gw, w) in gwq.iter_mut().zip(wq.iter()) {
            if !(RATIO_FLOOR..=1.0 / RATIO_FLOOR).contains(w) {
                *gw = 0.0;
            }
        }
        let up = sys.solve(&DVector::from_vec(gwp))?;
        let uq = sys.solve(&DVector::from_vec(gwq))?;
        let kzz = sys.gram();
        // A = K_zz + ridge: dA_jl carries -(u_p w_p^T + u_q w_q^T)_jl
        for j in 0..nz {
            for l in 0..nz {
                if l == j {
                    continue;
                }
                let ga = -(up[j] * wp[l] + uq[j] * wq[l]) - (up[l] * wp[j] + uq[l] * wq[j]);
                let c = ga * kzz[(j, l)] / h2;
                for a in 0..d {
                    let diff = z.row(j)[a] - z.row(l)[a];
                    gz.row_mut(j)[a] -= c * diff;
                }
            }
        }
        // embeddings b = s K_{z,x} 1
        let mut gxq = SampleTable::zeros(xq.len(), d);
        for j in 0..nz {
            let zj = z.row(j).to_vec();
            for x in xp.rows() {
                let c = sp * up[j] * (-sq_dist(&zj, x) / (2.0 * h2)).exp() / h2;
                for a in 0..d {
                    gz.row_mut(j)[a] -= c * (zj[a] - x[a]);
                }
            }
            for l in 0..xq.len() {
                let x = xq.row(l);
                let c = sq * uq[j] * (-sq_dist(&zj, x) / (2.0 * h2)).exp() / h2;
                for a in 0..d {
                    let diff = zj[a] - x[a];
                    gz.row_mut(j)[a] -= c * diff;
                    gxq.row_mut(l)[a] += c * diff;
                }
            }
        }
        let mut grad = vec![0.0; phi.len()];
        for (b, gpts) in [(&draws.fit, &gz), (&draws.eval, &gy)] {
            for i in 0..b.from_p.len() {
                if !b.from_p[i] {
                    g.vjp(phi, b.noise.row(i), gpts.row(i), &mut grad);
                }
            }
        }
        for l in 0..xq.len() {
            g.vjp(phi, draws.xi.row(l), gxq.row(l), &mut grad);
        }
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pathwise gradient"));
        }
        Ok(GradientResult { loss, grad })
    }
}
