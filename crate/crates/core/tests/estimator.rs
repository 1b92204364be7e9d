use bregmn::dre::Bandwidth;
use bregmn::estimator::{BaseSpec, DreKind, DreSpec, EstimatorSpec, GradientMode, Objective};
use bregmn::rng::stream;
use bregmn::{
    build_noisy_base, estimate, f_divergence, scaled_bregman, BaseDensity, ConvexGenerator,
    FitContext, GeneratorFamily, GeneratorModel, Measure, Pipeline, QuadratureGrid, RatioModel,
    SampleTable,
};
use nalgebra::DMatrix;

fn analytic(num: &Measure, den: &Measure) -> RatioModel {
    RatioModel::Analytic {
        num: num.clone(),
        den: den.clone(),
    }
}

fn shift_model(dim: usize) -> GeneratorModel {
    GeneratorModel::new(GeneratorFamily::UniformShift {
        lo: vec![0.0; dim],
        hi: vec![1.0; dim],
        axis: 0,
    })
    .unwrap()
}

fn kernel_dre() -> DreSpec {
    DreSpec {
        bandwidth: Bandwidth::Fixed(0.5),
        lambda: 1e-2,
        ..DreSpec::default()
    }
}

fn shift_pipeline<'a>(
    f: &str,
    data: &'a Measure,
    g: &'a GeneratorModel,
    n_base: usize,
) -> Pipeline<'a> {
    Pipeline {
        f: ConvexGenerator::from_name(f).unwrap(),
        data,
        generator: g,
        base: BaseSpec::default(),
        dre: kernel_dre(),
        estimator: EstimatorSpec {
            n_base,
            n_fit: 128,
            ..EstimatorSpec::default()
        },
        objective: Objective::ScaledBregman,
    }
}

#[test]
fn shared_ratio_model_gives_exact_zero() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(0.3, 2.0).unwrap();
    let r = analytic(&p, &q);
    for seed in 0..5 {
        let xs = q.sample(500, &mut stream(seed, 0)).unwrap();
        for f in ["tlogt", "neglog", "square", "js"] {
            let e = estimate(&ConvexGenerator::from_name(f).unwrap(), &r, &r, &xs, seed).unwrap();
            assert_eq!(e.value, 0.0);
            assert!(e.terms.iter().all(|t| *t == 0.0));
        }
    }
}

#[test]
fn value_is_the_mean_of_terms() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(1.0, 1.0).unwrap();
    let base = build_noisy_base(
        &p,
        &q,
        0.5,
        DMatrix::from_element(1, 1, 1e-3),
        DMatrix::from_element(1, 1, 1e-3),
    )
    .unwrap();
    let m = base.measure().clone();
    let xs = base.sample(1000, &mut stream(4, 0)).unwrap();
    let e = estimate(
        &ConvexGenerator::TLogT,
        &analytic(&p, &m),
        &analytic(&q, &m),
        &xs,
        4,
    )
    .unwrap();
    let mean = e.terms.iter().sum::<f64>() / e.n as f64;
    assert!((e.value - mean).abs() < 1e-12);
    assert_eq!((e.n, e.f.as_str(), e.seed), (1000, "tlogt", 4));
}

#[test]
fn empty_base_sample_is_rejected() {
    let empty = SampleTable::zeros(0, 1);
    assert!(estimate(
        &ConvexGenerator::Square,
        &RatioModel::Unit,
        &RatioModel::Unit,
        &empty,
        0
    )
    .is_err());
}

#[test]
fn plug_in_ratios_match_quadrature() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(1.0, 1.0).unwrap();
    let cov = DMatrix::from_element(1, 1, 1e-3);
    let base = build_noisy_base(&p, &q, 0.5, cov.clone(), cov).unwrap();
    let m = base.measure().clone();
    let grid = QuadratureGrid::for_measures(&[&p, &q], 1024).unwrap();
    let oracle = scaled_bregman(
        &ConvexGenerator::TLogT,
        &p,
        &q,
        BaseDensity::Measure(&m),
        &grid,
    )
    .unwrap();
    let xs = base.sample(100_000, &mut stream(11, 0)).unwrap();
    let e = estimate(
        &ConvexGenerator::TLogT,
        &analytic(&p, &m),
        &analytic(&q, &m),
        &xs,
        11,
    )
    .unwrap();
    assert!((e.value - oracle).abs() < 0.05, "{} vs {oracle}", e.value);
    // exact ratios keep every term nonnegative
    assert!(e.terms.iter().all(|t| *t >= -1e-12));
}

#[test]
fn model_as_base_recovers_square_f_divergence() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(0.5, 1.0).unwrap();
    let grid = QuadratureGrid::for_measures(&[&p, &q], 1024).unwrap();
    let oracle = f_divergence(&ConvexGenerator::Square, &p, &q, &grid).unwrap();
    // chi-square between unit-variance Gaussians: exp(d^2) - 1
    assert!((oracle - (0.25f64.exp() - 1.0)).abs() < 1e-6);
    let xs = q.sample(100_000, &mut stream(12, 0)).unwrap();
    let e = estimate(
        &ConvexGenerator::Square,
        &analytic(&p, &q),
        &analytic(&q, &q),
        &xs,
        12,
    )
    .unwrap();
    assert!((e.value - oracle).abs() < 0.05, "{} vs {oracle}", e.value);
}

/// First-order dual number carrying derivatives in two parameters.
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: f64,
    d: [f64; 2],
}

impl Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: [0.0; 2] }
    }
    fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 2];
        d[i] = 1.0;
        Dual { v, d }
    }
    fn map(self, v: f64, dv: f64) -> Self {
        Dual {
            v,
            d: [self.d[0] * dv, self.d[1] * dv],
        }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.map(e, e)
    }
    fn ln(self) -> Self {
        self.map(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.map(s, 0.5 / s)
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
        }
    }
}

impl std::ops::Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1]],
        }
    }
}

impl std::ops::Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
            ],
        }
    }
}

impl std::ops::Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual {
            v: self.v * inv,
            d: [
                (self.d[0] - self.v * inv * o.d[0]) * inv,
                (self.d[1] - self.v * inv * o.d[1]) * inv,
            ],
        }
    }
}

fn normal_pdf(x: Dual, mean: Dual, var: Dual) -> Dual {
    let z = x - mean;
    let tau = Dual::c(std::f64::consts::TAU);
    (Dual::c(0.0) - z * z / (Dual::c(2.0) * var)).exp() / (tau * var).sqrt()
}

#[test]
fn finite_differences_match_forward_mode_oracle() {
    // Affine x = a z + b against N(0, 1) with exact ratios p/m and q/m.
    let data = Measure::normal(0.0, 1.0).unwrap();
    let g = GeneratorModel::new(GeneratorFamily::Affine { k: 1, d: 1 }).unwrap();
    let (s1, s2) = (0.05, 0.08);
    let pl = Pipeline {
        f: ConvexGenerator::TLogT,
        data: &data,
        generator: &g,
        base: BaseSpec {
            alpha: 0.4,
            sigma1: s1,
            sigma2: s2,
        },
        dre: DreSpec {
            kind: DreKind::Exact,
            ..DreSpec::default()
        },
        estimator: EstimatorSpec {
            n_base: 4000,
            gradient: GradientMode::Fd,
            ..EstimatorSpec::default()
        },
        objective: Objective::ScaledBregman,
    };
    let phi = [1.3, 0.6];
    let seed = 21;
    let fd = pl.gradient(&phi, seed, &FitContext::default()).unwrap();

    let draws = pl.draws(seed).unwrap();
    let ev = &draws.eval;
    let (a, b) = (Dual::var(phi[0], 0), Dual::var(phi[1], 1));
    let mut total = Dual::c(0.0);
    for i in 0..ev.from_p.len() {
        let y = if ev.from_p[i] {
            Dual::c(ev.data.row(i)[0] + s1.sqrt() * ev.eps.row(i)[0])
        } else {
            a * Dual::c(ev.noise.row(i)[0]) + b + Dual::c(s2.sqrt() * ev.eps.row(i)[0])
        };
        let p = normal_pdf(y, Dual::c(0.0), Dual::c(1.0));
        let q = normal_pdf(y, b, a * a);
        let m = Dual::c(0.4) * normal_pdf(y, Dual::c(0.0), Dual::c(1.0 + s1))
            + Dual::c(0.6) * normal_pdf(y, b, a * a + Dual::c(s2));
        let (rp, rq) = (p / m, q / m);
        // t log t: f(a) - f(b) - (log b + 1)(a - b)
        let term = rp * rp.ln() - rq * rq.ln() - (rq.ln() + Dual::c(1.0)) * (rp - rq);
        total = total + term;
    }
    let n = Dual::c(ev.from_p.len() as f64);
    let oracle = total / n;
    assert!((oracle.v - fd.loss).abs() < 1e-9 * (1.0 + oracle.v.abs()));
    for i in 0..2 {
        let rel = (fd.grad[i] - oracle.d[i]).abs() / oracle.d[i].abs();
        assert!(
            rel < 0.05,
            "coordinate {i}: fd {} vs oracle {}",
            fd.grad[i],
            oracle.d[i]
        );
    }
}

#[test]
fn pathwise_kernel_gradient_matches_finite_differences() {
    let data = Measure::mixture(
        vec![0.5, 0.5],
        vec![
            Measure::gaussian(vec![-1.0, 0.0], DMatrix::identity(2, 2) * 0.3).unwrap(),
            Measure::gaussian(vec![1.0, 0.5], DMatrix::identity(2, 2) * 0.3).unwrap(),
        ],
    )
    .unwrap();
    let g = GeneratorModel::new(GeneratorFamily::Mlp {
        k: 2,
        d: 2,
        hidden: vec![4],
    })
    .unwrap();
    let phi = g.init_params(&mut stream(5, 0));
    for f in ["neglog", "tlogt", "square"] {
        let mut pl = Pipeline {
            f: ConvexGenerator::from_name(f).unwrap(),
            data: &data,
            generator: &g,
            base: BaseSpec {
                alpha: 0.5,
                sigma1: 0.05,
                sigma2: 0.05,
            },
            dre: DreSpec {
                bandwidth: Bandwidth::Median,
                ..kernel_dre()
            },
            estimator: EstimatorSpec {
                n_base: 50,
                n_fit: 30,
                fd_step: 1e-6,
                gradient: GradientMode::Fd,
                ..EstimatorSpec::default()
            },
            objective: Objective::ScaledBregman,
        };
        let ctx = pl
            .prepare_context(&phi, 2, &FitContext::default(), true)
            .unwrap();
        let fd = pl.gradient(&phi, 2, &ctx).unwrap();
        pl.estimator.gradient = GradientMode::Pathwise;
        let pw = pl.gradient(&phi, 2, &ctx).unwrap();
        assert!((fd.loss - pw.loss).abs() < 1e-12);
        let scale = fd.grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in fd.grad.iter().zip(&pw.grad) {
            assert!((a - b).abs() < 1e-4 * scale, "{f}: fd {a} vs pathwise {b}");
        }
    }
}

#[test]
fn pathwise_needs_kernel_ratios() {
    let data = Measure::normal(0.0, 1.0).unwrap();
    let g = GeneratorModel::new(GeneratorFamily::Affine { k: 1, d: 1 }).unwrap();
    let pl = Pipeline {
        f: ConvexGenerator::TLogT,
        data: &data,
        generator: &g,
        base: BaseSpec::default(),
        dre: DreSpec {
            kind: DreKind::Exact,
            ..DreSpec::default()
        },
        estimator: EstimatorSpec {
            gradient: GradientMode::Pathwise,
            ..EstimatorSpec::default()
        },
        objective: Objective::ScaledBregman,
    };
    assert!(pl.gradient(&[1.0, 0.0], 0, &FitContext::default()).is_err());
}

#[test]
fn gradient_is_deterministic_per_seed() {
    let data = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let g = shift_model(1);
    let pl = shift_pipeline("neglog", &data, &g, 256);
    let a = pl.gradient(&[0.7], 9, &FitContext::default()).unwrap();
    let b = pl.gradient(&[0.7], 9, &FitContext::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gradient_vanishes_at_the_optimum() {
    let data = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let g = shift_model(1);
    let pl = shift_pipeline("neglog", &data, &g, 20_000);
    let r = pl.gradient(&[0.0], 3, &FitContext::default()).unwrap();
    assert!(r.grad[0].abs() < 5e-2, "{}", r.grad[0]);
}

#[test]
fn gradient_points_toward_the_data_across_seeds() {
    let data = Measure::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let g = shift_model(2);
    let pl = shift_pipeline("neglog", &data, &g, 512);
    for seed in 0..10 {
        // theta* = 0 lies below theta = 2, so descent needs a positive slope
        let r = pl.gradient(&[2.0], seed, &FitContext::default()).unwrap();
        assert!(r.grad[0] > 0.0, "seed {seed}: {}", r.grad[0]);
    }
}

#[test]
fn pipeline_objective_falls_as_the_gap_closes() {
    let data = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let g = shift_model(1);
    let thetas: Vec<f64> = (0..10).map(|i| 3.0 - 0.25 * i as f64).collect();
    for f in ["neglog", "tlogt"] {
        let pl = shift_pipeline(f, &data, &g, 1024);
        let ctx = pl
            .prepare_context(&[0.0], 1, &FitContext::default(), true)
            .unwrap();
        let vals: Vec<f64> = thetas
            .iter()
            .map(|t| pl.evaluate(&[*t], 1, &ctx).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{f}: {vals:?}");
    }
}

#[test]
fn f_divergence_objective_is_flat_on_disjoint_supports() {
    let data = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let g = shift_model(1);
    let pl = Pipeline {
        f: ConvexGenerator::JensenShannon,
        dre: DreSpec {
            kind: DreKind::Exact,
            ..DreSpec::default()
        },
        objective: Objective::FDivergence,
        ..shift_pipeline("js", &data, &g, 512)
    };
    // Draws from q never see the p-only region, so every term is the floored
    // value f(eps) - f'(1)(eps - 1), whatever the gap.
    let f = ConvexGenerator::JensenShannon;
    let eps = 1e-6;
    let floor = f.value(eps) - f.right_derivative(1.0) * (eps - 1.0);
    for theta in [1.5, 2.0, 3.0] {
        let r = pl.gradient(&[theta], 0, &FitContext::default()).unwrap();
        assert!((r.loss - floor).abs() < 1e-12, "{} vs {floor}", r.loss);
        assert!(r.grad[0].abs() < 1e-6);
    }
}
