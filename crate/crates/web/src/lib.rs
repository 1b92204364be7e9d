//! Browser demo bindings. Every export takes plain numbers and returns a
//! flat `Float64Array`, row-major, so the page needs no glue beyond
//! `wasm-bindgen`.

use bregmn::base_measure::build_isotropic_base;
use bregmn::dre::Bandwidth;
use bregmn::estimator::{BaseSpec, DreSpec, EstimatorSpec, Objective};
use bregmn::optim::OptimizerSpec;
use bregmn::{
    f_divergence, scaled_bregman, train, BaseDensity, ConvexGenerator, GeneratorFamily,
    GeneratorModel, Measure, Pipeline, QuadratureGrid, TrainSpec,
};
use wasm_bindgen::prelude::*;

const GRID_POINTS: usize = 2048;

fn js_err(e: bregmn::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn unit_box() -> Measure {
    Measure::uniform(vec![0.0], vec![1.0]).expect("valid box")
}

fn shifted_box(theta: f64) -> bregmn::Result<Measure> {
    Measure::uniform(vec![theta], vec![theta + 1.0])
}

/// Rows `(theta, f-divergence, scaled Bregman)` for `P = U[0,1]` against
/// `Q = U[theta, theta+1]`, `theta` on `n` points in `[0, theta_max]`, with
/// the noisy base at `alpha = 1/2` and variance `sigma2`.
#[wasm_bindgen]
pub fn divergence_curves(
    f: &str,
    sigma2: f64,
    theta_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    let gen = ConvexGenerator::from_name(f).map_err(js_err)?;
    let p = unit_box();
    let n = n.max(2);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let theta = theta_max * i as f64 / (n - 1) as f64;
        let q = shifted_box(theta).map_err(js_err)?;
        let base = build_isotropic_base(&p, &q, 0.5, sigma2, sigma2).map_err(js_err)?;
        let grid =
            QuadratureGrid::for_measures(&[&p, &q, base.measure()], GRID_POINTS).map_err(js_err)?;
        let fd = f_divergence(&gen, &p, &q, &grid).map_err(js_err)?;
        let sb = scaled_bregman(&gen, &p, &q, BaseDensity::Measure(base.measure()), &grid)
            .map_err(js_err)?;
        out.extend([theta, fd, sb]);
    }
    Ok(out)
}

/// Rows `(x, p, q, m)` of the two box densities and the noisy base on `n`
/// points spanning both supports.
#[wasm_bindgen]
pub fn base_measure_profile(
    theta: f64,
    alpha: f64,
    sigma2: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    let p = unit_box();
    let q = shifted_box(theta).map_err(js_err)?;
    let base = build_isotropic_base(&p, &q, alpha, sigma2, sigma2).map_err(js_err)?;
    let pad = 0.5 + 4.0 * sigma2.sqrt();
    let (lo, hi) = (theta.min(0.0) - pad, theta.max(0.0) + 1.0 + pad);
    let n = n.max(2);
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        let x = [lo + (hi - lo) * i as f64 / (n - 1) as f64];
        out.extend([
            x[0],
            p.density(&x).map_err(js_err)?,
            q.density(&x).map_err(js_err)?,
            base.density(&x).map_err(js_err)?,
        ]);
    }
    Ok(out)
}

/// Trains the shift of `U[theta, theta+1]` toward `U[0,1]` and returns the
/// rows `(step, theta, loss)`; step 0 is the initial value.
#[wasm_bindgen]
pub fn train_shift(
    f: &str,
    init: f64,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let data = unit_box();
    let g = GeneratorModel::new(GeneratorFamily::UniformShift {
        lo: vec![0.0],
        hi: vec![1.0],
        axis: 0,
    })
    .map_err(js_err)?;
    let pipeline = Pipeline {
        f: ConvexGenerator::from_name(f).map_err(js_err)?,
        data: &data,
        generator: &g,
        base: BaseSpec::default(),
        dre: DreSpec {
            bandwidth: Bandwidth::Fixed(0.5),
            lambda: 1e-2,
            ..DreSpec::default()
        },
        estimator: EstimatorSpec {
            n_base: 256,
            n_fit: 128,
            ..EstimatorSpec::default()
        },
        objective: Objective::ScaledBregman,
    };
    let opt = OptimizerSpec {
        lr,
        ..OptimizerSpec::default()
    };
    let spec = TrainSpec {
        max_steps: steps,
        tol: 0.0,
    };
    let st = train(&pipeline, vec![init], &opt, &spec, seed).map_err(js_err)?;
    let mut out = vec![0.0, init, f64::NAN];
    for (i, (p, l)) in st.trace.iter().zip(&st.losses).enumerate() {
        out.extend([(i + 1) as f64, p[0], *l]);
    }
    Ok(out)
}
