use approx::assert_abs_diff_eq;
use bregmn::measures::*;
use bregmn::rng::stream;
use bregmn::*;
use nalgebra::DMatrix;

#[test]
fn standard_normal_density_at_zero() {
    let n = Measure::normal(0.0, 1.0).unwrap();
    assert_abs_diff_eq!(n.density(&[0.0]).unwrap(), 0.398_942_280_4, epsilon = 1e-10);
}

#[test]
fn uniform_density_inside_and_outside() {
    let u = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    assert_eq!(u.density(&[0.5]).unwrap(), 1.0);
    assert_eq!(u.density(&[1.5]).unwrap(), 0.0);
}

#[test]
fn degenerate_box_rejected() {
    assert!(Measure::uniform(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
}

#[test]
fn dimension_mismatch_and_empirical_density_are_errors() {
    let n = Measure::normal(0.0, 1.0).unwrap();
    assert!(matches!(
        n.density(&[0.0, 1.0]),
        Err(Error::DimensionMismatch { .. })
    ));
    let e = Measure::empirical(SampleTable::from_scalars(&[1.0, 2.0])).unwrap();
    assert!(matches!(e.density(&[1.0]), Err(Error::NoDensity(_))));
}

#[test]
fn mixture_weights_validated() {
    let a = Measure::normal(0.0, 1.0).unwrap();
    let b = Measure::normal(1.0, 1.0).unwrap();
    assert!(Measure::mixture(vec![0.5, 0.6], vec![a.clone(), b.clone()]).is_err());
    assert!(Measure::mixture(vec![-0.5, 1.5], vec![a.clone(), b.clone()]).is_err());
    assert!(Measure::mixture(vec![0.25, 0.75], vec![a, b]).is_ok());
}

#[test]
fn non_spd_covariance_rejected() {
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(
        Measure::gaussian(vec![0.0, 0.0], bad.clone()),
        Err(Error::NotSpd(_))
    ));
    let n = Measure::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    assert!(convolve_gaussian(&n, bad).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    assert!(convolve_gaussian(&n, asym).is_err());
}

#[test]
fn gaussian_convolution_adds_covariances() {
    let n = Measure::normal(0.0, 1.0).unwrap();
    let c = convolve_isotropic(&n, 0.5).unwrap();
    let target = Measure::normal(0.0, 1.5).unwrap();
    for i in -40..=40 {
        let x = [i as f64 * 0.1];
        assert_abs_diff_eq!(
            c.density(&x).unwrap(),
            target.density(&x).unwrap(),
            epsilon = 1e-12
        );
    }
}

#[test]
fn smoothed_box_matches_convolution_quadrature() {
    // oracle: trapezoid rule for  int_0^1 phi_s(x - y) dy
    let var = 0.001_f64;
    let u = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let c = convolve_isotropic(&u, var).unwrap();
    let s = var.sqrt();
    for &x in &[0.5, 0.0, 1.02, -0.05, 0.97] {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let y = k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let z = (x - y) / s;
            acc += w * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        }
        acc *= h;
        assert_abs_diff_eq!(c.density(&[x]).unwrap(), acc, epsilon = 1e-6);
    }
}

#[test]
fn narrow_box_smoothed_is_nearly_gaussian() {
    let u = Measure::uniform(vec![2.0 - 5e-4], vec![2.0 + 5e-4]).unwrap();
    let c = convolve_isotropic(&u, 0.04).unwrap();
    let g = Measure::normal(2.0, 0.04).unwrap();
    for i in 0..50 {
        let x = [1.0 + i as f64 * 0.04];
        assert_abs_diff_eq!(
            c.density(&x).unwrap(),
            g.density(&x).unwrap(),
            epsilon = 1e-5
        );
    }
}

#[test]
fn vanishing_noise_is_identity() {
    let g = Measure::gaussian(
        vec![0.0, 1.0],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
    )
    .unwrap();
    let c = convolve_isotropic(&g, 1e-8).unwrap();
    let grid = QuadratureGrid::for_measures(&[&g], 64).unwrap();
    for p in grid.points() {
        let diff = (c.density(p).unwrap() - g.density(p).unwrap()).abs();
        assert!(diff < 1e-3);
    }
}

#[test]
fn convolution_distributes_over_mixtures() {
    let a = Measure::normal(-1.0, 0.5).unwrap();
    let b = Measure::uniform(vec![0.0], vec![2.0]).unwrap();
    let mix = Measure::mixture(vec![0.3, 0.7], vec![a.clone(), b.clone()]).unwrap();
    let cm = convolve_isotropic(&mix, 0.2).unwrap();
    let ca = convolve_isotropic(&a, 0.2).unwrap();
    let cb = convolve_isotropic(&b, 0.2).unwrap();
    for i in -30..=40 {
        let x = [i as f64 * 0.1];
        let lhs = cm.density(&x).unwrap();
        let rhs = 0.3 * ca.density(&x).unwrap() + 0.7 * cb.density(&x).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }
}

#[test]
fn far_tail_of_smoothed_box_stays_positive() {
    let u = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    let c = convolve_isotropic(&u, 0.001).unwrap();
    let v = c.density(&[1.5]).unwrap();
    assert!(v > 0.0 && v < 1e-40, "{v}");
}

#[test]
fn sample_mean_converges() {
    let n = Measure::normal(0.0, 1.0).unwrap();
    let s = n.sample(100_000, &mut stream(7, 0)).unwrap();
    assert!(s.mean()[0].abs() < 0.02);
}

#[test]
fn uniform_samples_stay_in_support() {
    let u = Measure::uniform(vec![2.0], vec![3.0]).unwrap();
    let s = u.sample(10_000, &mut stream(1, 0)).unwrap();
    assert!(s.rows().all(|r| (2.0..=3.0).contains(&r[0])));
}

#[test]
fn mixture_branch_frequencies() {
    // binomial oracle: sd of the fraction is 0.5 / sqrt(n) = 0.0016
    let m = Measure::mixture(
        vec![0.5, 0.5],
        vec![
            Measure::normal(-5.0, 1.0).unwrap(),
            Measure::normal(5.0, 1.0).unwrap(),
        ],
    )
    .unwrap();
    let s = m.sample(100_000, &mut stream(3, 0)).unwrap();
    let neg = s.rows().filter(|r| r[0] < 0.0).count() as f64 / 1e5;
    assert!((neg - 0.5).abs() < 0.01, "{neg}");
}

#[test]
fn sampling_is_deterministic() {
    let m = convolve_isotropic(&Measure::uniform(vec![0.0], vec![1.0]).unwrap(), 0.1).unwrap();
    let a = m.sample(100, &mut stream(11, 2)).unwrap();
    let b = m.sample(100, &mut stream(11, 2)).unwrap();
    assert_eq!(a, b);
    assert!(m.sample(0, &mut stream(11, 2)).is_err());
}

#[test]
fn empirical_resamples_with_replacement() {
    let e = Measure::empirical(SampleTable::from_scalars(&[1.0, 2.0, 3.0])).unwrap();
    let s = e.sample(500, &mut stream(5, 0)).unwrap();
    assert!(s.rows().all(|r| [1.0, 2.0, 3.0].contains(&r[0])));
}

#[test]
fn convolved_sampling_adds_noise() {
    let c = convolve_isotropic(&Measure::normal(1.0, 1.0).unwrap(), 3.0).unwrap();
    let s = c.sample(100_000, &mut stream(9, 0)).unwrap();
    let mean = s.mean()[0];
    let var = s.rows().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / 1e5;
    assert!((mean - 1.0).abs() < 0.03);
    assert!((var - 4.0).abs() < 0.1, "{var}");
}

fn analytic_family() -> Vec<Measure> {
    vec![
        Measure::normal(0.3, 2.0).unwrap(),
        Measure::uniform(vec![0.0], vec![1.0]).unwrap(),
        convolve_isotropic(&Measure::uniform(vec![-1.0], vec![2.0]).unwrap(), 0.001).unwrap(),
        Measure::mixture(
            vec![0.2, 0.8],
            vec![
                Measure::normal(-3.0, 0.25).unwrap(),
                Measure::uniform(vec![1.0], vec![1.7]).unwrap(),
            ],
        )
        .unwrap(),
        Measure::gaussian(
            vec![0.0, 1.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.6]),
        )
        .unwrap(),
        Measure::uniform(vec![0.0, -1.0], vec![1.0, 0.5]).unwrap(),
        convolve_isotropic(
            &Measure::uniform(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            0.01,
        )
        .unwrap(),
    ]
}

#[test]
fn weights_sum_to_volume() {
    let g = QuadratureGrid::new(vec![-1.0, 2.0], vec![3.0, 2.5], 100).unwrap();
    let s: f64 = g.weights().iter().sum();
    assert!((s - g.volume()).abs() < 1e-10);
    let g1 = QuadratureGrid::new(vec![-1.0], vec![3.0], 1024).unwrap();
    assert!((g1.weights().iter().sum::<f64>() - 4.0).abs() < 1e-10);
}

#[test]
fn nodes_strictly_increasing() {
    let g = QuadratureGrid::new(vec![-1.0], vec![3.0], 1024).unwrap();
    let xs: Vec<f64> = g.points().map(|p| p[0]).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn rejects_bad_grids() {
    assert!(QuadratureGrid::new(vec![0.0], vec![1.0], 63).is_err());
    assert!(QuadratureGrid::new(vec![1.0], vec![1.0], 64).is_err());
    assert!(QuadratureGrid::new(vec![0.0; 3], vec![1.0; 3], 64).is_err());
}

#[test]
fn analytic_densities_integrate_to_one() {
    for m in analytic_family() {
        let g =
            QuadratureGrid::for_measures(&[&m], QuadratureGrid::default_points(m.dim())).unwrap();
        let mass = g.total_mass(&m).unwrap();
        assert!((mass - 1.0).abs() < 1e-4, "{} mass {mass}", m.kind());
    }
}

#[test]
fn histogram_matches_density_in_total_variation() {
    for (k, m) in analytic_family().into_iter().enumerate() {
        let g = QuadratureGrid::for_measures(&[&m], 64).unwrap();
        let s = m.sample(100_000, &mut stream(100 + k as u64, 0)).unwrap();
        let n = g.points_per_axis();
        // 2D: pool 4x4 node cells into one bin to keep the multinomial noise small
        let block = if g.dim() == 1 { 1 } else { 4 };
        let nb = n.div_ceil(block);
        let bin_of = |x: &[f64]| -> usize {
            let mut idx = 0;
            for (a, xa) in x.iter().enumerate() {
                let t = (xa - g.lo()[a]) / (g.hi()[a] - g.lo()[a]) * (n - 1) as f64;
                let i = t.round().clamp(0.0, (n - 1) as f64) as usize / block;
                idx = idx * nb + i;
            }
            idx
        };
        let bins = nb.pow(g.dim() as u32);
        let mut counts = vec![0.0; bins];
        for r in s.rows() {
            counts[bin_of(r)] += 1.0 / 1e5;
        }
        let mut probs = vec![0.0; bins];
        let dens = g.densities(&m).unwrap();
        for ((x, p), w) in g.points().zip(&dens).zip(g.weights()) {
            probs[bin_of(x)] += p * w;
        }
        let tv: f64 = 0.5
            * probs
                .iter()
                .zip(&counts)
                .map(|(p, c)| (p - c).abs())
                .sum::<f64>();
        assert!(tv < 0.05, "{} tv {tv}", m.kind());
    }
}
