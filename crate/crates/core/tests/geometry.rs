use bregmn::rng::stream;
use bregmn::{entropy_gaussian, verify_prop1, w2_empirical_1d, w2_gaussian, Measure, SampleTable};
use nalgebra::{DMatrix, Matrix2};

const H_STD_NORMAL: f64 = 1.418_938_533_204_672_7;

#[test]
fn gaussian_w2_closed_forms() {
    let n01 = Measure::normal(0.0, 1.0).unwrap();
    assert!(w2_gaussian(&n01, &n01).unwrap() < 1e-7);
    let d = w2_gaussian(&n01, &Measure::normal(3.0, 1.0).unwrap()).unwrap();
    assert!((d - 3.0).abs() < 1e-12);
    let d = w2_gaussian(&n01, &Measure::normal(0.0, 4.0).unwrap()).unwrap();
    assert!((d - 1.0).abs() < 1e-12);
}

/// Square root of a 2x2 SPD matrix by the Cayley-Hamilton formula.
fn sqrt2(m: Matrix2<f64>) -> Matrix2<f64> {
    let s = m.determinant().sqrt();
    (m + Matrix2::identity() * s) / (m.trace() + 2.0 * s).sqrt()
}

#[test]
fn gaussian_w2_matches_two_by_two_oracle() {
    let a = Matrix2::new(2.0, 0.7, 0.7, 1.0);
    let b = Matrix2::new(0.5, -0.2, -0.2, 1.5);
    let p = Measure::gaussian(
        vec![0.0, 1.0],
        DMatrix::from_column_slice(2, 2, a.as_slice()),
    )
    .unwrap();
    let q = Measure::gaussian(
        vec![1.0, -1.0],
        DMatrix::from_column_slice(2, 2, b.as_slice()),
    )
    .unwrap();
    let rb = sqrt2(b);
    let cross = sqrt2(rb * a * rb);
    let expected = (5.0 + (a + b - cross * 2.0).trace()).sqrt();
    assert!((w2_gaussian(&p, &q).unwrap() - expected).abs() < 1e-10);
    assert!((w2_gaussian(&q, &p).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn w2_rejects_non_gaussians() {
    let u = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    assert!(w2_gaussian(&u, &Measure::normal(0.0, 1.0).unwrap()).is_err());
    assert!(entropy_gaussian(&u).is_err());
}

#[test]
fn empirical_w2_basic_cases() {
    let a = Measure::normal(0.0, 1.0)
        .unwrap()
        .sample(1000, &mut stream(1, 0))
        .unwrap();
    assert_eq!(w2_empirical_1d(&a, &a).unwrap(), 0.0);
    let shifted =
        SampleTable::from_scalars(&a.as_slice().iter().map(|x| x + 2.0).collect::<Vec<_>>());
    assert!((w2_empirical_1d(&a, &shifted).unwrap() - 2.0).abs() < 1e-12);
    assert!(w2_empirical_1d(&a, &SampleTable::zeros(0, 1)).is_err());
}

#[test]
fn empirical_w2_approaches_gaussian_value() {
    let a = Measure::normal(0.0, 1.0)
        .unwrap()
        .sample(100_000, &mut stream(2, 0))
        .unwrap();
    let b = Measure::normal(3.0, 1.0)
        .unwrap()
        .sample(100_000, &mut stream(2, 1))
        .unwrap();
    assert!((w2_empirical_1d(&a, &b).unwrap() - 3.0).abs() < 0.05);
}

#[test]
fn unequal_counts_match_replicated_pairing() {
    let a = [0.3, -1.2, 2.5];
    let b = [1.0, 0.1, -0.4, 3.3, 0.9];
    // replicate a five times and b three times, then pair sorted copies
    let mut ra: Vec<f64> = a.iter().flat_map(|x| [*x; 5]).collect();
    let mut rb: Vec<f64> = b.iter().flat_map(|x| [*x; 3]).collect();
    ra.sort_by(f64::total_cmp);
    rb.sort_by(f64::total_cmp);
    let oracle = (ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / 15.0)
        .sqrt();
    let got = w2_empirical_1d(
        &SampleTable::from_scalars(&a),
        &SampleTable::from_scalars(&b),
    )
    .unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn gaussian_entropy_values() {
    let h = entropy_gaussian(&Measure::normal(0.0, 1.0).unwrap()).unwrap();
    assert!((h - H_STD_NORMAL).abs() < 1e-12);
    let h = entropy_gaussian(&Measure::normal(-7.0, 1.0).unwrap()).unwrap();
    assert!((h - H_STD_NORMAL).abs() < 1e-12);
    let e2 = std::f64::consts::E * std::f64::consts::E;
    let h = entropy_gaussian(&Measure::normal(0.0, e2).unwrap()).unwrap();
    assert!((h - H_STD_NORMAL - 1.0).abs() < 1e-12);
}

#[test]
fn identical_measures_give_zero_on_both_sides() {
    let p = Measure::normal(0.5, 2.0).unwrap();
    let r = verify_prop1(&p, &p, 0.5, 10_000, 3).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert!(r.rhs < 1e-6 && r.entropy_gap == 0.0);
    assert!(r.holds);
}

#[test]
fn shifted_pair_has_nonnegative_slack() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(1.0, 1.0).unwrap();
    let r = verify_prop1(&p, &q, 0.5, 10_000, 4).unwrap();
    assert!(r.slack >= 0.0 && r.holds);
    assert!((r.w2 - 1.0).abs() < 1e-12);
    // E|N(0,1)| = sqrt(2/pi)
    assert!((r.mean_norm_p - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01);
}

#[test]
fn constant_scales_exactly_with_inverse_noise() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(2.0, 2.0).unwrap();
    let base = verify_prop1(&p, &q, 0.1, 10_000, 5).unwrap();
    for s in [0.5, 1.0, 2.0] {
        let r = verify_prop1(&p, &q, s, 10_000, 5).unwrap();
        assert!((r.c * s - base.c * 0.1).abs() <= 1e-12 * base.c * 0.1);
    }
}

#[test]
fn swapping_the_pair_keeps_the_left_side() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    let q = Measure::normal(1.0, 2.0).unwrap();
    let a = verify_prop1(&p, &q, 0.5, 10_000, 6).unwrap();
    let b = verify_prop1(&q, &p, 0.5, 10_000, 6).unwrap();
    assert!((a.lhs - b.lhs).abs() < 1e-10);
    assert!(a.lhs > 0.01);
}

#[test]
fn monte_carlo_route_in_two_dimensions() {
    let p = Measure::gaussian(vec![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
    let q = Measure::gaussian(vec![1.0, 0.5], DMatrix::identity(2, 2) * 1.5).unwrap();
    let r = verify_prop1(&p, &q, 0.5, 20_000, 7).unwrap();
    assert!(r.lhs_se > 0.0 && r.holds);
    let swapped = verify_prop1(&q, &p, 0.5, 20_000, 7).unwrap();
    assert!((r.lhs - swapped.lhs).abs() < 3.0 * (r.lhs_se + swapped.lhs_se));
}

#[test]
fn rejects_bad_inputs() {
    let p = Measure::normal(0.0, 1.0).unwrap();
    assert!(verify_prop1(&p, &p, 0.0, 10_000, 0).is_err());
    assert!(verify_prop1(&p, &p, 0.5, 100, 0).is_err());
    let u = Measure::uniform(vec![0.0], vec![1.0]).unwrap();
    assert!(verify_prop1(&p, &u, 0.5, 10_000, 0).is_err());
}
