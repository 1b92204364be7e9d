use bregmn::convex::*;
use bregmn::rng::stream;
use rand::Rng;

fn library() -> Vec<ConvexGenerator> {
    vec![
        ConvexGenerator::TLogT,
        ConvexGenerator::NegLog,
        ConvexGenerator::Square,
        ConvexGenerator::JensenShannon,
        ConvexGenerator::Custom(CustomGenerator::new("cosh", |t: f64| {
            (t - 1.0).cosh() - 1.0
        })),
    ]
}

#[test]
fn convexity_spot_check() {
    let mut rng = stream(42, 0);
    for f in library() {
        for _ in 0..200 {
            let mut v: Vec<f64> = (0..3).map(|_| rng.random_range(1e-6..10.0)).collect();
            v.sort_by(f64::total_cmp);
            let (a, b, c) = (v[0], v[1], v[2]);
            if c - a < 1e-12 {
                continue;
            }
            let lam = (c - b) / (c - a);
            let chord = lam * f.value(a) + (1.0 - lam) * f.value(c);
            assert!(f.value(b) <= chord + 1e-9, "{} at {a} {b} {c}", f.name());
        }
    }
}

#[test]
fn derivative_matches_centered_difference() {
    for f in library() {
        for i in 1..=200 {
            let t = 0.05 * i as f64;
            let h = 1e-6 * t;
            let fd = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
            let d = f.right_derivative(t);
            assert!(
                (fd - d).abs() <= 1e-5 * (1.0 + d.abs()),
                "{} at {t}",
                f.name()
            );
        }
    }
}

#[test]
fn second_derivative_matches_difference_of_first() {
    for f in library() {
        for i in 1..=100 {
            let t = 0.1 * i as f64;
            let h = 1e-6 * t;
            let fd = (f.right_derivative(t + h) - f.right_derivative(t - h)) / (2.0 * h);
            let d2 = f.second_derivative(t);
            assert!(
                (fd - d2).abs() <= 1e-4 * (1.0 + d2.abs()),
                "{} at {t}",
                f.name()
            );
        }
    }
}

#[test]
fn reduction_generators_vanish_at_one() {
    for f in library() {
        assert!(f.value(1.0).abs() < 1e-12, "{}", f.name());
    }
}

#[test]
fn bregman_partials_match_differences() {
    for f in library() {
        for &(a, b) in &[(0.3, 1.7), (2.0, 0.5), (1.0, 1.0), (4.0, 3.5)] {
            let (da, db) = f.bregman_partials(a, b);
            let h = 1e-6;
            let fa = (f.bregman(a + h, b) - f.bregman(a - h, b)) / (2.0 * h);
            let fb = (f.bregman(a, b + h) - f.bregman(a, b - h)) / (2.0 * h);
            assert!((da - fa).abs() < 1e-5 * (1.0 + fa.abs()), "{}", f.name());
            assert!((db - fb).abs() < 1e-4 * (1.0 + fb.abs()), "{}", f.name());
        }
    }
}

#[test]
fn names_round_trip() {
    for name in ["tlogt", "neglog", "square", "js"] {
        assert_eq!(ConvexGenerator::from_name(name).unwrap().name(), name);
    }
    assert!(ConvexGenerator::from_name("huber").is_err());
}

#[test]
fn clamp_handles_zero_and_nan() {
    assert_eq!(clamp_ratio(0.0, 1e-12), 1e-12);
    assert_eq!(clamp_ratio(f64::NAN, 1e-6), 1e-6);
    assert_eq!(clamp_ratio(f64::INFINITY, 1e-6), 1e6);
}
