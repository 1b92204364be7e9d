use bregmn_web::{base_measure_profile, divergence_curves, train_shift};

#[test]
fn js_curve_is_flat_once_supports_separate() {
    let r = divergence_curves("js", 0.001, 3.0, 13).unwrap();
    assert_eq!(r.len(), 39);
    // theta 0 is the identical pair
    assert!(r[1].abs() < 1e-9);
    let beyond: Vec<f64> = r.chunks(3).filter(|c| c[0] >= 1.5).map(|c| c[1]).collect();
    for v in &beyond {
        assert!((v - 2f64.ln()).abs() < 1e-6, "{v}");
    }
}

#[test]
fn base_profile_covers_both_boxes() {
    let r = base_measure_profile(2.0, 0.5, 0.01, 400).unwrap();
    let rows: Vec<&[f64]> = r.chunks(4).collect();
    assert_eq!(rows.len(), 400);
    // riemann sum of the base density is about one
    let dx = rows[1][0] - rows[0][0];
    let mass: f64 = rows.iter().map(|c| c[3]).sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 0.02, "{mass}");
    // half of each box, after smoothing
    let mid = rows.iter().find(|c| c[0] >= 0.5).unwrap();
    assert!((mid[3] - 0.5).abs() < 1e-3 && mid[1] == 1.0 && mid[2] == 0.0);
}

#[test]
fn shift_training_moves_toward_the_data() {
    let r = train_shift("neglog", 2.0, 150, 0.01, 0).unwrap();
    assert_eq!(r.len(), 3 * 151);
    assert_eq!(r[1], 2.0);
    let last = r[r.len() - 2];
    assert!(last.abs() < 0.2, "{last}");
}
