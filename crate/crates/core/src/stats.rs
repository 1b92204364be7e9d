//! Summary statistics used by diagnostics and acceptance checks.

use crate::dre::rbf;
use crate::sample_table::SampleTable;

/// Median by selection; reorders `v`. NaN sorts last.
pub fn median(v: &mut [f64]) -> f64 {
    assert!(!v.is_empty(), "median of an empty slice");
    let n = v.len();
    let (_, hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean.
pub fn std_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Mid-ranks, 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = mid;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&ranks(a), &ranks(b))
}

/// Unbiased squared MMD with an RBF kernel of length scale `h`.
pub fn mmd2_unbiased(x: &SampleTable, y: &SampleTable, h: f64) -> f64 {
    let within = |t: &SampleTable| {
        let n = t.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += rbf(t.row(i), t.row(j), h);
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for a in x.rows() {
        for b in y.rows() {
            cross += rbf(a, b, h);
        }
    }
    within(x) + within(y) - 2.0 * cross / (x.len() * y.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn spearman_of_monotone_maps() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
        let c: Vec<f64> = a.iter().map(|x| -x.exp()).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        // hand ranks: [1, 2.5, 2.5, 4] vs [1, 2, 3, 4]
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        let expect = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn mmd_of_hand_pair() {
        // single-point tables have no within terms in the unbiased form, so
        // use two points each: x = {0, 1}, y = {0, 1} gives exactly zero
        let x = SampleTable::from_scalars(&[0.0, 1.0]);
        let v = mmd2_unbiased(&x, &x, 1.0);
        let k = (-0.5f64).exp();
        // within: k, k; cross: (1 + k + k + 1) / 4
        assert!((v - (2.0 * k - (2.0 + 2.0 * k) / 2.0)).abs() < 1e-15);
    }
}
