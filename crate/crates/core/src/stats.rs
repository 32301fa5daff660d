//! Small statistics helpers: compensated summation, sample moments,
//! Wilson intervals, and a two-sample Kolmogorov-Smirnov test.

/// Kahan-compensated sum; deterministic for a fixed iteration order.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Sample mean and (n-1)-normalized standard deviation.
/// A single sample reports SD 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

pub fn moments(values: &[f64]) -> Moments {
    let n = values.len();
    if n == 0 {
        return Moments { n: 0, mean: f64::NAN, sd: f64::NAN };
    }
    let mean = kahan_sum(values) / n as f64;
    if n == 1 {
        return Moments { n, mean, sd: 0.0 };
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = kahan_sum(&sq) / (n as f64 - 1.0);
    Moments { n, mean, sd: var.max(0.0).sqrt() }
}

/// 95% normal-theory confidence half-width of the mean.
pub fn ci_half_width(m: &Moments) -> f64 {
    if m.n < 1 {
        return f64::NAN;
    }
    1.96 * m.sd / (m.n as f64).sqrt()
}

/// Wilson score interval half-width for a binomial proportion at 95%.
pub fn wilson_half_width(successes: usize, trials: usize) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let z = 1.96f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        let f1 = i as f64 / n as f64;
        let f2 = j as f64 / m as f64;
        d = d.max((f1 - f2).abs());
    }
    d
}

/// KS critical value at significance `alpha` in {0.05, 0.01}.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = if alpha <= 0.01 { 1.628 } else { 1.358 };
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ma = moments(a);
    let mb = moments(b);
    let n = a.len() as f64;
    let cov: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma.mean) * (y - mb.mean))
        .sum::<f64>()
        / (n - 1.0);
    cov / (ma.sd * mb.sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_basics() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-15);
        assert!((m.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(moments(&[7.0]).sd, 0.0);
    }

    #[test]
    fn wilson_shrinks_with_n() {
        assert!(wilson_half_width(5, 10) > wilson_half_width(50, 100));
        assert!(wilson_half_width(50, 100) > wilson_half_width(500, 1000));
    }

    #[test]
    fn ks_identical_samples_is_small() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(ks_statistic(&a, &a) <= 0.01 + 1e-12);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
        assert!(ks_statistic(&a, &b) > 0.4);
    }

    #[test]
    fn correlation_of_identical_is_one() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert!((correlation(&a, &a) - 1.0).abs() < 1e-12);
    }
}
