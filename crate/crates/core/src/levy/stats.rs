//! Goodness-of-fit and summary statistics for sampled ensembles.

use crate::sum;

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Kolmogorov coefficient `c(level)` with `P(sqrt(n) D_n > c) = level`
/// asymptotically.
pub fn kolmogorov_coefficient(level: f64) -> f64 {
    (-0.5 * (0.5 * level).ln()).sqrt()
}

pub fn ks_critical_one_sample(n: usize, level: f64) -> f64 {
    kolmogorov_coefficient(level) / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize, level: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    kolmogorov_coefficient(level) * ((n + m) / (n * m)).sqrt()
}

/// `sup_x |F_n(x) - F(x)|`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(samples);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mean and standard error of a per-sample statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McValue {
    pub mean: f64,
    pub stderr: f64,
}

impl McValue {
    pub fn of(values: &[f64]) -> Self {
        let (mean, stderr) = sum::mean_stderr(values);
        McValue { mean, stderr }
    }

    pub fn within(&self, exact: f64, sigmas: f64) -> bool {
        (self.mean - exact).abs() <= sigmas * self.stderr
    }
}

/// Real and imaginary parts of `E e^{iξX}`.
pub fn empirical_char_function(samples: &[f64], xi: f64) -> (McValue, McValue) {
    let c: Vec<f64> = samples.iter().map(|x| (xi * x).cos()).collect();
    let s: Vec<f64> = samples.iter().map(|x| (xi * x).sin()).collect();
    (McValue::of(&c), McValue::of(&s))
}

/// `P(X > q) - P(X < -q)`; zero in expectation for a symmetric law. Unlike
/// the moment skewness it has finite variance for heavy tails.
pub fn tail_balance(samples: &[f64], q: f64) -> McValue {
    let v: Vec<f64> = samples
        .iter()
        .map(|&x| {
            if x > q {
                1.0
            } else if x < -q {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    McValue::of(&v)
}

/// Moment skewness; only meaningful when the third moment exists.
pub fn skewness(samples: &[f64]) -> f64 {
    let m = sum::mean(samples);
    let c2: Vec<f64> = samples.iter().map(|x| (x - m).powi(2)).collect();
    let c3: Vec<f64> = samples.iter().map(|x| (x - m).powi(3)).collect();
    sum::mean(&c3) / sum::mean(&c2).powf(1.5)
}

/// Least-squares slope of `log P(|X| > x)` against `log x` on `points`
/// log-spaced thresholds in `[x_lo, x_hi]`.
pub fn tail_slope(samples: &[f64], x_lo: f64, x_hi: f64, points: usize) -> f64 {
    let abs = sorted(&samples.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let n = abs.len() as f64;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for k in 0..points {
        let x = x_lo * (x_hi / x_lo).powf(k as f64 / (points - 1) as f64);
        let above = abs.len() - abs.partition_point(|&v| v <= x);
        if above > 0 {
            lx.push(x.ln());
            ly.push((above as f64 / n).ln());
        }
    }
    let mx = sum::mean(&lx);
    let my = sum::mean(&ly);
    let sxy = sum::neumaier(lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = sum::neumaier(lx.iter().map(|x| (x - mx) * (x - mx)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_at_one_percent() {
        assert!((kolmogorov_coefficient(0.01) - 1.6276).abs() < 1e-4);
        assert!((ks_critical_one_sample(100, 0.01) - 0.16276).abs() < 1e-4);
    }

    #[test]
    fn ks_on_known_samples() {
        // uniform grid midpoints against the uniform CDF
        let n = 100;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&u, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert_eq!(ks_two_sample(&u, &u), 0.0);
        let shifted: Vec<f64> = u.iter().map(|x| x + 10.0).collect();
        assert_eq!(ks_two_sample(&u, &shifted), 1.0);
    }

    #[test]
    fn tail_slope_of_pareto() {
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-1.0 / 1.5)).collect();
        let s = tail_slope(&xs, 2.0, 20.0, 12);
        assert!((s + 1.5).abs() < 0.02, "{s}");
    }

    #[test]
    fn balance_and_skewness_of_symmetric_set() {
        let xs = [-3.0, -1.0, 0.0, 1.0, 3.0];
        assert_eq!(tail_balance(&xs, 0.5).mean, 0.0);
        assert!(skewness(&xs).abs() < 1e-15);
    }
}
