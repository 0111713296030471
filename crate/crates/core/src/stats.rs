//! Small, order-stable summary statistics.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// `ln mean(exp(xs))` without overflow. `-inf` entries contribute zero.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let scaled: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
    top + mean(&scaled).ln()
}

/// Mean of `exp(xs)` as `(ln mean, relative stderr)`.
pub fn log_mean_exp_stderr(xs: &[f64]) -> (f64, f64) {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    let scaled: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
    let (m, se) = mean_stderr(&scaled);
    (top + m.ln(), se / m)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A sampled curve `t ↦ value ± stderr`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Curve {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Curve {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value,stderr\n");
        for i in 0..self.len() {
            s.push_str(&format!("{},{},{}\n", self.t[i], self.value[i], self.stderr[i]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairwise_is_accurate() {
        let xs = vec![0.1; 1_000_000];
        assert_relative_eq!(pairwise_sum(&xs), 100_000.0, max_relative = 1e-14);
    }

    #[test]
    fn stderr_of_known_sample() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn log_mean_exp_handles_extremes() {
        assert_relative_eq!(log_mean_exp(&[-1000.0, -1000.0 + 2f64.ln()]), -1000.0 + 1.5f64.ln(), max_relative = 1e-14);
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_relative_eq!(log_mean_exp(&[f64::NEG_INFINITY, 0.0]), 0.5f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
