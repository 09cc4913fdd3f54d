//! Correlation and summary statistics over score sequences.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value from the t approximation with `n - 2` degrees of freedom.
    pub p: f64,
}

pub fn mean<T: Scalar>(xs: &[T]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x.f64()).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` divisor); zero for fewer than two values.
pub fn sample_std<T: Scalar>(xs: &[T]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x.f64() - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    if a < 3 {
        return Err(Error::UndefinedCorrelation("fewer than 3 observations"));
    }
    Ok(())
}

pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<Correlation> {
    check_lengths(xs.len(), ys.len())?;
    let xs: Vec<f64> = xs.iter().map(|x| x.f64()).collect();
    let ys: Vec<f64> = ys.iter().map(|y| y.f64()).collect();
    let r = pearson_r(&xs, &ys)?;
    let df = (xs.len() - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { r, p })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Result<f64> {
    check_lengths(xs.len(), ys.len())?;
    pearson_r(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_linear_relations() {
        let c = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert!(c.p < 1e-6);
        let c = pearson(&[1.0f32, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::LengthMismatch(3, 2))));
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn p_value_matches_reference() {
        // r = 0.8, n = 4: t = 0.8 * sqrt(2 / 0.36) = 1.885618; two-sided p with df 2.
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.8).abs() < 1e-12);
        // df = 2 has closed form p = 1 - t / sqrt(t^2 + 2).
        let t = 0.8 * (2.0f64 / 0.36).sqrt();
        let want = 1.0 - t / (t * t + 2.0).sqrt();
        assert!((c.p - want).abs() < 1e-9, "{} vs {}", c.p, want);
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 5.0, 9.0], &[2.0, 3.0, 10.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 5.0, 9.0], &[10.0, 3.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn std_uses_sample_divisor() {
        assert_eq!(sample_std(&[5.0]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
