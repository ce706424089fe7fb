//! Sample summaries and Welch's two-sample t-test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean, `s / √n`.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the difference of two sample means,
/// `√(s_a²/n_a + s_b²/n_b)`.
pub fn pooled_std_error(a: &[f64], b: &[f64]) -> f64 {
    (sample_variance(a) / a.len() as f64 + sample_variance(b) / b.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// One-tailed p-value for `H0: mean_a ≥ mean_b`, i.e. `P(T ≤ t)`.
    pub p: f64,
    /// Both samples have zero variance, so `t` is undefined or infinite and
    /// `p` follows the boundary convention.
    pub degenerate: bool,
}

/// Welch's t-test with Welch–Satterthwaite degrees of freedom, testing
/// `H0: mean_a ≥ mean_b` against `H1: mean_a < mean_b`.
pub fn welch_ttest_onetail(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("t-test samples must be finite".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let (t, p) = match diff.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 0.0),
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(WelchTest {
            t,
            df: na + nb - 2.0,
            p,
            degenerate: true,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(WelchTest {
        t,
        df,
        p: dist.cdf(t),
        degenerate: false,
    })
}
