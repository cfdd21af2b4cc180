//! Ordinary least squares on (x, y) pairs and simple summary statistics.

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Simple linear regression y = intercept + slope * x.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (0 when the fit is exact).
    pub slope_std_error: f64,
    /// Residual degrees of freedom, n - 2.
    pub df: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "linear_fit: {} xs vs {} ys",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument("linear_fit needs at least 2 points".into()));
    }
    let nf = n as f64;
    let x_mean = pairwise_sum(xs) / nf;
    let y_mean = pairwise_sum(ys) / nf;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let syy: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("linear_fit: zero variance in x".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let df = n.saturating_sub(2);
    let slope_std_error = if df > 0 { (ssr / df as f64 / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_std_error,
        df,
    })
}

/// Two-sided t-based confidence half-width for a coefficient with standard
/// error `std_error` at confidence `level` (e.g. 0.75).
pub fn t_half_width(std_error: f64, df: usize, level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} not in (0,1)")));
    }
    if df == 0 || std_error == 0.0 {
        return Ok(0.0);
    }
    let t = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::Internal(format!("t-distribution: {e}")))?;
    let q = t.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok(q * std_error)
}

/// Median of a sample (mean of middle two for even length).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of empty slice");
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
