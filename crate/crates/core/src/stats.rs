//! Statistical primitives shared by the detectors and reports.
//!
//! Everything here is pure and allocation-light. Quantiles use linear
//! interpolation between order statistics, confidence intervals use the
//! normal approximation, and power-law fits are ordinary least squares in
//! log-log space.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// z-score of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// A fitted `y = a * x^b` relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination of the fit in log space.
    pub r_squared: f64,
    pub n_points: usize,
}

/// Least-squares fit of `ln y = ln a + b ln x`.
///
/// Logs are taken of ratios to the first point, so scaling every `y` by a
/// factor that is exact in floating point (a power of two) leaves `b` and
/// `r_squared` bit-identical.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::Stats(format!(
            "log-log fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::Stats(format!("point {i} ({x}, {y}) is not strictly positive")));
        }
    }
    let (x0, y0) = points[0];
    let lx: Vec<f64> = points.iter().map(|&(x, _)| (x / x0).ln()).collect();
    let ly: Vec<f64> = points.iter().map(|&(_, y)| (y / y0).ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Stats("log-log fit needs at least two distinct x values".into()));
    }
    let b = sxy / sxx;
    let intercept = (y0.ln() + my) - b * (x0.ln() + mx);

    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = (y - my) - b * (x - mx);
            r * r
        })
        .sum();
    // A flat series is fitted exactly by a flat line.
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };

    Ok(LogLogFit {
        a: intercept.exp(),
        b,
        r_squared,
        n_points: points.len(),
    })
}

/// Linear-interpolation quantile of an already sorted, nonempty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn quantiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Stats("quantiles of an empty sample".into()));
    }
    if let Some(q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Stats(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(qs.iter().map(|&q| quantile_sorted(&sorted, q)).collect())
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantiles(values, &[0.5]).map(|v| v[0])
}

/// Mean and 95% half-width `1.96 * s / sqrt(n)`; a singleton has width 0.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z_95 * var.sqrt() / (n as f64).sqrt())
}

/// Empirical probability mass function of a multiset of counts.
pub fn pmf<I>(counts: I) -> Result<BTreeMap<u64, f64>>
where
    I: IntoIterator<Item = u64>,
{
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for c in counts {
        *freq.entry(c).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Stats("pmf of an empty sample".into()));
    }
    Ok(freq.into_iter().map(|(v, k)| (v, k as f64 / total as f64)).collect())
}

/// Points `(x, p(x))` of the pmf head used for tail-exponent estimates: the
/// run of consecutive support values, starting at the smallest positive one,
/// each observed at least `min_count` times. Sparse tail values are left out
/// because single observations flatten a least-squares slope.
pub fn pmf_head_points<I>(counts: I, min_count: u64) -> Vec<(f64, f64)>
where
    I: IntoIterator<Item = u64>,
{
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total = 0u64;
    for c in counts {
        *freq.entry(c).or_default() += 1;
        total += 1;
    }
    let mut out = Vec::new();
    let mut expected = None;
    for (&x, &k) in freq.range(1..) {
        if expected.is_some_and(|e| e != x) || k < min_count {
            break;
        }
        out.push((x as f64, k as f64 / total as f64));
        expected = Some(x + 1);
    }
    out
}
