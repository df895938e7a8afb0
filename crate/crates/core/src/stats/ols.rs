use serde::Serialize;

use super::{f_sf, t_two_sided_p};
use crate::error::StatsError;
use crate::metrics::MinuteRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// Intercept first, then one coefficient per predictor column.
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_stat: f64,
    /// Residual degrees of freedom.
    pub df: usize,
    pub f_p_value: f64,
    pub ssr: f64,
    pub sst: f64,
    pub n: usize,
}

/// Ordinary least squares with an intercept, solved by Householder QR.
///
/// `x` holds one row of predictors per observation (without the constant).
pub fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult, StatsError> {
    let n = y.len();
    if x.len() != n {
        return Err(StatsError::Ragged);
    }
    let k = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != k) {
        return Err(StatsError::Ragged);
    }
    let p = k + 1;
    if n <= p {
        return Err(StatsError::InsufficientData { n, needed: p });
    }

    // column-major design with leading constant column
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    a.push(vec![1.0; n]);
    for j in 0..k {
        a.push(x.iter().map(|r| r[j]).collect());
    }
    let col_scale: Vec<f64> = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut qty = y.to_vec();

    for j in 0..p {
        let norm: f64 = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * col_scale[j].max(f64::MIN_POSITIVE) {
            return Err(StatsError::SingularDesign { column: j });
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let s = 2.0 * dot / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut qty[j..]);
        }
    }

    // R is upper triangular: r(i, j) = a[j][i] for i <= j
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = qty[i];
        for j in i + 1..p {
            s -= r(i, j) * beta[j];
        }
        beta[i] = s / r(i, i);
    }

    // R^{-1}, upper triangular
    let mut rinv = vec![vec![0.0; p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for j in i + 1..=c {
                s -= r(i, j) * rinv[j][c];
            }
            rinv[i][c] = s / r(i, i);
        }
    }

    let fitted: Vec<f64> = (0..n)
        .map(|i| beta[0] + (0..k).map(|j| beta[j + 1] * x[i][j]).sum::<f64>())
        .collect();
    let ssr: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = n - p;
    let sigma2 = ssr / df as f64;

    let mut std_errors = Vec::with_capacity(p);
    for i in 0..p {
        // diag of R^{-1} R^{-T}
        let d: f64 = rinv[i].iter().map(|v| v * v).sum();
        std_errors.push((sigma2 * d).sqrt());
    }
    let t_stats: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = t_stats
        .iter()
        .map(|&t| t_two_sided_p(t, df as f64))
        .collect();

    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / df as f64;
    let (f_stat, f_p_value) = if k == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let f = ((sst - ssr) / k as f64) / sigma2;
        (f, f_sf(f, k as f64, df as f64))
    };

    Ok(RegressionResult {
        beta,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        adj_r_squared,
        f_stat,
        df,
        f_p_value,
        ssr,
        sst,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinuteRegression {
    pub fit: RegressionResult,
    pub minutes_used: usize,
    /// Minutes without any decided episode, which have no response value.
    pub minutes_excluded: usize,
}

/// Regresses per-minute non-compliance percentage on vehicle and crossing
/// pedestrian counts.
pub fn regress_noncompliance(minutes: &[MinuteRecord]) -> Result<MinuteRegression, StatsError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for m in minutes {
        if let Some(pct) = m.pct_noncompliant {
            x.push(vec![m.n_vehicles as f64, m.n_crossing_peds as f64]);
            y.push(pct);
        }
    }
    let fit = ols_fit(&x, &y)?;
    Ok(MinuteRegression {
        fit,
        minutes_used: y.len(),
        minutes_excluded: minutes.len() - y.len(),
    })
}
