//! Small regression helpers.

use serde::Serialize;

use crate::error::{Error, Result};

/// Weighted least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the weights alone.
    pub slope_se: f64,
    pub r_squared: f64,
    /// `Σ w r²`, the weighted residual sum of squares.
    pub chi2: f64,
}

/// Fits with weights `w_i` (inverse variances). Needs two distinct `x`.
pub fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || ws.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for a line fit")));
    }
    if xs.iter().chain(ys).chain(ws).any(|v| !v.is_finite()) || ws.iter().any(|&w| w <= 0.0) {
        return Err(Error::NonFinite("regression input or weight".into()));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((&x, &y), &w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        r_squared,
        chi2,
    })
}

/// Ordinary least squares.
pub fn line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    weighted_line(xs, ys, &vec![1.0; xs.len()])
}
