//! Convergence-rate fits of `||C_T||` against the number of rebalancing dates.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hedging::{l2_tracking_error, L2ErrorEstimate};
use crate::model::{MarketModel, Measure};
use crate::payoffs::Payoff;
use crate::report::{fmt_f64, write_table};
use crate::rng::derive_seed;
use crate::stats::weighted_line;
use crate::timenets::TimeNet;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Fewest points a fit accepts.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub error: f64,
    pub stderr: f64,
}

impl From<&L2ErrorEstimate> for RatePoint {
    fn from(e: &L2ErrorEstimate) -> Self {
        Self {
            n: e.n,
            error: e.l2_error,
            stderr: e.stderr,
        }
    }
}

/// `ln error = intercept + slope ln n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub pairs: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    /// `χ² / dof` of the weighted fit; the CI is widened by its root when above 1.
    pub reduced_chi2: f64,
}

impl RateFit {
    pub fn ci_width(&self) -> f64 {
        self.slope_hi - self.slope_lo
    }

    pub fn contains(&self, slope: f64) -> bool {
        self.slope_lo <= slope && slope <= self.slope_hi
    }
}

/// Weighted least squares in log-log coordinates with `σ(ln e) = stderr / e`.
/// When every stderr is zero the data are treated as exact and fitted unweighted.
pub fn fit_rate(pairs: &[RatePoint]) -> Result<RateFit> {
    if pairs.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!("{} points, need {MIN_POINTS}", pairs.len())));
    }
    let mut ns: Vec<usize> = pairs.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < MIN_POINTS {
        return Err(Error::InsufficientData("fewer than four distinct n".into()));
    }
    if ns[0] == 0 || ns[ns.len() - 1] < 4 * ns[0] {
        return Err(Error::InsufficientData("n must span at least two octaves".into()));
    }
    if pairs.iter().any(|p| p.error == 0.0) {
        return Err(Error::ExactHedge);
    }
    if pairs.iter().any(|p| !(p.error > 0.0) || !(p.stderr >= 0.0)) {
        return Err(Error::NonFinite("errors must be positive with non-negative stderr".into()));
    }
    let exact = pairs.iter().all(|p| p.stderr == 0.0);
    let xs: Vec<f64> = pairs.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.error.ln()).collect();
    let ws: Vec<f64> = if exact {
        vec![1.0; pairs.len()]
    } else {
        pairs.iter().map(|p| (p.error / p.stderr).powi(2)).collect()
    };
    if ws.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("regression weight (zero stderr mixed with nonzero)".into()));
    }
    let f = weighted_line(&xs, &ys, &ws)?;
    let dof = (pairs.len() - 2) as f64;
    let reduced_chi2 = f.chi2 / dof;
    let se = if exact {
        (reduced_chi2 * f.slope_se * f.slope_se).sqrt()
    } else {
        f.slope_se * reduced_chi2.sqrt().max(1.0)
    };
    if !(f.slope.is_finite() && se.is_finite()) {
        return Err(Error::NonFinite("fitted slope".into()));
    }
    Ok(RateFit {
        pairs: pairs.to_vec(),
        slope: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
        slope_se: se,
        slope_lo: f.slope - Z95 * se,
        slope_hi: f.slope + Z95 * se,
        reduced_chi2,
    })
}

/// Every point of a sweep and the fit over all but the smallest `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub points: Vec<L2ErrorEstimate>,
    pub fit: RateFit,
}

/// Paths used at `n`: `m sqrt(n / n_min)`, capped at `4m`.
pub fn paths_for(n: usize, n_min: usize, m: usize) -> usize {
    let scaled = (m as f64 * (n as f64 / n_min as f64).sqrt()).round() as usize;
    scaled.clamp(m, 4 * m)
}

/// Runs `l2_tracking_error` on `τ^{n,θ}` for each `n` with seed
/// `derive_seed(seed, n)` and fits the rate.
pub fn sweep(
    p: &Payoff,
    model: &MarketModel,
    theta: f64,
    n_list: &[usize],
    m: usize,
    seed: u64,
    measure: Measure,
) -> Result<Sweep> {
    if n_list.len() < MIN_POINTS + 1 {
        return Err(Error::invalid(
            "n_list",
            format!("need at least {} values (the smallest is dropped)", MIN_POINTS + 1),
        ));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_list", "must be strictly increasing"));
    }
    let n_min = n_list[0];
    let points = n_list
        .par_iter()
        .map(|&n| {
            let net = TimeNet::theta_net(n, theta, model.maturity)?;
            l2_tracking_error(p, model, &net, paths_for(n, n_min, m), derive_seed(seed, n as u64), measure)
        })
        .collect::<Result<Vec<_>>>()?;
    // round-off level errors everywhere mean the hedge is exact
    let g = p.greeks(model, 0.0, model.s0)?;
    let scale = g.price.abs() + model.s0 * g.delta.abs();
    if points.iter().all(|e| e.l2_error <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::ExactHedge);
    }
    let pairs: Vec<RatePoint> = points[1..].iter().map(RatePoint::from).collect();
    let fit = fit_rate(&pairs)?;
    Ok(Sweep { points, fit })
}

/// `(n, a - b, joint stderr)` for every `n` present in both sweeps.
pub fn compare_errors(a: &[L2ErrorEstimate], b: &[L2ErrorEstimate]) -> Vec<(usize, f64, f64)> {
    a.iter()
        .filter_map(|x| {
            b.iter()
                .find(|y| y.n == x.n)
                .map(|y| (x.n, x.l2_error - y.l2_error, x.stderr.hypot(y.stderr)))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    slope: f64,
    slope_lo: f64,
    slope_hi: f64,
    r2: f64,
    intercept: f64,
    reduced_chi2: f64,
    points: &'a [RatePoint],
}

impl Sweep {
    /// CSV columns `n, l2_error, stderr, m` for every swept point.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|e| vec![e.n.to_string(), fmt_f64(e.l2_error), fmt_f64(e.stderr), e.m.to_string()])
            .collect();
        write_table(out, preamble, &["n", "l2_error", "stderr", "m"], &rows)
    }
}

impl RateFit {
    /// JSON object with `slope`, `slope_lo`, `slope_hi`, `r2`, `intercept`,
    /// `reduced_chi2` and the fitted `points`.
    pub fn summary_json(&self) -> String {
        let s = Summary {
            slope: self.slope,
            slope_lo: self.slope_lo,
            slope_hi: self.slope_hi,
            r2: self.r_squared,
            intercept: self.intercept,
            reduced_chi2: self.reduced_chi2,
            points: &self.pairs,
        };
        serde_json::to_string_pretty(&s).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_scaling() {
        assert_eq!(paths_for(8, 8, 100), 100);
        assert_eq!(paths_for(32, 8, 100), 200);
        assert_eq!(paths_for(512, 8, 100), 400);
    }
}
