//! Fractional smoothness diagnostics for `Z = h(S_T)` under the zero-drift
//! GBM law: the conditional L₂ decay `D(t) = ||Z - E(Z|F_t)||`, the growth
//! of `E|∇u|²` and `E|D²u|²` in log coordinates, and their weighted
//! integrals near maturity.
//!
//! `D(t)²` is computed as `E[Var(Z | S_t)]`, which equals `E Z² - E H(t,S_t)²`
//! without the cancellation of that difference as `t → T`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MarketModel;
use crate::payoffs::{Payoff, PricingConfig};
use crate::quadrature::{legendre, lognormal_nodes};
use crate::report::{fmt_f64, write_table};
use crate::stats::{line, LineFit};

/// Settings for the outer expectation over `S_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConfig {
    /// Gauss–Legendre nodes per panel of the outer rule.
    pub panel_order: usize,
    /// Resolution near the strike as a fraction of the conditional spread.
    pub kink_fraction: f64,
    pub pricing: PricingConfig,
}

impl Default for SmoothnessConfig {
    fn default() -> Self {
        Self {
            panel_order: 16,
            kink_fraction: 0.01,
            pricing: PricingConfig::default(),
        }
    }
}

/// One outer-quadrature pass per time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessCurves {
    pub t_grid: Vec<f64>,
    pub maturity: f64,
    /// `D(t)`.
    pub decay: Vec<f64>,
    /// `E|∇_x u(t, X_t)|²`.
    pub grad_sq: Vec<f64>,
    /// `E|D²u(t, X_t)|²`.
    pub hess_sq: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PointMoments {
    decay_sq: f64,
    grad_sq: f64,
    hess_sq: f64,
}

fn point_moments(p: &Payoff, model: &MarketModel, t: f64, cfg: &SmoothnessConfig, want_variance: bool) -> PointMoments {
    let tau = model.maturity - t;
    let sig2 = model.sigma * model.sigma;
    let fine = if t > 0.0 {
        (cfg.kink_fraction * (tau / t).sqrt()).clamp(1e-12, 0.1)
    } else {
        0.1
    };
    let nodes = lognormal_nodes(
        model.s0,
        model.sigma * t.sqrt(),
        -0.5 * sig2 * t,
        p.strike(),
        fine,
        cfg.panel_order,
    );
    let mut out = PointMoments::default();
    for (s, w) in nodes {
        if w == 0.0 {
            continue;
        }
        let (greeks, variance) = if want_variance {
            let m = p.conditional_moments(model, t, s, &cfg.pricing);
            (m.greeks, m.variance)
        } else {
            (p.greeks_unchecked(model, t, s, &cfg.pricing), 0.0)
        };
        let g = greeks.log_gradient(s);
        let h = greeks.log_hessian(s);
        out.decay_sq += w * variance;
        out.grad_sq += w * g * g;
        out.hess_sq += w * h * h;
    }
    out
}

fn check_t_grid(model: &MarketModel, t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("t_grid", "empty"));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0 && t < model.maturity)) {
        return Err(Error::invalid("t_grid", "times must lie in [0, T)"));
    }
    Ok(())
}

pub fn smoothness_curves(
    p: &Payoff,
    model: &MarketModel,
    t_grid: &[f64],
    cfg: &SmoothnessConfig,
) -> Result<SmoothnessCurves> {
    check_t_grid(model, t_grid)?;
    let pts: Vec<PointMoments> = t_grid
        .par_iter()
        .map(|&t| point_moments(p, model, t, cfg, true))
        .collect();
    let mut decay = Vec::with_capacity(pts.len());
    for (pt, &t) in pts.iter().zip(t_grid) {
        if !(pt.decay_sq.is_finite() && pt.grad_sq.is_finite() && pt.hess_sq.is_finite()) {
            return Err(Error::Convergence(format!("smoothness quadrature at t={t} is not finite")));
        }
        if pt.decay_sq < -1e-10 {
            log::warn!("negative D(t)² = {:e} at t = {t}, clamped to 0", pt.decay_sq);
        }
        decay.push(pt.decay_sq.max(0.0).sqrt());
    }
    Ok(SmoothnessCurves {
        t_grid: t_grid.to_vec(),
        maturity: model.maturity,
        decay,
        grad_sq: pts.iter().map(|p| p.grad_sq).collect(),
        hess_sq: pts.iter().map(|p| p.hess_sq).collect(),
    })
}

impl SmoothnessCurves {
    pub fn decay_curve(&self) -> DecayCurve {
        DecayCurve {
            t_grid: self.t_grid.clone(),
            maturity: self.maturity,
            decay: self.decay.clone(),
        }
    }

    /// CSV columns `t, T_minus_t, decay, grad_sq, hess_sq`.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let rows: Vec<Vec<String>> = (0..self.t_grid.len())
            .map(|i| {
                vec![
                    fmt_f64(self.t_grid[i]),
                    fmt_f64(self.maturity - self.t_grid[i]),
                    fmt_f64(self.decay[i]),
                    fmt_f64(self.grad_sq[i]),
                    fmt_f64(self.hess_sq[i]),
                ]
            })
            .collect();
        write_table(out, preamble, &["t", "T_minus_t", "decay", "grad_sq", "hess_sq"], &rows)
    }
}

/// `D(t) = ||Z - E(Z|F_t)||_{L2}` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub t_grid: Vec<f64>,
    pub maturity: f64,
    pub decay: Vec<f64>,
}

pub fn conditional_l2_decay(p: &Payoff, model: &MarketModel, t_grid: &[f64]) -> Result<DecayCurve> {
    Ok(smoothness_curves(p, model, t_grid, &SmoothnessConfig::default())?.decay_curve())
}

fn growth_curve(p: &Payoff, model: &MarketModel, t_grid: &[f64], hess: bool) -> Result<Vec<f64>> {
    check_t_grid(model, t_grid)?;
    let cfg = SmoothnessConfig::default();
    let v: Vec<f64> = t_grid
        .par_iter()
        .map(|&t| {
            let m = point_moments(p, model, t, &cfg, false);
            if hess {
                m.hess_sq
            } else {
                m.grad_sq
            }
        })
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Convergence("growth curve quadrature is not finite".into()));
    }
    Ok(v)
}

/// `E|∇_x u(t, X_t)|²` with `∇_x u = s ∂H/∂s`.
pub fn grad_growth_curve(p: &Payoff, model: &MarketModel, t_grid: &[f64]) -> Result<Vec<f64>> {
    growth_curve(p, model, t_grid, false)
}

/// `E|D²u(t, X_t)|²` with `D²u = s² ∂²H/∂s² + s ∂H/∂s`.
pub fn hessian_growth_curve(p: &Payoff, model: &MarketModel, t_grid: &[f64]) -> Result<Vec<f64>> {
    growth_curve(p, model, t_grid, true)
}

/// `t_j = T (1 - 2^{-j})`, `j = 0..=depth`.
pub fn default_t_grid(maturity: f64, depth: usize) -> Vec<f64> {
    (0..=depth).map(|j| maturity * (1.0 - 0.5f64.powi(j as i32))).collect()
}

/// Power-law fit of a curve against `T - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    /// Fitted exponent of the curve in `T - t`.
    pub exponent: f64,
    pub fit: LineFit,
    /// Largest absolute residual in log units.
    pub max_residual: f64,
}

/// Least-squares exponent of `values` against `T - t`, dropping the two
/// coarsest and two finest points.
pub fn fit_exponent(t_grid: &[f64], maturity: f64, values: &[f64]) -> Result<ExponentFit> {
    let mut pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(values)
        .map(|(&t, &v)| (maturity - t, v))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientData(format!("{} points, need at least 8", pts.len())));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let span = (pts[0].0 / pts[pts.len() - 1].0).log10();
    if span < 3.0 {
        return Err(Error::InsufficientData(format!("T - t spans {span:.2} decades, need 3")));
    }
    if pts.iter().all(|p| p.1 == 0.0) {
        return Err(Error::InfiniteSmoothness);
    }
    let kept = &pts[2..pts.len() - 2];
    if kept.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::NonFinite("curve has non-positive values inside the fit window".into()));
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let fit = line(&xs, &ys)?;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - fit.intercept - fit.slope * x).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        exponent: fit.slope,
        fit,
        max_residual,
    })
}

/// `θ̂ = min(1, 2 · slope of log D against log(T - t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub fit: ExponentFit,
}

pub fn estimate_theta_sup(curve: &DecayCurve) -> Result<ThetaEstimate> {
    let fit = fit_exponent(&curve.t_grid, curve.maturity, &curve.decay)?;
    Ok(ThetaEstimate {
        theta: (2.0 * fit.exponent).min(1.0),
        fit,
    })
}

/// The three sup-type smoothness readings: from the decay exponent, the
/// gradient growth exponent plus one, and the Hessian growth exponent plus
/// two, each clamped to at most one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupExponents {
    pub from_decay: f64,
    pub from_grad: f64,
    pub from_hess: f64,
}

impl SupExponents {
    pub fn from_curves(c: &SmoothnessCurves) -> Result<Self> {
        let d = fit_exponent(&c.t_grid, c.maturity, &c.decay)?;
        let g = fit_exponent(&c.t_grid, c.maturity, &c.grad_sq)?;
        let h = fit_exponent(&c.t_grid, c.maturity, &c.hess_sq)?;
        Ok(Self {
            from_decay: (2.0 * d.exponent).min(1.0),
            from_grad: (g.exponent + 1.0).min(1.0),
            from_hess: (h.exponent + 2.0).min(1.0),
        })
    }

    pub fn all(&self) -> [f64; 3] {
        [self.from_decay, self.from_grad, self.from_hess]
    }

    /// Largest pairwise gap between the three readings.
    pub fn spread(&self) -> f64 {
        let v = self.all();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Per-reading verdict "the sup at `theta` is finite", i.e.
    /// `theta ≤ reading + tol`.
    pub fn verdicts(&self, theta: f64, tol: f64) -> [bool; 3] {
        self.all().map(|r| theta <= r + tol)
    }
}

/// Geometric ratio of dyadic increments above which an integral counts as
/// divergent.
pub const DIVERGENCE_RATIO: f64 = 0.985;
/// Number of trailing increments used for the ratio fit.
const RATIO_WINDOW: usize = 8;

/// A truncated integral near maturity split into dyadic pieces in `T - t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicIntegral {
    /// Piece `j` covers `T - t ∈ [T 2^{-j-1}, T 2^{-j}]`.
    pub increments: Vec<f64>,
    /// Sum of all pieces, i.e. the integral up to `T - T 2^{-levels}`.
    pub value: f64,
    /// Fitted ratio of consecutive trailing increments.
    pub ratio: f64,
    pub finite: bool,
}

impl DyadicIntegral {
    pub fn from_increments(increments: Vec<f64>) -> Self {
        let value = increments.iter().sum();
        let scale = increments.iter().copied().fold(0.0, f64::max);
        let tail = &increments[increments.len().saturating_sub(RATIO_WINDOW)..];
        let negligible = scale == 0.0 || tail.iter().all(|&x| x.abs() <= 1e-14 * scale);
        let ratio = if negligible || tail.iter().any(|&x| !(x > 0.0)) {
            0.0
        } else {
            let xs: Vec<f64> = (0..tail.len()).map(|j| j as f64).collect();
            let ys: Vec<f64> = tail.iter().map(|x| x.ln()).collect();
            line(&xs, &ys).map(|f| f.slope.exp()).unwrap_or(f64::NAN)
        };
        Self {
            increments,
            value,
            ratio,
            finite: ratio < DIVERGENCE_RATIO,
        }
    }
}

/// Smoothness curves at Gauss–Legendre nodes (in `ln(T - t)`) of each dyadic
/// piece, reusable for any weight `(T - t)^a`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicCurves {
    maturity: f64,
    /// Per piece: `(T - t, dt-weight, D², E|∇u|², E|D²u|²)`.
    pieces: Vec<Vec<[f64; 5]>>,
}

pub fn dyadic_curves(p: &Payoff, model: &MarketModel, levels: usize, order: usize) -> Result<DyadicCurves> {
    if levels < RATIO_WINDOW + 1 {
        return Err(Error::invalid("levels", format!("need at least {} dyadic levels", RATIO_WINDOW + 1)));
    }
    let gl = legendre(order);
    let big_t = model.maturity;
    let mut taus = Vec::with_capacity(levels * order);
    for j in 0..levels {
        let hi = (big_t * 0.5f64.powi(j as i32)).ln();
        let lo = hi - std::f64::consts::LN_2;
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        for &(x, w) in gl.iter() {
            let tau = (mid + half * x).exp();
            // dt = tau d(ln tau)
            taus.push((j, tau, w * half * tau));
        }
    }
    let cfg = SmoothnessConfig::default();
    let values: Vec<PointMoments> = taus
        .par_iter()
        .map(|&(_, tau, _)| point_moments(p, model, (big_t - tau).max(0.0), &cfg, true))
        .collect();
    let mut pieces = vec![Vec::with_capacity(order); levels];
    for (&(j, tau, w), v) in taus.iter().zip(&values) {
        if !(v.decay_sq.is_finite() && v.grad_sq.is_finite() && v.hess_sq.is_finite()) {
            return Err(Error::Convergence(format!("dyadic quadrature at T-t={tau:e} is not finite")));
        }
        pieces[j].push([tau, w, v.decay_sq.max(0.0), v.grad_sq, v.hess_sq]);
    }
    Ok(DyadicCurves {
        maturity: big_t,
        pieces,
    })
}

impl DyadicCurves {
    fn integral(&self, column: usize, power: f64) -> DyadicIntegral {
        let inc = self
            .pieces
            .iter()
            .map(|piece| piece.iter().map(|r| r[1] * r[0].powf(power) * r[column]).sum())
            .collect();
        DyadicIntegral::from_increments(inc)
    }

    /// `∫ (T-t)^{-1-θ} D(t)² dt`.
    pub fn b22(&self, theta: f64) -> DyadicIntegral {
        self.integral(2, -1.0 - theta)
    }

    /// `∫ (T-t)^{-θ} E|∇u|² dt`.
    pub fn grad_integral(&self, theta: f64) -> DyadicIntegral {
        self.integral(3, -theta)
    }

    /// `∫ (T-t)^{1-θ} E|D²u|² dt`.
    pub fn hess_integral(&self, theta: f64) -> DyadicIntegral {
        self.integral(4, 1.0 - theta)
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }
}

/// `∫_0^{T-δ} (T-t)^{-1-θ} D(t)² dt` with the finiteness verdict from the
/// dyadic pieces `T - t ∈ [T 2^{-j-1}, T 2^{-j}]` down to `δ`.
pub fn b22_integral(p: &Payoff, model: &MarketModel, theta: f64, delta: f64) -> Result<DyadicIntegral> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", "must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < model.maturity) {
        return Err(Error::invalid("delta", "must lie in (0, T)"));
    }
    let levels = (model.maturity / delta).log2().ceil() as usize;
    Ok(dyadic_curves(p, model, levels.max(RATIO_WINDOW + 1), 8)?.b22(theta))
}
