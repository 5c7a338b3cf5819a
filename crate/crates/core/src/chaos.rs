//! Hermite chaos expansions on the one-dimensional Gaussian space.
//!
//! `H_k` are the Hermite polynomials normalized to be orthonormal for the
//! standard normal law, computed by the three-term recurrence
//! `H_{k+1}(x) = (x H_k(x) - sqrt(k) H_{k-1}(x)) / sqrt(k + 1)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature::{legendre, GaussianRule};

/// `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out` with `H_0(x), …, H_k(x)`.
pub fn hermite_all(k: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if k == 0 {
        return;
    }
    out.push(x);
    for j in 1..k {
        let next = (x * out[j] - (j as f64).sqrt() * out[j - 1]) / ((j + 1) as f64).sqrt();
        out.push(next);
    }
}

/// `Σ_k alpha[k] H_k(x)`.
pub fn hermite_series(alpha: &[f64], x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut acc = 0.0;
    for (k, &a) in alpha.iter().enumerate() {
        acc += a * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    acc
}

/// Truncated chaos expansion `g ≈ Σ_{k ≤ K} α_k H_k` with the L₂ mass of the
/// discarded part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosExpansion {
    pub alpha: Vec<f64>,
    pub tail_l2: f64,
}

impl ChaosExpansion {
    /// Exact finite expansion (no tail).
    pub fn from_coefficients(alpha: Vec<f64>) -> Self {
        Self { alpha, tail_l2: 0.0 }
    }

    /// `1_{[a, ∞)}`: `α_0 = Φ(-a)`, `α_k = φ(a) H_{k-1}(a) / sqrt(k)`.
    pub fn indicator(a: f64, order: usize) -> Self {
        let mut alpha = Vec::with_capacity(order + 1);
        alpha.push(normal::cdf(-a));
        let pdf = normal::pdf(a);
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 1..=order {
            alpha.push(pdf * cur / (k as f64).sqrt());
            let j = k - 1;
            let next = (a * cur - (j as f64).sqrt() * prev) / (k as f64).sqrt();
            prev = cur;
            cur = next;
        }
        let kept = compensated_sum(alpha.iter().map(|x| x * x));
        let tail = (normal::cdf(-a) - kept).max(0.0);
        Self {
            alpha,
            tail_l2: tail.sqrt(),
        }
    }

    pub fn order(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }

    /// `||g||²` as carried by the expansion (kept mass plus tail).
    pub fn norm_sq(&self) -> f64 {
        compensated_sum(self.alpha.iter().map(|a| a * a)) + self.tail_l2 * self.tail_l2
    }

    pub fn eval(&self, x: f64) -> f64 {
        hermite_series(&self.alpha, x)
    }

    pub fn truncated(&self, order: usize) -> Self {
        let keep = (order + 1).min(self.alpha.len());
        let dropped = compensated_sum(self.alpha[keep..].iter().map(|a| a * a));
        Self {
            alpha: self.alpha[..keep].to_vec(),
            tail_l2: (self.tail_l2 * self.tail_l2 + dropped).sqrt(),
        }
    }
}

fn compensated_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// How `α_k = ∫ g H_k dγ` is integrated.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionRule {
    /// Gauss–Hermite with `order > 2K` nodes; for smooth `g`.
    Hermite { order: usize },
    /// Composite Gauss–Legendre on `[-half_width, half_width]` with panel
    /// boundaries at `breakpoints`; for `g` with jumps or kinks there.
    Composite {
        breakpoints: Vec<f64>,
        half_width: f64,
        panel_order: usize,
    },
}

impl ProjectionRule {
    pub fn hermite(order: usize) -> Self {
        ProjectionRule::Hermite { order }
    }

    pub fn split_at(breakpoints: &[f64]) -> Self {
        ProjectionRule::Composite {
            breakpoints: breakpoints.to_vec(),
            half_width: 13.0,
            panel_order: 16,
        }
    }

    fn nodes(&self, k: usize) -> Result<GaussianRule> {
        match self {
            ProjectionRule::Hermite { order } => {
                if *order <= 2 * k {
                    return Err(Error::invalid(
                        "quad_order",
                        format!("Gauss–Hermite order {order} must exceed 2K = {}", 2 * k),
                    ));
                }
                Ok((*GaussianRule::hermite(*order)).clone())
            }
            ProjectionRule::Composite {
                breakpoints,
                half_width,
                panel_order,
            } => {
                // panels narrow enough to resolve the oscillations of H_K
                let width = (2.0 / (k.max(1) as f64).sqrt()).min(0.5);
                let mut cuts: Vec<f64> = Vec::new();
                let n = ((2.0 * half_width) / width).ceil() as usize;
                for j in 0..=n {
                    cuts.push(-half_width + 2.0 * half_width * j as f64 / n as f64);
                }
                cuts.extend(breakpoints.iter().copied().filter(|b| b.abs() < *half_width));
                cuts.sort_by(f64::total_cmp);
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
                let gl = legendre(*panel_order);
                let mut rule = GaussianRule {
                    nodes: Vec::new(),
                    weights: Vec::new(),
                };
                for p in cuts.windows(2) {
                    let half = 0.5 * (p[1] - p[0]);
                    let mid = 0.5 * (p[1] + p[0]);
                    for &(x, w) in gl.iter() {
                        let y = mid + half * x;
                        rule.nodes.push(y);
                        rule.weights.push(w * half * normal::pdf(y));
                    }
                }
                Ok(rule)
            }
        }
    }
}

/// Projects `g` onto the first `order + 1` chaoses. The tail mass is the
/// Parseval residual `||g||² - Σ α_k²` under the same rule.
pub fn project<G>(g: G, order: usize, rule: &ProjectionRule) -> Result<ChaosExpansion>
where
    G: Fn(f64) -> f64 + Sync,
{
    let q = rule.nodes(order)?;
    let chunk = 256;
    let partial: Vec<(Vec<f64>, f64)> = q
        .nodes
        .par_chunks(chunk)
        .zip(q.weights.par_chunks(chunk))
        .map(|(ys, ws)| {
            let mut acc = vec![0.0; order + 1];
            let mut norm = 0.0;
            let mut h = Vec::with_capacity(order + 1);
            for (&y, &w) in ys.iter().zip(ws) {
                if w == 0.0 {
                    continue;
                }
                let gy = g(y);
                if gy == 0.0 {
                    continue;
                }
                norm += w * gy * gy;
                hermite_all(order, y, &mut h);
                let wg = w * gy;
                for (a, hk) in acc.iter_mut().zip(&h) {
                    *a += wg * hk;
                }
            }
            (acc, norm)
        })
        .collect();
    let mut alpha = vec![0.0; order + 1];
    let mut norm_sq = 0.0;
    for (acc, n) in &partial {
        for (a, x) in alpha.iter_mut().zip(acc) {
            *a += x;
        }
        norm_sq += n;
    }
    if !norm_sq.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("chaos projection".into()));
    }
    let kept = compensated_sum(alpha.iter().map(|a| a * a));
    let residual = norm_sq - kept;
    if residual < -1e-10 * norm_sq.max(1e-300) {
        return Err(Error::Convergence(format!(
            "negative Parseval residual {residual:e} (norm² {norm_sq:e})"
        )));
    }
    Ok(ChaosExpansion {
        alpha,
        tail_l2: residual.max(0.0).sqrt(),
    })
}

/// Anything that can hand out expansions of increasing order.
pub trait CoefficientSource: Sync {
    fn expansion(&self, order: usize) -> Result<ChaosExpansion>;
}

/// `1_{[a, ∞)}` through the closed-form coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicator {
    pub threshold: f64,
}

impl CoefficientSource for Indicator {
    fn expansion(&self, order: usize) -> Result<ChaosExpansion> {
        Ok(ChaosExpansion::indicator(self.threshold, order))
    }
}

impl CoefficientSource for ChaosExpansion {
    fn expansion(&self, order: usize) -> Result<ChaosExpansion> {
        if order > self.order() && self.tail_l2 > 0.0 {
            return Err(Error::Convergence(format!(
                "expansion of order {} cannot be extended to {order}",
                self.order()
            )));
        }
        Ok(self.truncated(order))
    }
}

/// A function projected on demand.
pub struct Projected<G: Fn(f64) -> f64 + Sync> {
    pub g: G,
    pub rule: ProjectionRule,
}

impl<G: Fn(f64) -> f64 + Sync> CoefficientSource for Projected<G> {
    fn expansion(&self, order: usize) -> Result<ChaosExpansion> {
        let rule = match &self.rule {
            ProjectionRule::Hermite { order: q } => ProjectionRule::Hermite {
                order: (*q).max(2 * order + 1),
            },
            other => other.clone(),
        };
        project(&self.g, order, &rule)
    }
}

/// Malliavin–Sobolev norm of the truncated expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct D12Norm {
    pub value: f64,
    /// Set when the discarded tail is too heavy for the value to be trusted.
    pub tail_warning: bool,
}

pub fn d12_norm(e: &ChaosExpansion) -> D12Norm {
    let sum = compensated_sum(e.alpha.iter().enumerate().map(|(n, a)| (n + 1) as f64 * a * a));
    D12Norm {
        value: sum.sqrt(),
        tail_warning: e.tail_l2 > 1e-6,
    }
}

/// Partial sums `Σ_{n ≤ K} (n+1) α_n²` along `orders`, and whether their
/// increments fail to decrease (the heuristic divergence signal).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct D12Divergence {
    pub orders: Vec<usize>,
    pub partial_sums: Vec<f64>,
    pub divergent: bool,
}

pub fn d12_divergence(source: &dyn CoefficientSource, orders: &[usize]) -> Result<D12Divergence> {
    if orders.len() < 3 {
        return Err(Error::InsufficientData("need at least three truncation orders".into()));
    }
    let top = *orders.iter().max().unwrap();
    let e = source.expansion(top)?;
    let mut partial_sums = Vec::with_capacity(orders.len());
    for &k in orders {
        let k = k.min(e.order());
        let s = compensated_sum(e.alpha[..=k].iter().enumerate().map(|(n, a)| (n + 1) as f64 * a * a));
        partial_sums.push(s);
    }
    let inc: Vec<f64> = partial_sums.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = partial_sums.last().copied().unwrap_or(0.0).abs().max(1e-300);
    let divergent = inc.iter().all(|&d| d > 1e-12 * scale)
        && inc.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    Ok(D12Divergence {
        orders: orders.to_vec(),
        partial_sums,
        divergent,
    })
}

/// Geometric grid `1 - t = 2^{-j}`, `j = 0..=depth`.
pub fn unit_interval_grid(depth: usize) -> Vec<f64> {
    (0..=depth).map(|j| 1.0 - 0.5f64.powi(j as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesovPoint {
    pub t: f64,
    pub phi: f64,
    /// Truncation order that certified the point.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesovCurve {
    pub theta: f64,
    pub points: Vec<BesovPoint>,
    pub bounded: bool,
    /// Relative growth of the running maximum over the last decade of `1 - t`.
    pub last_decade_growth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovConfig {
    pub initial_order: usize,
    pub max_order: usize,
    /// Required ratio between the truncation bound and the partial sum.
    pub tail_tolerance: f64,
    /// Relative last-decade growth below which the curve counts as bounded.
    pub stabilization: f64,
}

impl Default for BesovConfig {
    fn default() -> Self {
        Self {
            initial_order: 256,
            max_order: 1 << 26,
            tail_tolerance: 1e-8,
            stabilization: 0.05,
        }
    }
}

/// `Σ_{k=1}^K k t^{k-1} α_k²`, summed from the largest `k` down.
fn weighted_partial(alpha: &[f64], t: f64) -> f64 {
    let k_max = alpha.len().saturating_sub(1);
    if k_max == 0 {
        return 0.0;
    }
    if t == 0.0 {
        return alpha[1] * alpha[1];
    }
    // t^{k-1} below ~1e-300 contributes nothing
    let k_eff = if t < 1.0 {
        let cut = 1.0 + 690.0 / (-t.ln());
        (cut as usize).min(k_max).max(1)
    } else {
        k_max
    };
    let mut pow = t.powi(k_eff as i32 - 1);
    let mut sum = 0.0;
    for k in (1..=k_eff).rev() {
        sum += k as f64 * pow * alpha[k] * alpha[k];
        pow /= t;
    }
    sum
}

/// `sup_{k > K} k t^{k-1}`.
fn envelope_max(order: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let k0 = (order + 1) as f64;
    let peak = -1.0 / t.ln();
    let k = if peak > k0 { peak } else { k0 };
    k * t.powf(k - 1.0)
}

/// `Φ(t) = (1-t)^{1-θ} Σ_{k≥1} k t^{k-1} α_k²` on `t_grid`, each point
/// certified by the truncation bound `tail² · sup_{k>K} k t^{k-1}`.
pub fn besov_criterion(
    source: &dyn CoefficientSource,
    theta: f64,
    t_grid: &[f64],
    cfg: &BesovConfig,
) -> Result<BesovCurve> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", "must lie in (0, 1)"));
    }
    if t_grid.iter().any(|&t| !(0.0..1.0).contains(&t)) {
        return Err(Error::invalid("t_grid", "points must lie in [0, 1)"));
    }
    let mut order = cfg.initial_order.max(1);
    let mut e = source.expansion(order)?;
    let mut points = Vec::with_capacity(t_grid.len());
    let mut by_t: Vec<(usize, f64)> = t_grid.iter().copied().enumerate().collect();
    by_t.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out = vec![None; t_grid.len()];
    for (idx, t) in by_t {
        loop {
            let partial = weighted_partial(&e.alpha, t);
            let bound = e.tail_l2 * e.tail_l2 * envelope_max(e.order(), t);
            if bound <= cfg.tail_tolerance * partial.abs() || bound == 0.0 {
                out[idx] = Some(BesovPoint {
                    t,
                    phi: (1.0 - t).powf(1.0 - theta) * partial,
                    order: e.order(),
                });
                break;
            }
            if order >= cfg.max_order {
                return Err(Error::Convergence(format!(
                    "Besov series at t={t} not certified at order cap {}",
                    cfg.max_order
                )));
            }
            order = (order * 2).min(cfg.max_order);
            e = source.expansion(order)?;
        }
    }
    points.extend(out.into_iter().map(|p| p.expect("every point certified")));
    let (bounded, growth) = stabilization_verdict(&points, cfg.stabilization);
    Ok(BesovCurve {
        theta,
        points,
        bounded,
        last_decade_growth: growth,
    })
}

/// Compares the running max at the last point with the running max at the
/// last point whose `1 - t` is at least ten times larger.
fn stabilization_verdict(points: &[BesovPoint], tol: f64) -> (bool, f64) {
    let mut sorted: Vec<BesovPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut run = Vec::with_capacity(sorted.len());
    let mut m = f64::NEG_INFINITY;
    for p in &sorted {
        m = m.max(p.phi);
        run.push(m);
    }
    let Some(last) = sorted.last() else {
        return (true, 0.0);
    };
    let gap = 1.0 - last.t;
    let anchor = sorted.iter().rposition(|p| 1.0 - p.t >= 10.0 * gap);
    match anchor {
        Some(i) if run[i] > 0.0 => {
            let growth = run[run.len() - 1] / run[i] - 1.0;
            (growth < tol, growth)
        }
        Some(_) => (run[run.len() - 1] <= 0.0, 0.0),
        None => (false, f64::NAN),
    }
}

/// `||M_1 - M_t||` for `M_t = E(g(W_1) | F_t)`, i.e.
/// `sqrt(Σ_{k≥1} α_k² (1 - t^k))`, with the discarded tail bracketed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosDecay {
    /// Upper value: the tail counted with weight one.
    pub value: f64,
    /// Lower value: the tail counted with weight `1 - t^{K+1}`.
    pub lower: f64,
}

impl ChaosDecay {
    pub fn relative_uncertainty(&self) -> f64 {
        if self.value > 0.0 {
            (self.value - self.lower) / self.value
        } else {
            0.0
        }
    }
}

pub fn decay_from_chaos(e: &ChaosExpansion, t: f64) -> Result<ChaosDecay> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::invalid("t", "must lie in [0, 1)"));
    }
    let k_max = e.order();
    let mut sum = 0.0;
    // descending k; 1 - t^k via exp_m1 keeps accuracy near t = 1
    let ln_t = if t > 0.0 { t.ln() } else { f64::NEG_INFINITY };
    for k in (1..=k_max).rev() {
        let w = if t > 0.0 { -(k as f64 * ln_t).exp_m1() } else { 1.0 };
        sum += e.alpha[k] * e.alpha[k] * w;
    }
    let tail = e.tail_l2 * e.tail_l2;
    let tail_weight = if t > 0.0 {
        -(((k_max + 1) as f64) * ln_t).exp_m1()
    } else {
        1.0
    };
    Ok(ChaosDecay {
        value: (sum + tail).sqrt(),
        lower: (sum + tail * tail_weight).sqrt(),
    })
}
