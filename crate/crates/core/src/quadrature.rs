//! Quadrature rules against the standard normal law and on time intervals.
//!
//! Two families are used. Gauss–Hermite is exact for polynomial integrands
//! and is the rule for chaos payoffs. Payoffs with a kink or a jump are
//! integrated with composite Gauss–Legendre panels split at the singular
//! point and graded geometrically toward it.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::normal;

/// Nodes and weights for `∫ f(y) φ(y) dy`, φ the standard normal density.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    /// Gauss–Hermite rule with `order` nodes rescaled to the standard normal.
    pub fn hermite(order: usize) -> Arc<GaussianRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussianRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(rule) = cache.lock().unwrap().get(&order) {
            return rule.clone();
        }
        let gh = GaussHermite::new(NonZeroUsize::new(order.max(1)).unwrap());
        let scale = std::f64::consts::PI.sqrt().recip();
        let mut pairs: Vec<(f64, f64)> = gh
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| polish_hermite_node(order, x * std::f64::consts::SQRT_2, w * scale))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rule = Arc::new(GaussianRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        });
        cache.lock().unwrap().insert(order, rule.clone());
        rule
    }

    /// Composite Gauss–Legendre rule on `[lo, hi]` with unit-width base
    /// panels. Each `(y, fine)` in `breaks` is a panel boundary; the panels
    /// on either side are refined geometrically until the one touching `y`
    /// is narrower than `fine`.
    pub fn graded(lo: f64, hi: f64, breaks: &[(f64, f64)], panel_order: usize) -> GaussianRule {
        let mut cuts: Vec<f64> = Vec::new();
        let base = ((hi - lo).ceil() as usize).max(1);
        for k in 0..=base {
            cuts.push(lo + (hi - lo) * k as f64 / base as f64);
        }
        for &(y, fine) in breaks {
            if !(y > lo && y < hi) {
                continue;
            }
            cuts.push(y);
            let mut d = 0.5;
            let fine = fine.max(1e-14);
            while d > fine {
                d *= 0.5;
                if y - d > lo {
                    cuts.push(y - d);
                }
                if y + d < hi {
                    cuts.push(y + d);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
        Self::from_cuts(&cuts, panel_order)
    }

    /// Composite rule on `[a, b]` whose panels double in width away from `a`,
    /// starting below `fine` and capped at unit width. Empty when `a >= b`.
    pub fn graded_from(a: f64, b: f64, fine: f64, panel_order: usize) -> GaussianRule {
        let mut cuts = vec![a];
        let mut width = fine.max(1e-14);
        let mut x = a;
        while x < b {
            x = (x + width).min(b);
            cuts.push(x);
            width = (2.0 * width).min(1.0);
        }
        Self::from_cuts(&cuts, panel_order)
    }

    fn from_cuts(cuts: &[f64], panel_order: usize) -> GaussianRule {
        let gl = legendre(panel_order);
        let mut nodes = Vec::with_capacity(cuts.len() * panel_order);
        let mut weights = Vec::with_capacity(cuts.len() * panel_order);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, w) in gl.iter() {
                let y = mid + half * x;
                nodes.push(y);
                weights.push(w * half * normal::pdf(y));
            }
        }
        GaussianRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&y, &w)| if w == 0.0 { 0.0 } else { w * f(y) })
            .sum()
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], cached by order.
pub fn legendre(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().unwrap().get(&order) {
        return rule.clone();
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
    let rule = Arc::new(gl.as_node_weight_pairs().to_vec());
    cache.lock().unwrap().insert(order, rule.clone());
    rule
}

/// Gauss–Legendre on `[a, b]`.
pub fn integrate_interval(a: f64, b: f64, order: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let gl = legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gl.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Integral of `f` over `[a, b]` when `f` may be singular (but integrable)
/// at `b`. The interval is split at `b - (b - a) 2^{-j}`, `j = 1..=levels`;
/// the remaining piece is replaced by a geometric extrapolation of the last
/// two dyadic contributions when they decrease, and dropped otherwise.
pub fn integrate_graded_to_end(
    a: f64,
    b: f64,
    levels: usize,
    order: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let len = b - a;
    if len <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut prev = f64::NAN;
    let mut last = f64::NAN;
    for j in 0..levels {
        let lo = b - len * 0.5f64.powi(j as i32);
        let hi = b - len * 0.5f64.powi(j as i32 + 1);
        let piece = integrate_interval(lo, hi, order, &mut f);
        total += piece;
        prev = last;
        last = piece;
    }
    if prev.is_finite() && last.is_finite() && prev > 0.0 && last > 0.0 && last < prev {
        let r = last / prev;
        total += last * r / (1.0 - r);
    }
    total
}


/// Nodes `(S, w)` for `E f(S)` with `ln S = ln s + shift + vol Y`, `Y`
/// standard normal, refined around the price `kink` down to `fine` in `Y`
/// units. A single node when `vol = 0`.
pub fn lognormal_nodes(
    s: f64,
    vol: f64,
    shift: f64,
    kink: Option<f64>,
    fine: f64,
    panel_order: usize,
) -> Vec<(f64, f64)> {
    if vol <= 0.0 {
        return vec![(s * shift.exp(), 1.0)];
    }
    let breaks: Vec<(f64, f64)> = kink
        .map(|k| ((k / s).ln() - shift) / vol)
        .filter(|y| y.abs() < 11.0)
        .map(|y| (y, fine))
        .into_iter()
        .collect();
    let rule = GaussianRule::graded(-11.0, 11.0, &breaks, panel_order);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&y, &w)| (s * (shift + vol * y).exp(), w))
        .collect()
}

/// Newton-refines a node of the `n`-point rule for `φ` (a root of the
/// orthonormal Hermite polynomial `H_n`) and recomputes its Christoffel
/// weight `1 / Σ_{k<n} H_k(x)²`. The eigenvalue-based nodes alone are only
/// good to about 1e-10 at a few hundred points.
fn polish_hermite_node(n: usize, x0: f64, w0: f64) -> (f64, f64) {
    // log-scaled recurrence: returns (H_n / H_{n-1}, ln Σ_{k<n} H_k²)
    let eval = |x: f64| -> (f64, f64) {
        let (mut prev, mut cur) = (0.0f64, 1.0f64);
        let mut log_scale = 0.0f64;
        let mut sum = 0.0f64;
        for k in 0..n {
            sum += cur * cur;
            let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
            prev = cur;
            cur = next;
            let m = cur.abs().max(prev.abs());
            if m > 1e100 {
                prev /= m;
                cur /= m;
                sum /= m * m;
                log_scale += m.ln();
            }
        }
        (cur / prev, sum.ln() + 2.0 * log_scale)
    };
    let mut x = x0;
    for _ in 0..4 {
        let (ratio, _) = eval(x);
        // H_n' = sqrt(n) H_{n-1}
        let dx = ratio / (n as f64).sqrt();
        if !dx.is_finite() {
            return (x0, w0);
        }
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    let (_, log_sum) = eval(x);
    let w = (-log_sum).exp();
    if w.is_finite() {
        (x, w)
    } else {
        (x0, w0)
    }
}
