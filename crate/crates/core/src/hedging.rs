//! Discrete delta hedging: the tracking error
//! `C_t = H(t, S_t) - H(0, S_0) - Σ_i δ_{t_i} (S_{t_{i+1} ∧ t} - S_{t_i ∧ t})`
//! by Monte Carlo, and the L₂-regularity `ℰ(z, τ)` of `z_t = σ S_t ∂H/∂s`
//! by quadrature.
//!
//! Deltas always come from the zero-drift prices; paths may follow either
//! measure.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_grid, MarketModel, Measure};
use crate::payoffs::{Payoff, PricingConfig};
use crate::quadrature::{integrate_graded_to_end, integrate_interval, lognormal_nodes};
use crate::report::{fmt_f64, write_table};
use crate::rng::{CounterNormals, NormalSource, PathNormals};
use crate::timenets::TimeNet;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingErrorSample {
    pub payoff: Payoff,
    pub model: MarketModel,
    pub net: TimeNet,
    /// `C_T` per path.
    pub terminal_errors: Vec<f64>,
    /// Evaluation times of the process (empty for terminal-only samples).
    pub process_times: Vec<f64>,
    /// `C_t`, row-major `paths × process_times.len()`.
    pub process_values: Vec<f64>,
    pub seed: u64,
    pub measure: Measure,
}

impl TrackingErrorSample {
    pub fn paths(&self) -> usize {
        self.terminal_errors.len()
    }

    pub fn process_path(&self, i: usize) -> &[f64] {
        let k = self.process_times.len();
        &self.process_values[i * k..(i + 1) * k]
    }
}

/// Monte Carlo estimate of `||C_T||_{L2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2ErrorEstimate {
    pub n: usize,
    pub theta: f64,
    pub l2_error: f64,
    /// Standard error of `l2_error` (delta method on the square root).
    pub stderr: f64,
    /// `E C_T²` and its standard error.
    pub mean_square: f64,
    pub mean_square_stderr: f64,
    pub m: usize,
}

impl L2ErrorEstimate {
    pub fn from_errors(errors: &[f64], n: usize, theta: f64) -> Result<Self> {
        let m = errors.len();
        if m < 2 {
            return Err(Error::invalid("m", "need at least two paths for a standard error"));
        }
        let sq: Vec<f64> = errors.iter().map(|c| c * c).collect();
        let mean = sq.iter().sum::<f64>() / m as f64;
        let var = sq.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        let l2 = mean.sqrt();
        let stderr = if l2 > 0.0 { se / (2.0 * l2) } else { 0.0 };
        if !(l2.is_finite() && stderr.is_finite()) {
            return Err(Error::NonFinite("tracking error moments".into()));
        }
        Ok(Self {
            n,
            theta,
            l2_error: l2,
            stderr,
            mean_square: mean,
            mean_square_stderr: se,
            m,
        })
    }
}

/// Per-time tables of delta on a sinh-stretched log-price grid around the
/// strike, interpolated with cubic Hermite splines. Used for payoffs whose
/// delta needs a quadrature, which would otherwise dominate the hedging loop.
#[derive(Debug, Clone)]
struct DeltaTable {
    center: f64,
    scale: f64,
    u0: f64,
    du: f64,
    delta: Vec<f64>,
    /// `d delta / du`.
    slope: Vec<f64>,
}

const TABLE_STEP: f64 = 0.02;

impl DeltaTable {
    fn build(p: &Payoff, model: &MarketModel, t: f64, x_range: (f64, f64), cfg: &PricingConfig) -> Self {
        let vol = model.sigma * (model.maturity - t).sqrt();
        let center = p.strike().unwrap_or(model.s0).ln();
        let scale = vol.max(1e-6);
        let u0 = ((x_range.0 - center) / scale).asinh();
        let u1 = ((x_range.1 - center) / scale).asinh();
        let count = ((u1 - u0) / TABLE_STEP).ceil() as usize + 1;
        let du = (u1 - u0) / (count - 1) as f64;
        let (delta, slope) = (0..count)
            .map(|k| {
                let u = u0 + du * k as f64;
                let s = (center + scale * u.sinh()).exp();
                let g = p.greeks_unchecked(model, t, s, cfg);
                (g.delta, s * g.gamma * scale * u.cosh())
            })
            .unzip();
        Self {
            center,
            scale,
            u0,
            du,
            delta,
            slope,
        }
    }

    fn eval(&self, s: f64) -> Option<f64> {
        let u = ((s.ln() - self.center) / self.scale).asinh();
        let r = (u - self.u0) / self.du;
        if !(r >= 0.0) {
            return None;
        }
        let k = r as usize;
        if k + 1 >= self.delta.len() {
            return None;
        }
        let x = r - k as f64;
        let (y0, y1) = (self.delta[k], self.delta[k + 1]);
        let (m0, m1) = (self.slope[k] * self.du, self.slope[k + 1] * self.du);
        let x2 = x * x;
        let x3 = x2 * x;
        Some(
            (2.0 * x3 - 3.0 * x2 + 1.0) * y0
                + (x3 - 2.0 * x2 + x) * m0
                + (-2.0 * x3 + 3.0 * x2) * y1
                + (x3 - x2) * m1,
        )
    }
}

/// Delta at the rebalancing dates of one net.
struct Hedger<'a> {
    payoff: &'a Payoff,
    model: MarketModel,
    cfg: PricingConfig,
    /// One table per rebalancing date when the payoff lacks a closed form.
    tables: Option<Vec<DeltaTable>>,
}

impl<'a> Hedger<'a> {
    fn new(payoff: &'a Payoff, model: &MarketModel, rebalance: &[f64]) -> Self {
        let cfg = PricingConfig::default();
        let tables = if payoff.has_closed_form() || model.is_degenerate() {
            None
        } else {
            let spread = 10.0 * model.sigma * model.maturity.sqrt()
                + 0.5 * model.sigma * model.sigma * model.maturity
                + model.mu.abs() * model.maturity;
            let x = model.s0.ln();
            let range = (x - spread, x + spread);
            Some(
                rebalance
                    .par_iter()
                    .map(|&t| DeltaTable::build(payoff, model, t, range, &cfg))
                    .collect(),
            )
        };
        Self {
            payoff,
            model: *model,
            cfg,
            tables,
        }
    }

    fn delta(&self, i: usize, t: f64, s: f64) -> f64 {
        if let Some(tables) = &self.tables {
            if let Some(d) = tables[i].eval(s) {
                return d;
            }
        }
        self.payoff.delta_unchecked(&self.model, t, s, &self.cfg)
    }
}

fn check_net(model: &MarketModel, net: &TimeNet) -> Result<()> {
    let gap = (net.maturity() - model.maturity).abs();
    if gap > 1e-12 * model.maturity {
        return Err(Error::invalid(
            "net",
            format!("net ends at {} but the model matures at {}", net.maturity(), model.maturity),
        ));
    }
    Ok(())
}

/// `C_T` per path.
pub fn tracking_error_terminal(
    p: &Payoff,
    model: &MarketModel,
    net: &TimeNet,
    m: usize,
    seed: u64,
    measure: Measure,
) -> Result<TrackingErrorSample> {
    tracking_error_process(p, model, net, m, seed, &[], measure)
}

/// `C_T` per path plus `C_t` at `eval_times`. The simulation grid is the
/// union of the net and `eval_times`, with exact lognormal steps.
pub fn tracking_error_process(
    p: &Payoff,
    model: &MarketModel,
    net: &TimeNet,
    m: usize,
    seed: u64,
    eval_times: &[f64],
    measure: Measure,
) -> Result<TrackingErrorSample> {
    tracking_error_with(p, model, net, m, seed, eval_times, measure, &CounterNormals::new(seed))
}

/// As [`tracking_error_process`] with an explicit Gaussian source. Grid
/// interval `j` (ending at the `j`-th grid time) consumes draw `j` of the
/// path, as in [`crate::model::simulate_gbm`].
#[allow(clippy::too_many_arguments)]
pub fn tracking_error_with(
    p: &Payoff,
    model: &MarketModel,
    net: &TimeNet,
    m: usize,
    seed: u64,
    eval_times: &[f64],
    measure: Measure,
    normals: &dyn NormalSource,
) -> Result<TrackingErrorSample> {
    check_net(model, net)?;
    if m == 0 {
        return Err(Error::invalid("m", "path count must be >= 1"));
    }
    let evals = eval_times.to_vec();
    if evals.iter().any(|&t| !(t >= 0.0 && t < model.maturity)) {
        return Err(Error::invalid("eval_times", "must lie in [0, T)"));
    }
    if !evals.is_empty() {
        validate_grid(&evals, model.maturity)?;
    }

    // merged grid with flags
    let nodes = net.nodes();
    let mut grid: Vec<f64> = nodes.iter().chain(&evals).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rebalance_idx: Vec<Option<usize>> = grid
        .iter()
        .map(|t| nodes.binary_search_by(|x| x.total_cmp(t)).ok())
        .collect();
    let eval_idx: Vec<Option<usize>> = grid
        .iter()
        .map(|t| evals.binary_search_by(|x| x.total_cmp(t)).ok())
        .collect();

    let hedger = Hedger::new(p, model, &nodes[..nodes.len() - 1]);
    let cfg = PricingConfig::default();
    let h0 = p.greeks_with(model, 0.0, model.s0, &cfg)?.price;
    let drift = model.drift(measure);
    let k = evals.len();
    let last = grid.len() - 1;

    let run = |i: usize, row: &mut [f64]| -> f64 {
        let mut z: PathNormals<'_> = normals.path(i as u64);
        z.seek(1);
        let mut s = model.s0;
        let mut held = hedger.delta(0, 0.0, s);
        let mut acc = 0.0;
        if let Some(e) = eval_idx[0] {
            row[e] = 0.0;
        }
        for j in 1..=last {
            let s_new = model.step(s, grid[j] - grid[j - 1], z.next_normal(), drift);
            acc += held * (s_new - s);
            s = s_new;
            if let Some(e) = eval_idx[j] {
                let h = p.greeks_unchecked(model, grid[j], s, &cfg).price;
                row[e] = h - h0 - acc;
            }
            if j < last {
                if let Some(r) = rebalance_idx[j] {
                    held = hedger.delta(r, grid[j], s);
                }
            }
        }
        p.eval_unchecked(s) - h0 - acc
    };

    let mut process_values = vec![0.0; m * k];
    let terminal_errors: Vec<f64> = if k > 0 {
        process_values
            .par_chunks_mut(k)
            .enumerate()
            .map(|(i, row)| run(i, row))
            .collect()
    } else {
        (0..m).into_par_iter().map(|i| run(i, &mut [])).collect()
    };
    if terminal_errors.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("tracking error".into()));
    }
    Ok(TrackingErrorSample {
        payoff: p.clone(),
        model: *model,
        net: net.clone(),
        terminal_errors,
        process_times: evals,
        process_values,
        seed,
        measure,
    })
}

/// `||C_T||_{L2}` with its Monte Carlo standard error.
pub fn l2_tracking_error(
    p: &Payoff,
    model: &MarketModel,
    net: &TimeNet,
    m: usize,
    seed: u64,
    measure: Measure,
) -> Result<L2ErrorEstimate> {
    if m < 2 {
        return Err(Error::invalid("m", "need at least two paths for a standard error"));
    }
    let sample = tracking_error_terminal(p, model, net, m, seed, measure)?;
    L2ErrorEstimate::from_errors(&sample.terminal_errors, net.n(), net.theta())
}

/// Quadrature settings for the time and space integrals of `ℰ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZRegConfig {
    /// Gauss–Legendre nodes per time piece.
    pub time_order: usize,
    /// Dyadic pieces toward maturity on the last interval.
    pub end_levels: usize,
    /// Gauss–Legendre nodes per panel of the spatial rules.
    pub panel_order: usize,
}

impl Default for ZRegConfig {
    fn default() -> Self {
        Self {
            time_order: 8,
            end_levels: 40,
            panel_order: 10,
        }
    }
}

/// Resolution near the strike, in standard-normal units of a step of
/// variance `var_step`, for features of width `sqrt(var_feature)`.
fn kink_fine(var_feature: f64, var_step: f64) -> f64 {
    if var_step <= 0.0 {
        return 0.1;
    }
    (0.01 * (var_feature / var_step).sqrt()).clamp(1e-9, 0.1)
}

/// `∫` of `g` over every net interval, graded toward maturity on the last.
fn integrate_over_net(net: &TimeNet, cfg: &ZRegConfig, g: impl Fn(usize, f64) -> f64 + Sync) -> f64 {
    let nodes = net.nodes();
    let pieces: Vec<f64> = (1..nodes.len())
        .into_par_iter()
        .map(|i| {
            let (a, b) = (nodes[i - 1], nodes[i]);
            if i + 1 == nodes.len() {
                integrate_graded_to_end(a, b, cfg.end_levels, cfg.time_order, |t| g(i - 1, t))
            } else {
                integrate_interval(a, b, cfg.time_order, |t| g(i - 1, t))
            }
        })
        .collect();
    pieces.iter().sum()
}

/// `E G(S_a, S_t)` over the joint law of `(S_a, S_t)` with the given drift,
/// by an outer rule over `S_a` and an inner one over `S_t | S_a`.
fn nested_expectation(
    p: &Payoff,
    model: &MarketModel,
    drift: f64,
    a: f64,
    t: f64,
    cfg: &ZRegConfig,
    outer_value: impl Fn(f64) -> f64,
    g: impl Fn(f64, f64, f64) -> f64,
) -> f64 {
    let sig2 = model.sigma * model.sigma;
    let tau_a = model.maturity - a;
    let tau_t = (model.maturity - t).max(0.0);
    let outer = lognormal_nodes(
        model.s0,
        model.sigma * a.sqrt(),
        (drift - 0.5 * sig2) * a,
        p.strike(),
        kink_fine(tau_a, a),
        cfg.panel_order,
    );
    let dt = t - a;
    let mut total = 0.0;
    for (sa, wa) in outer {
        let va = outer_value(sa);
        let inner = lognormal_nodes(
            sa,
            model.sigma * dt.sqrt(),
            (drift - 0.5 * sig2) * dt,
            p.strike(),
            kink_fine(tau_t, dt),
            cfg.panel_order,
        );
        let mut acc = 0.0;
        for (st, wt) in inner {
            acc += wt * g(sa, va, st);
        }
        total += wa * acc;
    }
    total
}

/// `f(t) = σ² E[(S_t δ_t(S_t))²]` under the given drift.
fn z_second_moment(p: &Payoff, model: &MarketModel, drift: f64, t: f64, cfg: &ZRegConfig) -> f64 {
    let sig2 = model.sigma * model.sigma;
    let pc = PricingConfig::default();
    let nodes = lognormal_nodes(
        model.s0,
        model.sigma * t.sqrt(),
        (drift - 0.5 * sig2) * t,
        p.strike(),
        kink_fine(model.maturity - t, t),
        cfg.panel_order,
    );
    nodes
        .iter()
        .map(|&(s, w)| {
            let z = s * p.delta_unchecked(model, t, s, &pc);
            w * z * z
        })
        .sum::<f64>()
        * sig2
}

/// `ℰ(z, τ) = Σ_i ∫_{t_{i-1}}^{t_i} E|z_t - z_{t_{i-1}}|² dt` with
/// `z_t = σ S_t ∂H/∂s(t, S_t)`, expectations under `measure`.
///
/// Under the zero-drift measure `z` is a martingale, so the mean-square
/// increment is `f(t) - f(t_{i-1})` with `f(t) = E z_t²`; otherwise the
/// joint law of `(S_{t_{i-1}}, S_t)` is integrated directly.
pub fn z_regularity(p: &Payoff, model: &MarketModel, net: &TimeNet, measure: Measure, cfg: &ZRegConfig) -> Result<f64> {
    check_net(model, net)?;
    let drift = model.drift(measure);
    let nodes = net.nodes();
    let pc = PricingConfig::default();
    let value = if drift == 0.0 {
        let f_left: Vec<f64> = nodes[..nodes.len() - 1]
            .par_iter()
            .map(|&a| z_second_moment(p, model, 0.0, a, cfg))
            .collect();
        integrate_over_net(net, cfg, |i, t| z_second_moment(p, model, 0.0, t, cfg) - f_left[i])
    } else {
        let sigma = model.sigma;
        integrate_over_net(net, cfg, |i, t| {
            let a = nodes[i];
            nested_expectation(
                p,
                model,
                drift,
                a,
                t,
                cfg,
                |sa| sigma * sa * p.delta_unchecked(model, a, sa, &pc),
                |_, za, st| {
                    let d = sigma * st * p.delta_unchecked(model, t, st, &pc) - za;
                    d * d
                },
            )
        })
    };
    if !value.is_finite() {
        return Err(Error::Convergence("ℰ(z, τ) quadrature produced a non-finite value".into()));
    }
    Ok(value.max(0.0))
}

/// `E ∫_0^T σ² S_t² (δ_t(S_t) - δ_{φ(t)}(S_{φ(t)}))² dt` under the zero-drift
/// measure, which equals `E C_T²` by the Itô isometry.
pub fn isometry_integral(p: &Payoff, model: &MarketModel, net: &TimeNet, cfg: &ZRegConfig) -> Result<f64> {
    check_net(model, net)?;
    let nodes = net.nodes();
    let pc = PricingConfig::default();
    let sig2 = model.sigma * model.sigma;
    let value = integrate_over_net(net, cfg, |i, t| {
        let a = nodes[i];
        nested_expectation(
            p,
            model,
            0.0,
            a,
            t,
            cfg,
            |sa| p.delta_unchecked(model, a, sa, &pc),
            |_, da, st| {
                let d = p.delta_unchecked(model, t, st, &pc) - da;
                sig2 * st * st * d * d
            },
        )
    });
    if !value.is_finite() {
        return Err(Error::Convergence("isometry quadrature produced a non-finite value".into()));
    }
    Ok(value)
}

/// One CSV row per estimate.
pub fn write_l2_csv<W: Write>(
    out: W,
    preamble: &[String],
    p: &Payoff,
    seed: u64,
    measure: Measure,
    rows: &[L2ErrorEstimate],
) -> Result<()> {
    let strike = p.strike().map(fmt_f64).unwrap_or_default();
    let holder = p.holder_exponent().map(fmt_f64).unwrap_or_default();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                p.kind_name().to_string(),
                strike.clone(),
                holder.clone(),
                fmt_f64(r.theta),
                r.n.to_string(),
                r.m.to_string(),
                seed.to_string(),
                measure.as_str().to_string(),
                fmt_f64(r.l2_error),
                fmt_f64(r.stderr),
            ]
        })
        .collect();
    write_table(
        out,
        preamble,
        &["payoff_kind", "K", "theta_payoff", "net_theta", "n", "m", "seed", "measure", "l2_error", "stderr"],
        &body,
    )
}
