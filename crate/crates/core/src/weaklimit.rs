//! Weak-limit diagnostics for the rescaled tracking error with `T = 1`:
//! the clock `A = ∫ (1-t)^{1-θ}/(2θ) |S_t² ∂²H/∂s²|² dt`, the mixed normal
//! `sqrt(A) ξ`, the two-sample Kolmogorov–Smirnov distance, the operator
//! `(Aψ)(x) = x ψ'(x) - ψ(x)` and the fractional process `D^{S,θ}`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MarketModel, Measure};
use crate::payoffs::{Payoff, PricingConfig};
use crate::report::{fmt_f64, write_table};
use crate::rng::{derive_seed, CounterNormals, NormalSource};
use crate::smoothness::DyadicIntegral;

const XI_LABEL: u64 = 0x7869;

/// Grid geometric in `1 - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockConfig {
    pub steps_per_octave: usize,
    /// The grid reaches `1 - t = 2^{-octaves}`.
    pub octaves: usize,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self {
            steps_per_octave: 16,
            octaves: 24,
        }
    }
}

impl ClockConfig {
    /// Times `t_k = 1 - 2^{-k/steps}` for `k = 0..=steps·octaves`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.steps_per_octave * self.octaves;
        (0..=n)
            .map(|k| -(-(k as f64) / self.steps_per_octave as f64 * std::f64::consts::LN_2).exp_m1())
            .collect()
    }
}

/// Per-path clock values with the per-octave pieces they were built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockSample {
    pub theta: f64,
    pub config: ClockConfig,
    /// `A` per path, including the extrapolated tail below the grid.
    pub a_values: Vec<f64>,
    /// Paths whose last octave did not shrink (possible blow-up).
    pub flagged: Vec<bool>,
    /// `paths × octaves` contributions of each octave of `1 - t`.
    pub octave_pieces: Vec<f64>,
}

impl ClockSample {
    pub fn paths(&self) -> usize {
        self.a_values.len()
    }

    pub fn flagged_fraction(&self) -> f64 {
        self.flagged.iter().filter(|&&f| f).count() as f64 / self.paths().max(1) as f64
    }

    pub fn mean(&self) -> f64 {
        self.a_values.iter().sum::<f64>() / self.paths().max(1) as f64
    }

    /// Sample mean of `A` truncated at `1 - t = 2^{-depth}` (no tail).
    pub fn mean_at_depth(&self, depth: usize) -> f64 {
        let oct = self.config.octaves;
        let d = depth.min(oct);
        let total: f64 = self
            .octave_pieces
            .chunks(oct)
            .map(|row| row[..d].iter().sum::<f64>())
            .sum();
        total / self.paths().max(1) as f64
    }

    /// Sample mean of each octave's contribution.
    pub fn octave_means(&self) -> Vec<f64> {
        let oct = self.config.octaves;
        let mut out = vec![0.0; oct];
        for row in self.octave_pieces.chunks(oct) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        let m = self.paths().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= m);
        out
    }

    /// Whether `E A` looks finite: the octave means must decay geometrically.
    pub fn tail_verdict(&self) -> DyadicIntegral {
        DyadicIntegral::from_increments(self.octave_means())
    }

    /// CSV columns `path_id, A`.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .a_values
            .iter()
            .enumerate()
            .map(|(i, a)| vec![i.to_string(), fmt_f64(*a)])
            .collect();
        write_table(out, preamble, &["path_id", "A"], &rows)
    }
}

fn check_unit_model(model: &MarketModel) -> Result<()> {
    if (model.maturity - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("T", "weak-limit diagnostics are normalized to T = 1"));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid("theta", format!("must lie in (0, 1], got {theta}")));
    }
    Ok(())
}

/// Simulates the clock `A` on `m` zero-drift paths. Each octave of `1 - t` is
/// integrated with the trapezoid rule in `ln(1 - t)`; the part below the grid
/// is extrapolated geometrically from the last two octaves, and the path is
/// flagged when those do not decrease.
pub fn clock_a(
    p: &Payoff,
    model: &MarketModel,
    theta: f64,
    m: usize,
    seed: u64,
    cfg: &ClockConfig,
) -> Result<ClockSample> {
    check_unit_model(model)?;
    check_theta(theta)?;
    if m == 0 {
        return Err(Error::invalid("m", "path count must be >= 1"));
    }
    if cfg.octaves < 2 || cfg.steps_per_octave == 0 {
        return Err(Error::invalid("octaves", "need at least two octaves and one step per octave"));
    }
    let grid = cfg.grid();
    let normals = CounterNormals::new(seed);
    let pc = PricingConfig::default();
    let steps = cfg.steps_per_octave;
    let oct = cfg.octaves;
    let h = std::f64::consts::LN_2 / steps as f64;
    let weight = |t: f64| (1.0 - t).powf(1.0 - theta) / (2.0 * theta);

    let rows: Vec<(f64, bool, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut z = normals.path(i as u64);
            z.seek(1);
            let mut s = model.s0;
            // f(t) dt = f (1 - t) d ln(1 - t)
            let integrand = |t: f64, s: f64| {
                let g = p.greeks_unchecked(model, t, s, &pc).gamma;
                let x = s * s * g;
                weight(t) * x * x * (1.0 - t)
            };
            let mut prev = integrand(0.0, s);
            let mut pieces = vec![0.0; oct];
            for k in 1..grid.len() {
                s = model.step(s, grid[k] - grid[k - 1], z.next_normal(), 0.0);
                let cur = integrand(grid[k], s);
                pieces[(k - 1) / steps] += 0.5 * h * (prev + cur);
                prev = cur;
            }
            let (a, b) = (pieces[oct - 2], pieces[oct - 1]);
            let mut total: f64 = pieces.iter().sum();
            let mut flagged = false;
            if b > 0.0 {
                if b < a {
                    let r = b / a;
                    total += b * r / (1.0 - r);
                } else {
                    flagged = true;
                }
            }
            (total, flagged, pieces)
        })
        .collect();
    let mut a_values = Vec::with_capacity(m);
    let mut flagged = Vec::with_capacity(m);
    let mut octave_pieces = Vec::with_capacity(m * oct);
    for (a, f, pieces) in rows {
        if !a.is_finite() {
            return Err(Error::NonFinite("clock integral".into()));
        }
        a_values.push(a);
        flagged.push(f);
        octave_pieces.extend(pieces);
    }
    Ok(ClockSample {
        theta,
        config: *cfg,
        a_values,
        flagged,
        octave_pieces,
    })
}

/// `sqrt(A_i) ξ_i` with `ξ` from a stream disjoint from the one behind `A`.
pub fn mixed_normal_sample(clock: &ClockSample, seed: u64) -> Vec<f64> {
    let xi = CounterNormals::new(derive_seed(seed, XI_LABEL));
    clock
        .a_values
        .iter()
        .enumerate()
        .map(|(i, a)| a.sqrt() * xi.at(i as u64, 0))
        .collect()
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_x - F_y|`.
pub fn ks_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("sample", "both samples must be non-empty"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("KS sample contains NaN".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        // step past every copy of v in both samples
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `(AH)(t, s) = s ∂H/∂s(t, s) - H(t, s)`.
pub fn apply_a_operator(p: &Payoff, model: &MarketModel, t: f64, s: f64) -> Result<f64> {
    let g = p.greeks(model, t, s)?;
    Ok(s * g.delta - g.price)
}

fn a_unchecked(p: &Payoff, model: &MarketModel, t: f64, s: f64, pc: &PricingConfig) -> f64 {
    let g = p.greeks_unchecked(model, t, s, pc);
    s * g.delta - g.price
}

/// `D^{S,θ}_t` along one path given as `(times, values)` with `times[0] = 0`
/// and `t` among the times. The part `u ≥ t` of the defining integral is
/// `(AH(t, S_t) - AH(0, S_0)) (1 - t)^{(1-θ)/2}` in closed form; the part
/// `u < t` uses the trapezoid rule on the path grid.
pub fn fractional_d(
    p: &Payoff,
    model: &MarketModel,
    theta: f64,
    t: f64,
    times: &[f64],
    values: &[f64],
) -> Result<f64> {
    check_unit_model(model)?;
    check_theta(theta)?;
    if !(t >= 0.0 && t < 1.0) {
        return Err(Error::invalid("t", "must lie in [0, 1)"));
    }
    if times.len() != values.len() || times.is_empty() || times[0] != 0.0 {
        return Err(Error::invalid("path", "times must start at 0 and match the values"));
    }
    let Some(end) = times.iter().position(|&u| (u - t).abs() <= 1e-15) else {
        return Err(Error::invalid("path", format!("time {t} is not on the path grid")));
    };
    let pc = PricingConfig::default();
    let ah0 = a_unchecked(p, model, 0.0, values[0], &pc);
    let aht = a_unchecked(p, model, times[end], values[end], &pc) - ah0;
    if theta == 1.0 {
        return Ok(aht);
    }
    let kernel = |u: f64| (1.0 - u).powf(-(1.0 + theta) / 2.0);
    let mut integral = 0.0;
    let mut prev = 0.0;
    for k in 1..=end {
        let cur = kernel(times[k]) * (a_unchecked(p, model, times[k], values[k], &pc) - ah0);
        integral += 0.5 * (times[k] - times[k - 1]) * (prev + cur);
        prev = cur;
    }
    let v = 0.5 * (1.0 - theta) * integral + aht * (1.0 - t).powf(0.5 * (1.0 - theta));
    if !v.is_finite() {
        return Err(Error::NonFinite("D^{S,θ}".into()));
    }
    Ok(v)
}

/// Monte Carlo `||D^{S,θ}_t||_{L_p}` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpCurve {
    pub theta: f64,
    pub p_norm: f64,
    pub t_grid: Vec<f64>,
    pub norms: Vec<f64>,
    /// Largest relative spread `(max - min) / mean` of batch estimates.
    pub batch_spread: Vec<f64>,
    pub bounded: bool,
    pub heavy_tail_warning: bool,
}

pub const LP_BATCHES: usize = 10;

/// Paths are simulated on a grid geometric in `1 - u` (`steps` per octave)
/// merged with `t_grid`; `D^{S,θ}` is accumulated along each path. The
/// verdict reads the increments of `E|D_t|^p` between consecutive grid
/// times: bounded when they decay geometrically.
#[allow(clippy::too_many_arguments)]
pub fn lp_bound_curve(
    p: &Payoff,
    model: &MarketModel,
    theta: f64,
    p_norm: f64,
    t_grid: &[f64],
    m: usize,
    seed: u64,
    steps: usize,
) -> Result<LpCurve> {
    check_unit_model(model)?;
    check_theta(theta)?;
    if !(p_norm >= 2.0) || !p_norm.is_finite() {
        return Err(Error::invalid("p_norm", "must be a finite real >= 2"));
    }
    if m < LP_BATCHES {
        return Err(Error::invalid("m", format!("need at least {LP_BATCHES} paths for batching")));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t >= 0.0 && t < 1.0)) {
        return Err(Error::invalid("t_grid", "times must lie in [0, 1)"));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonIncreasingGrid { index: 1 });
    }
    let t_max = *t_grid.last().unwrap();
    let octaves = ((-(1.0 - t_max).log2()).ceil() as usize).max(1);
    let mut grid = ClockConfig {
        steps_per_octave: steps.max(1),
        octaves,
    }
    .grid();
    grid.retain(|&u| u < t_max);
    grid.extend_from_slice(t_grid);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let marks: Vec<Option<usize>> = grid
        .iter()
        .map(|u| t_grid.binary_search_by(|x| x.total_cmp(u)).ok())
        .collect();

    let normals = CounterNormals::new(seed);
    let pc = PricingConfig::default();
    let kernel = |u: f64| (1.0 - u).powf(-(1.0 + theta) / 2.0);
    let ah0 = a_unchecked(p, model, 0.0, model.s0, &pc);
    let k = t_grid.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; k];
            let mut z = normals.path(i as u64);
            z.seek(1);
            let mut s = model.s0;
            let mut integral = 0.0;
            let mut prev = 0.0;
            if let Some(j) = marks[0] {
                out[j] = 0.0;
            }
            for q in 1..grid.len() {
                let u = grid[q];
                s = model.step(s, u - grid[q - 1], z.next_normal(), 0.0);
                let diff = a_unchecked(p, model, u, s, &pc) - ah0;
                if let Some(j) = marks[q] {
                    out[j] = if theta == 1.0 {
                        diff
                    } else {
                        let cur = kernel(u) * diff;
                        let inner = integral + 0.5 * (u - grid[q - 1]) * (prev + cur);
                        0.5 * (1.0 - theta) * inner + diff * (1.0 - u).powf(0.5 * (1.0 - theta))
                    };
                }
                if theta < 1.0 {
                    let cur = kernel(u) * diff;
                    integral += 0.5 * (u - grid[q - 1]) * (prev + cur);
                    prev = cur;
                }
            }
            out
        })
        .collect();

    let batch = m / LP_BATCHES;
    let mut norms = Vec::with_capacity(k);
    let mut moments = Vec::with_capacity(k);
    let mut batch_spread = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = rows.iter().map(|r| r[j].abs().powf(p_norm)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("|D_t|^p at t = {}", t_grid[j])));
        }
        let mean = col.iter().sum::<f64>() / m as f64;
        let bm: Vec<f64> = col
            .chunks(batch)
            .take(LP_BATCHES)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let hi = bm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = bm.iter().copied().fold(f64::INFINITY, f64::min);
        batch_spread.push(if mean > 0.0 { (hi - lo) / mean } else { 0.0 });
        moments.push(mean);
        norms.push(mean.powf(1.0 / p_norm));
    }
    let increments: Vec<f64> = moments.windows(2).map(|w| w[1] - w[0]).collect();
    let bounded = if increments.len() >= 3 {
        DyadicIntegral::from_increments(increments).finite
    } else {
        true
    };
    let heavy_tail_warning = batch_spread.iter().any(|&s| s > 0.5);
    if heavy_tail_warning {
        log::warn!("batch estimates of E|D_t|^p disagree by more than 50%");
    }
    Ok(LpCurve {
        theta,
        p_norm,
        t_grid: t_grid.to_vec(),
        norms,
        batch_spread,
        bounded,
        heavy_tail_warning,
    })
}

impl LpCurve {
    /// CSV columns `t, lp_norm, batch_spread`.
    pub fn write_csv<W: Write>(&self, out: W, preamble: &[String]) -> Result<()> {
        let rows: Vec<Vec<String>> = (0..self.t_grid.len())
            .map(|i| vec![fmt_f64(self.t_grid[i]), fmt_f64(self.norms[i]), fmt_f64(self.batch_spread[i])])
            .collect();
        write_table(out, preamble, &["t", "lp_norm", "batch_spread"], &rows)
    }
}

/// Long-format `sample_source, value` table for distribution comparisons.
pub fn write_samples_csv<W: Write>(out: W, preamble: &[String], samples: &[(&str, &[f64])]) -> Result<()> {
    let rows: Vec<Vec<String>> = samples
        .iter()
        .flat_map(|(name, xs)| xs.iter().map(move |x| vec![name.to_string(), fmt_f64(*x)]))
        .collect();
    write_table(out, preamble, &["sample_source", "value"], &rows)
}

/// `sqrt(n) C_1` for the net `τ^{n,θ}` on zero-drift paths.
pub fn rescaled_terminal_errors(p: &Payoff, model: &MarketModel, n: usize, theta: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    check_unit_model(model)?;
    let net = crate::timenets::TimeNet::theta_net(n, theta, 1.0)?;
    let sample = crate::hedging::tracking_error_terminal(p, model, &net, m, seed, Measure::Martingale)?;
    let scale = (n as f64).sqrt();
    Ok(sample.terminal_errors.iter().map(|c| scale * c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_basics() {
        let x = [0.3, -1.0, 2.0, 0.3];
        assert_eq!(ks_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[3.5]).unwrap() - 0.75).abs() < 1e-15);
        assert!(ks_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn clock_grid_shape() {
        let g = ClockConfig { steps_per_octave: 4, octaves: 3 }.grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 0.0);
        assert!((g[4] - 0.5).abs() < 1e-15);
        assert!((g[12] - 0.875).abs() < 1e-15);
    }
}
