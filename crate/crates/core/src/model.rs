//! Market model and reproducible path simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::{CounterNormals, NormalSource};

/// Volatilities at or below this are handled as zero noise.
pub const DEGENERATE_SIGMA: f64 = 1e-200;

/// Geometric Brownian motion `dS = S (mu dt + sigma dW)`.
///
/// Prices and hedges always use the zero-drift dynamics; `mu` only enters
/// path simulation under [`Measure::Historical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub s0: f64,
    pub sigma: f64,
    pub mu: f64,
    pub maturity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Historical,
    Martingale,
}

impl Measure {
    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::Historical => "historical",
            Measure::Martingale => "martingale",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "historical" | "p" => Ok(Measure::Historical),
            "martingale" | "q" | "risk-neutral" => Ok(Measure::Martingale),
            other => Err(Error::invalid("measure", format!("unknown measure `{other}`"))),
        }
    }
}

impl MarketModel {
    pub fn new(s0: f64, sigma: f64, mu: f64, maturity: f64) -> Result<Self> {
        ensure_finite("s0", s0)?;
        ensure_finite("sigma", sigma)?;
        ensure_finite("mu", mu)?;
        ensure_finite("maturity", maturity)?;
        if s0 <= 0.0 {
            return Err(Error::invalid("s0", "must be > 0"));
        }
        if sigma <= 0.0 {
            return Err(Error::invalid("sigma", "must be > 0"));
        }
        if maturity <= 0.0 {
            return Err(Error::invalid("maturity", "must be > 0"));
        }
        Ok(Self {
            s0,
            sigma,
            mu,
            maturity,
        })
    }

    /// `S_t = exp(W_t - t/2)`, maturity 1.
    pub fn standard() -> Self {
        Self {
            s0: 1.0,
            sigma: 1.0,
            mu: 0.0,
            maturity: 1.0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma <= DEGENERATE_SIGMA
    }

    pub fn drift(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Historical => self.mu,
            Measure::Martingale => 0.0,
        }
    }

    /// One exact step of the log-price.
    #[inline]
    pub fn step(&self, s: f64, dt: f64, z: f64, drift: f64) -> f64 {
        if self.is_degenerate() {
            s * (drift * dt).exp()
        } else {
            s * (self.sigma * dt.sqrt() * z + (drift - 0.5 * self.sigma * self.sigma) * dt).exp()
        }
    }
}

/// Simulated prices, `values[path * times.len() + j]` is `S` at `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    pub measure: Measure,
}

impl PathBatch {
    pub fn path(&self, i: usize) -> &[f64] {
        let j = self.times.len();
        &self.values[i * j..(i + 1) * j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let cols = self.times.len();
        (0..self.paths).map(move |i| self.values[i * cols + j])
    }
}

pub(crate) fn validate_grid(times: &[f64], maturity: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("times", "grid is empty"));
    }
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("grid time at index {i}")));
        }
        if t < 0.0 || t > maturity * (1.0 + 1e-12) {
            return Err(Error::invalid("times", format!("time {t} outside [0, {maturity}]")));
        }
        if i > 0 && t <= times[i - 1] {
            return Err(Error::NonIncreasingGrid { index: i });
        }
    }
    Ok(())
}

/// Exact GBM paths on `times`. Step `j` consumes normal number `j` of the
/// path's stream, where step 0 runs from time 0 to `times[0]` (its draw is
/// skipped when `times[0] == 0`).
pub fn simulate_gbm(
    model: &MarketModel,
    times: &[f64],
    paths: usize,
    seed: u64,
    measure: Measure,
) -> Result<PathBatch> {
    simulate_gbm_with(model, times, paths, &CounterNormals::new(seed), seed, measure)
}

pub fn simulate_gbm_with(
    model: &MarketModel,
    times: &[f64],
    paths: usize,
    normals: &dyn NormalSource,
    seed: u64,
    measure: Measure,
) -> Result<PathBatch> {
    validate_grid(times, model.maturity)?;
    if paths == 0 {
        return Err(Error::invalid("m", "path count must be >= 1"));
    }
    let drift = model.drift(measure);
    let cols = times.len();
    let mut values = vec![0.0; paths * cols];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| {
            let mut z = normals.path(i as u64);
            let mut s = model.s0;
            let mut t_prev = 0.0;
            for (j, &t) in times.iter().enumerate() {
                let dt = t - t_prev;
                if model.is_degenerate() {
                    // exact closed form, no compounding of rounding errors
                    s = model.s0 * (drift * t).exp();
                    z.next_normal();
                } else if dt > 0.0 {
                    s = model.step(s, dt, z.next_normal(), drift);
                } else if j == 0 {
                    // t = 0: keep the draw index aligned with the interval index
                    z.next_normal();
                }
                row[j] = s;
                t_prev = t;
            }
        });
    Ok(PathBatch {
        times: times.to_vec(),
        values,
        paths,
        seed,
        measure,
    })
}

/// Euler scheme for `dX = b(t, X) dt + sigma(t, X) dW` on `times`, driven by
/// the same normals as [`simulate_gbm`] for the same seed. The returned
/// batch holds `X`, not a price.
pub fn simulate_euler<B, S>(
    b: B,
    sigma_fn: S,
    x0: f64,
    times: &[f64],
    paths: usize,
    normals: &dyn NormalSource,
    seed: u64,
) -> Result<PathBatch>
where
    B: Fn(f64, f64) -> f64 + Sync,
    S: Fn(f64, f64) -> f64 + Sync,
{
    ensure_finite("x0", x0)?;
    validate_grid(times, f64::INFINITY)?;
    if paths == 0 {
        return Err(Error::invalid("m", "path count must be >= 1"));
    }
    let cols = times.len();
    let rows: Vec<Result<Vec<f64>>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut z = normals.path(i as u64);
            let mut x = x0;
            let mut t_prev = 0.0;
            let mut row = Vec::with_capacity(cols);
            for (j, &t) in times.iter().enumerate() {
                let dt = t - t_prev;
                if dt > 0.0 {
                    let drift = b(t_prev, x);
                    let vol = sigma_fn(t_prev, x);
                    if !drift.is_finite() || !vol.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "coefficient at t={t_prev}, x={x} on path {i}"
                        )));
                    }
                    x += drift * dt + vol * dt.sqrt() * z.next_normal();
                } else if j == 0 {
                    z.next_normal();
                }
                row.push(x);
                t_prev = t;
            }
            Ok(row)
        })
        .collect();
    let mut values = Vec::with_capacity(paths * cols);
    for r in rows {
        values.extend(r?);
    }
    Ok(PathBatch {
        times: times.to_vec(),
        values,
        paths,
        seed,
        measure: Measure::Historical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::FixedNormals;

    fn uniform_grid(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    #[test]
    fn rejects_bad_grids_and_parameters() {
        let m = MarketModel::standard();
        assert!(matches!(
            simulate_gbm(&m, &[0.0, 0.5, 0.5], 2, 1, Measure::Martingale),
            Err(Error::NonIncreasingGrid { index: 2 })
        ));
        assert!(simulate_gbm(&m, &[0.0, 1.5], 2, 1, Measure::Martingale).is_err());
        assert!(simulate_gbm(&m, &[0.0, 1.0], 0, 1, Measure::Martingale).is_err());
        assert!(MarketModel::new(1.0, f64::NAN, 0.0, 1.0).is_err());
        assert!(MarketModel::new(-1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn degenerate_volatility_is_deterministic() {
        let m = MarketModel::new(2.0, 1e-300, 0.3, 1.0).unwrap();
        let grid = uniform_grid(4, 1.0);
        let b = simulate_gbm(&m, &grid, 3, 9, Measure::Historical).unwrap();
        for i in 0..3 {
            for (j, &t) in grid.iter().enumerate() {
                assert_eq!(b.path(i)[j], 2.0 * (0.3 * t).exp());
            }
        }
    }

    #[test]
    fn first_column_is_spot_and_prices_positive() {
        let m = MarketModel::new(3.0, 0.8, 0.1, 2.0).unwrap();
        let b = simulate_gbm(&m, &uniform_grid(8, 2.0), 50, 5, Measure::Historical).unwrap();
        assert!(b.column(0).all(|s| s == 3.0));
        assert!(b.values.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn paths_do_not_depend_on_batch_size() {
        let m = MarketModel::standard();
        let grid = uniform_grid(16, 1.0);
        let small = simulate_gbm(&m, &grid, 3, 11, Measure::Martingale).unwrap();
        let large = simulate_gbm(&m, &grid, 40, 11, Measure::Martingale).unwrap();
        for i in 0..3 {
            assert_eq!(small.path(i), large.path(i));
        }
    }

    #[test]
    fn measures_share_increments() {
        let m = MarketModel::new(1.0, 0.7, 0.25, 1.0).unwrap();
        let grid = uniform_grid(10, 1.0);
        let p = simulate_gbm(&m, &grid, 20, 3, Measure::Historical).unwrap();
        let q = simulate_gbm(&m, &grid, 20, 3, Measure::Martingale).unwrap();
        for i in 0..20 {
            for (j, &t) in grid.iter().enumerate() {
                let diff = p.path(i)[j].ln() - q.path(i)[j].ln();
                assert!((diff - 0.25 * t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn euler_zero_coefficients_stay_put() {
        let grid = uniform_grid(5, 1.0);
        let src = CounterNormals::new(1);
        let b = simulate_euler(|_, _| 0.0, |_, _| 0.0, 0.7, &grid, 4, &src, 1).unwrap();
        assert!(b.values.iter().all(|&x| x == 0.7));
    }

    #[test]
    fn euler_single_deterministic_step() {
        let src = FixedNormals(|_, _| 0.0);
        let b = simulate_euler(|_, x| 0.5 - x, |_, _| 2.0, 1.5, &[0.0, 0.25], 1, &src, 0).unwrap();
        assert_eq!(b.path(0)[1], 1.5 + (0.5 - 1.5) * 0.25);
    }

    #[test]
    fn euler_flags_non_finite_coefficients() {
        let src = CounterNormals::new(1);
        let r = simulate_euler(|_, _| f64::NAN, |_, _| 1.0, 0.0, &[0.0, 0.5], 2, &src, 1);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
