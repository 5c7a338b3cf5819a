//! European payoffs and their prices and Greeks under the zero-drift GBM.
//!
//! Calls, puts, binaries and affine payoffs have closed forms. Power payoffs
//! `(s - K)_+^θ` are integrated with a composite Gauss–Legendre rule split
//! at the strike; chaos payoffs `g(W_T)` are polynomials in the Gaussian
//! variable and use Gauss–Hermite, which is exact for them. For both, the
//! Greeks differentiate the lognormal kernel rather than the payoff.

use serde::{Deserialize, Serialize};

use crate::chaos::{hermite_series, ChaosExpansion};
use crate::error::{ensure_finite, Error, Result};
use crate::model::MarketModel;
use crate::normal;
use crate::quadrature::GaussianRule;

/// Floor on `T - t` inside kernel evaluations.
pub const TAU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    /// `1_{[K, ∞)}(s)`, closed at the strike.
    Binary { strike: f64 },
    /// `(s - K)_+^θ` with `0 < θ < 1`.
    PowerHolder { strike: f64, exponent: f64 },
    Affine { c0: f64, c1: f64 },
    Chaos(ChaosPayoff),
    Scaled { factor: f64, inner: Box<Payoff> },
}

/// `g(W_T / sqrt(T))` for a Hermite series `g`, read as a function of `S_T`
/// through the zero-drift log transform of the anchoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosPayoff {
    pub alpha: Vec<f64>,
    pub s0: f64,
    pub sigma: f64,
    pub maturity: f64,
}

impl ChaosPayoff {
    /// Standardized Brownian value `W_T / sqrt(T)` for terminal price `s`.
    fn gaussian_coordinate(&self, s: f64) -> f64 {
        ((s / self.s0).ln() + 0.5 * self.sigma * self.sigma * self.maturity)
            / (self.sigma * self.maturity.sqrt())
    }

    fn eval_w(&self, w: f64) -> f64 {
        hermite_series(&self.alpha, w)
    }
}

/// Quadrature settings for payoffs without a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingConfig {
    /// Gauss–Hermite nodes for chaos payoffs (raised automatically to the
    /// polynomial degree when needed).
    pub hermite_order: usize,
    /// Gauss–Legendre nodes per panel for kinked payoffs.
    pub panel_order: usize,
    /// Narrowest panel next to a kink, in standard-normal units.
    pub kink_resolution: f64,
    /// When set, every quadrature price is recomputed with doubled order and
    /// a difference above `tolerance` is reported as non-convergence.
    pub verify: bool,
    pub tolerance: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            hermite_order: 201,
            panel_order: 16,
            kink_resolution: 1e-7,
            verify: false,
            tolerance: 1e-8,
        }
    }
}

/// Price and spot derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Greeks {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl Greeks {
    /// `∂u/∂x` in log-price coordinates.
    pub fn log_gradient(&self, s: f64) -> f64 {
        s * self.delta
    }

    /// `∂²u/∂x²` in log-price coordinates.
    pub fn log_hessian(&self, s: f64) -> f64 {
        s * s * self.gamma + s * self.delta
    }
}

/// Conditional law summary of `h(S_T)` given `S_t = s`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConditionalMoments {
    pub greeks: Greeks,
    /// `Var(h(S_T) | S_t = s)`.
    pub variance: f64,
}

impl Payoff {
    pub fn call(strike: f64) -> Result<Self> {
        check_strike(strike)?;
        Ok(Payoff::Call { strike })
    }

    pub fn put(strike: f64) -> Result<Self> {
        check_strike(strike)?;
        Ok(Payoff::Put { strike })
    }

    pub fn binary(strike: f64) -> Result<Self> {
        check_strike(strike)?;
        Ok(Payoff::Binary { strike })
    }

    pub fn power_holder(strike: f64, exponent: f64) -> Result<Self> {
        check_strike(strike)?;
        ensure_finite("holder_theta", exponent)?;
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::invalid("holder_theta", "must lie in (0, 1)"));
        }
        Ok(Payoff::PowerHolder { strike, exponent })
    }

    pub fn affine(c0: f64, c1: f64) -> Result<Self> {
        ensure_finite("c0", c0)?;
        ensure_finite("c1", c1)?;
        Ok(Payoff::Affine { c0, c1 })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::affine(c, 0.0)
    }

    /// Chaos payoff anchored at `model`'s spot, volatility and maturity.
    pub fn chaos(expansion: &ChaosExpansion, model: &MarketModel) -> Result<Self> {
        if expansion.alpha.is_empty() {
            return Err(Error::invalid("alpha", "empty chaos expansion"));
        }
        if expansion.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("chaos coefficient".into()));
        }
        Ok(Payoff::Chaos(ChaosPayoff {
            alpha: expansion.alpha.clone(),
            s0: model.s0,
            sigma: model.sigma,
            maturity: model.maturity,
        }))
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        ensure_finite("factor", factor)?;
        Ok(Payoff::Scaled {
            factor,
            inner: Box::new(self),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Payoff::Call { .. } => "call",
            Payoff::Put { .. } => "put",
            Payoff::Binary { .. } => "binary",
            Payoff::PowerHolder { .. } => "power_holder",
            Payoff::Affine { .. } => "affine",
            Payoff::Chaos(_) => "chaos",
            Payoff::Scaled { inner, .. } => inner.kind_name(),
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match self {
            Payoff::Call { strike }
            | Payoff::Put { strike }
            | Payoff::Binary { strike }
            | Payoff::PowerHolder { strike, .. } => Some(*strike),
            Payoff::Scaled { inner, .. } => inner.strike(),
            _ => None,
        }
    }

    pub fn holder_exponent(&self) -> Option<f64> {
        match self {
            Payoff::PowerHolder { exponent, .. } => Some(*exponent),
            Payoff::Scaled { inner, .. } => inner.holder_exponent(),
            _ => None,
        }
    }

    /// Affine payoffs (constants included) are hedged perfectly.
    pub fn is_affine(&self) -> bool {
        match self {
            Payoff::Affine { .. } => true,
            Payoff::Scaled { inner, .. } => inner.is_affine(),
            _ => false,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        match self {
            Payoff::PowerHolder { .. } | Payoff::Chaos(_) => false,
            Payoff::Scaled { inner, .. } => inner.has_closed_form(),
            _ => true,
        }
    }

    /// `h(s)`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::invalid("s", format!("price must be > 0, got {s}")));
        }
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (s - strike).max(0.0),
            Payoff::Put { strike } => (strike - s).max(0.0),
            Payoff::Binary { strike } => {
                if s >= *strike {
                    1.0
                } else {
                    0.0
                }
            }
            Payoff::PowerHolder { strike, exponent } => {
                if s > *strike {
                    (s - strike).powf(*exponent)
                } else {
                    0.0
                }
            }
            Payoff::Affine { c0, c1 } => c0 + c1 * s,
            Payoff::Chaos(c) => c.eval_w(c.gaussian_coordinate(s)),
            Payoff::Scaled { factor, inner } => factor * inner.eval_unchecked(s),
        }
    }

    /// `H(t, s) = E_Q[h(S_T) | S_t = s]`.
    pub fn price(&self, model: &MarketModel, t: f64, s: f64) -> Result<f64> {
        self.price_with(model, t, s, &PricingConfig::default())
    }

    pub fn price_with(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> Result<f64> {
        check_point(model, t, s, true)?;
        if t >= model.maturity {
            return Ok(self.eval_unchecked(s));
        }
        Ok(self.greeks_checked(model, t, s, cfg)?.price)
    }

    /// `∂H/∂s`; rejects `t = T`.
    pub fn delta(&self, model: &MarketModel, t: f64, s: f64) -> Result<f64> {
        Ok(self.greeks(model, t, s)?.delta)
    }

    /// `∂²H/∂s²`; rejects `t = T`.
    pub fn gamma(&self, model: &MarketModel, t: f64, s: f64) -> Result<f64> {
        Ok(self.greeks(model, t, s)?.gamma)
    }

    pub fn greeks(&self, model: &MarketModel, t: f64, s: f64) -> Result<Greeks> {
        self.greeks_with(model, t, s, &PricingConfig::default())
    }

    pub fn greeks_with(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> Result<Greeks> {
        check_point(model, t, s, false)?;
        self.greeks_checked(model, t, s, cfg)
    }

    fn greeks_checked(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> Result<Greeks> {
        let g = self.greeks_unchecked(model, t, s, cfg);
        if cfg.verify && !self.has_closed_form() {
            let fine = PricingConfig {
                hermite_order: 2 * cfg.hermite_order,
                panel_order: 2 * cfg.panel_order,
                ..*cfg
            };
            let g2 = self.greeks_unchecked(model, t, s, &fine);
            let scale = 1.0 + g.price.abs();
            if (g2.price - g.price).abs() > cfg.tolerance * scale {
                return Err(Error::Convergence(format!(
                    "{} price at t={t}, s={s} moved by {:e} when doubling the order",
                    self.kind_name(),
                    (g2.price - g.price).abs()
                )));
            }
        }
        if !(g.price.is_finite() && g.delta.is_finite() && g.gamma.is_finite()) {
            return Err(Error::NonFinite(format!("Greeks of {} at t={t}, s={s}", self.kind_name())));
        }
        Ok(g)
    }

    /// Price, delta and gamma without argument validation (`t < T`).
    pub(crate) fn greeks_unchecked(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> Greeks {
        let tau = (model.maturity - t).max(TAU_FLOOR);
        if model.is_degenerate() {
            return self.degenerate_greeks(s);
        }
        let vol = model.sigma * tau.sqrt();
        match self {
            Payoff::Call { strike } => {
                let (d1, d2) = d1_d2(s, *strike, vol);
                Greeks {
                    price: s * normal::cdf(d1) - strike * normal::cdf(d2),
                    delta: normal::cdf(d1),
                    gamma: normal::pdf(d1) / (s * vol),
                }
            }
            Payoff::Put { strike } => {
                let (d1, d2) = d1_d2(s, *strike, vol);
                Greeks {
                    price: strike * normal::cdf(-d2) - s * normal::cdf(-d1),
                    delta: -normal::cdf(-d1),
                    gamma: normal::pdf(d1) / (s * vol),
                }
            }
            Payoff::Binary { strike } => {
                let (d1, d2) = d1_d2(s, *strike, vol);
                let pdf = normal::pdf(d2);
                Greeks {
                    price: normal::cdf(d2),
                    delta: pdf / (s * vol),
                    gamma: -pdf * d1 / (s * s * vol * vol),
                }
            }
            Payoff::Affine { c0, c1 } => Greeks {
                price: c0 + c1 * s,
                delta: *c1,
                gamma: 0.0,
            },
            Payoff::PowerHolder { .. } | Payoff::Chaos(_) => {
                self.quadrature_moments(model, t, s, cfg, false).greeks
            }
            Payoff::Scaled { factor, inner } => {
                let g = inner.greeks_unchecked(model, t, s, cfg);
                Greeks {
                    price: factor * g.price,
                    delta: factor * g.delta,
                    gamma: factor * g.gamma,
                }
            }
        }
    }

    /// Delta alone, skipping the price where a closed form allows it.
    pub(crate) fn delta_unchecked(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> f64 {
        if model.is_degenerate() {
            return self.degenerate_greeks(s).delta;
        }
        let vol = model.sigma * (model.maturity - t).max(TAU_FLOOR).sqrt();
        match self {
            Payoff::Call { strike } => normal::cdf(d1_d2(s, *strike, vol).0),
            Payoff::Put { strike } => -normal::cdf(-d1_d2(s, *strike, vol).0),
            Payoff::Binary { strike } => normal::pdf(d1_d2(s, *strike, vol).1) / (s * vol),
            Payoff::Affine { c1, .. } => *c1,
            Payoff::Scaled { factor, inner } => factor * inner.delta_unchecked(model, t, s, cfg),
            _ => self.greeks_unchecked(model, t, s, cfg).delta,
        }
    }

    fn degenerate_greeks(&self, s: f64) -> Greeks {
        let (price, delta) = match self {
            Payoff::Call { strike } => ((s - strike).max(0.0), if s > *strike { 1.0 } else { 0.0 }),
            Payoff::Put { strike } => ((strike - s).max(0.0), if s < *strike { -1.0 } else { 0.0 }),
            Payoff::Binary { .. } => (self.eval_unchecked(s), 0.0),
            Payoff::PowerHolder { strike, exponent } => {
                if s > *strike {
                    ((s - strike).powf(*exponent), exponent * (s - strike).powf(exponent - 1.0))
                } else {
                    (0.0, 0.0)
                }
            }
            Payoff::Affine { c0, c1 } => (c0 + c1 * s, *c1),
            Payoff::Chaos(_) => (self.eval_unchecked(s), f64::NAN),
            Payoff::Scaled { factor, inner } => {
                let g = inner.degenerate_greeks(s);
                (factor * g.price, factor * g.delta)
            }
        };
        Greeks {
            price,
            delta,
            gamma: 0.0,
        }
    }

    /// Price, Greeks and conditional variance of `h(S_T)` given `S_t = s`
    /// under the zero-drift law.
    pub fn conditional_moments(&self, model: &MarketModel, t: f64, s: f64, cfg: &PricingConfig) -> ConditionalMoments {
        let tau = (model.maturity - t).max(TAU_FLOOR);
        let vol = model.sigma * tau.sqrt();
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => {
                let greeks = self.greeks_unchecked(model, t, s, cfg);
                let (d1, d2) = d1_d2(s, *strike, vol);
                let sign = if matches!(self, Payoff::Call { .. }) { 1.0 } else { -1.0 };
                // E[(±(S_T - K))_+^2]
                let second = s * s * (vol * vol).exp() * normal::cdf(sign * (d1 + vol))
                    - 2.0 * strike * s * normal::cdf(sign * d1)
                    + strike * strike * normal::cdf(sign * d2);
                ConditionalMoments {
                    greeks,
                    variance: (second - greeks.price * greeks.price).max(0.0),
                }
            }
            Payoff::Binary { .. } => {
                let greeks = self.greeks_unchecked(model, t, s, cfg);
                let p = greeks.price;
                ConditionalMoments {
                    greeks,
                    variance: p * (1.0 - p),
                }
            }
            Payoff::Affine { c1, .. } => ConditionalMoments {
                greeks: self.greeks_unchecked(model, t, s, cfg),
                variance: c1 * c1 * s * s * (vol * vol).exp_m1(),
            },
            Payoff::PowerHolder { .. } | Payoff::Chaos(_) => self.quadrature_moments(model, t, s, cfg, true),
            Payoff::Scaled { factor, inner } => {
                let m = inner.conditional_moments(model, t, s, cfg);
                ConditionalMoments {
                    greeks: Greeks {
                        price: factor * m.greeks.price,
                        delta: factor * m.greeks.delta,
                        gamma: factor * m.greeks.gamma,
                    },
                    variance: factor * factor * m.variance,
                }
            }
        }
    }

    /// One quadrature pass over `Y` with `ln S_T = ln s - vol²/2 + vol Y`.
    /// Delta and gamma come from the kernel weights `Y / vol` and
    /// `(Y² - 1) / vol²` in log coordinates.
    fn quadrature_moments(
        &self,
        model: &MarketModel,
        t: f64,
        s: f64,
        cfg: &PricingConfig,
        with_variance: bool,
    ) -> ConditionalMoments {
        let tau = (model.maturity - t).max(TAU_FLOOR);
        let vol = model.sigma * tau.sqrt();
        let (m0, m1, m2, variance) = match self {
            Payoff::PowerHolder { strike, exponent } => {
                let kink = ((strike / s).ln() + 0.5 * vol * vol) / vol;
                let hi = 10.0 + 2.0 * vol;
                let start = kink.max(-10.0);
                let rule = GaussianRule::graded_from(start, hi, cfg.kink_resolution, cfg.panel_order);
                let (k, e) = (*strike, *exponent);
                // h vanishes below the kink; that mass only enters the variance
                kernel_moments(&rule, with_variance, normal::cdf(start), |y| {
                    let st = s * (vol * y - 0.5 * vol * vol).exp();
                    if st > k {
                        (st - k).powf(e)
                    } else {
                        0.0
                    }
                })
            }
            Payoff::Chaos(c) => {
                let order = cfg.hermite_order.max(c.alpha.len() + 2);
                let rule = GaussianRule::hermite(order);
                let scale = c.sigma * c.maturity.sqrt();
                let base = ((s / c.s0).ln() - 0.5 * vol * vol + 0.5 * c.sigma * c.sigma * c.maturity) / scale;
                let spread = vol / scale;
                kernel_moments(&rule, with_variance, 0.0, |y| c.eval_w(base + spread * y))
            }
            _ => unreachable!("closed-form payoff routed to quadrature"),
        };
        let ux = m1 / vol;
        let uxx = m2 / (vol * vol);
        ConditionalMoments {
            greeks: Greeks {
                price: m0,
                delta: ux / s,
                gamma: (uxx - ux) / (s * s),
            },
            variance,
        }
    }
}

/// Returns `(E h, E h Y, E h (Y² - 1), Var h)` under `rule`, where `h` is
/// zero on a region of probability `zero_mass` not covered by the rule.
fn kernel_moments(
    rule: &GaussianRule,
    with_variance: bool,
    zero_mass: f64,
    f: impl Fn(f64) -> f64,
) -> (f64, f64, f64, f64) {
    let values: Vec<f64> = rule.nodes.iter().map(|&y| f(y)).collect();
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for ((&y, &w), &h) in rule.nodes.iter().zip(&rule.weights).zip(&values) {
        let wh = w * h;
        m0 += wh;
        m1 += wh * y;
        m2 += wh * (y * y - 1.0);
    }
    let variance = if with_variance {
        rule.weights
            .iter()
            .zip(&values)
            .map(|(&w, &h)| w * (h - m0) * (h - m0))
            .sum::<f64>()
            + zero_mass * m0 * m0
    } else {
        0.0
    };
    (m0, m1, m2, variance)
}

fn d1_d2(s: f64, strike: f64, vol: f64) -> (f64, f64) {
    let d1 = ((s / strike).ln() + 0.5 * vol * vol) / vol;
    (d1, d1 - vol)
}

fn check_strike(strike: f64) -> Result<()> {
    ensure_finite("strike", strike)?;
    if strike <= 0.0 {
        return Err(Error::invalid("strike", "must be > 0"));
    }
    Ok(())
}

fn check_point(model: &MarketModel, t: f64, s: f64, allow_maturity: bool) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("s", format!("price must be finite and > 0, got {s}")));
    }
    if !(t >= 0.0) || t > model.maturity {
        return Err(Error::invalid("t", format!("time {t} outside [0, {}]", model.maturity)));
    }
    if !allow_maturity && t >= model.maturity {
        return Err(Error::invalid("t", "Greeks are undefined at maturity; stop strictly before T"));
    }
    Ok(())
}
