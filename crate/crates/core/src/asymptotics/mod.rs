//! Closed-form short-maturity series.
//!
//! Everything here is expressed in log-moneyness `x = ln(K/S0)`: the quartic
//! rate function, its inversion into an implied-volatility quadratic, and the
//! optimal-path expansion that produces both.

mod paths;

pub use paths::{optimal_paths, PathSeries};

use crate::error::{invalid, require_positive, Result};
use crate::model::{ExpansionInputs, MarketState};

/// Coefficients of `x^2`, `x^3`, `x^4` in the rate function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSeries {
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

/// `Sigma(x) = sigma_atm + skew * x + convexity * x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileQuadratic {
    pub sigma_atm: f64,
    pub skew: f64,
    pub convexity: f64,
}

impl SmileQuadratic {
    pub fn vol_at(&self, x: f64) -> f64 {
        self.sigma_atm + self.skew * x + self.convexity * x * x
    }
}

pub fn rate_series(inputs: &ExpansionInputs) -> Result<RateSeries> {
    inputs.validate()?;
    let &ExpansionInputs {
        eta0: e0,
        eta1: e1,
        eta2: e2,
        sigma0: s0,
        sigma1: s1,
        rho,
        v0,
        ..
    } = inputs;
    let sq = v0.sqrt();
    let i2 = 1.5 / (e0 * e0 * v0);
    let i3 = -3.0 * (3.0 * rho * s0 + (e0 + 6.0 * e1) * sq) / (10.0 * e0.powi(3) * v0 * sq);
    let beta0 = 109.0 * e0 * e0 + 2664.0 * e1 * e1 + 36.0 * e0 * (13.0 * e1 - 60.0 * e2);
    let beta1 = 18.0 * rho * (-30.0 * rho * s1 + (13.0 * e0 + 118.0 * e1) * sq);
    let beta2 = 9.0 * (-25.0 + 99.0 * rho * rho);
    let i4 = (beta0 * v0 + beta1 * s0 + beta2 * s0 * s0) / (1400.0 * e0.powi(4) * v0 * v0);
    Ok(RateSeries { i2, i3, i4 })
}

/// Truncated quartic, clamped at zero.
pub fn rate_at(series: &RateSeries, x: f64) -> f64 {
    let x2 = x * x;
    (x2 * (series.i2 + x * (series.i3 + x * series.i4))).max(0.0)
}

/// Invert `Sigma(x) = |x| / sqrt(2 I(x))` term by term.
pub fn smile_from_rate(series: &RateSeries) -> Result<SmileQuadratic> {
    let RateSeries { i2, i3, i4 } = *series;
    if !(i2 > 0.0) || !i2.is_finite() {
        return Err(invalid("i2", format!("must be positive, got {i2}")));
    }
    let sigma_atm = 1.0 / (2.0 * i2).sqrt();
    let r3 = i3 / i2;
    let r4 = i4 / i2;
    Ok(SmileQuadratic {
        sigma_atm,
        skew: -0.5 * sigma_atm * r3,
        convexity: sigma_atm * (0.375 * r3 * r3 - 0.5 * r4),
    })
}

pub fn smile_quadratic(inputs: &ExpansionInputs) -> Result<SmileQuadratic> {
    smile_from_rate(&rate_series(inputs)?)
}

pub fn sigma_from_rate(x: f64, i_value: f64) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return Err(invalid("x", "must be finite and nonzero; use sigma_atm at the money"));
    }
    require_positive("rate", i_value)?;
    Ok(x.abs() / (2.0 * i_value).sqrt())
}

/// Limit of `C(T)/sqrt(T)` (and `P(T)/sqrt(T)`) at `K = S0`.
pub fn atm_price_slope(market: &MarketState, inputs: &ExpansionInputs) -> f64 {
    market.s0 * inputs.eta0 * market.v0.sqrt() / (6.0 * std::f64::consts::PI).sqrt()
}
