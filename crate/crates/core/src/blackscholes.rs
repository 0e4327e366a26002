//! Black-Scholes layer: Asian forward, call/put prices, implied volatility,
//! and pricing from an asymptotic smile.

use libm::erfc;

use crate::asymptotics::SmileQuadratic;
use crate::error::{invalid, require_positive, Error, Result};
use crate::model::MarketState;

const VOL_MIN: f64 = 1e-6;
const VOL_MAX: f64 = 5.0;
const VOL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionQuote {
    pub strike: f64,
    pub maturity: f64,
    pub is_call: bool,
    pub price: f64,
    pub implied_vol: Option<f64>,
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[(1/T) int_0^T S_t dt]`.
pub fn forward_price(market: &MarketState, maturity: f64) -> Result<f64> {
    require_positive("maturity", maturity)?;
    let bt = (market.r - market.q) * maturity;
    if bt.abs() < 1e-12 {
        Ok(market.s0)
    } else {
        Ok(market.s0 * bt.exp_m1() / bt)
    }
}

fn d1_d2(strike: f64, maturity: f64, vol: f64, forward: f64) -> (f64, f64) {
    let sd = vol * maturity.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    (d1, d1 - sd)
}

pub fn bs_call(strike: f64, maturity: f64, vol: f64, forward: f64, r: f64) -> f64 {
    let df = (-r * maturity).exp();
    if vol <= 0.0 {
        return df * (forward - strike).max(0.0);
    }
    let (d1, d2) = d1_d2(strike, maturity, vol, forward);
    df * (forward * norm_cdf(d1) - strike * norm_cdf(d2)).max(0.0)
}

pub fn bs_put(strike: f64, maturity: f64, vol: f64, forward: f64, r: f64) -> f64 {
    let df = (-r * maturity).exp();
    if vol <= 0.0 {
        return df * (strike - forward).max(0.0);
    }
    let (d1, d2) = d1_d2(strike, maturity, vol, forward);
    df * (strike * norm_cdf(-d2) - forward * norm_cdf(-d1)).max(0.0)
}

pub fn bs_price(is_call: bool, strike: f64, maturity: f64, vol: f64, forward: f64, r: f64) -> f64 {
    if is_call {
        bs_call(strike, maturity, vol, forward, r)
    } else {
        bs_put(strike, maturity, vol, forward, r)
    }
}

/// `dPrice/dVol`, identical for calls and puts.
pub fn bs_vega(strike: f64, maturity: f64, vol: f64, forward: f64, r: f64) -> f64 {
    if vol <= 0.0 {
        return 0.0;
    }
    let (d1, _) = d1_d2(strike, maturity, vol, forward);
    (-r * maturity).exp() * forward * norm_pdf(d1) * maturity.sqrt()
}

/// Invert the Black-Scholes formula on `[1e-6, 5]`: bisection to `1e-3` in
/// vol, then safeguarded Newton until the price matches to `1e-10`.
pub fn implied_vol(quote: &OptionQuote, forward: f64, r: f64) -> Result<f64> {
    require_positive("strike", quote.strike)?;
    require_positive("maturity", quote.maturity)?;
    require_positive("forward", forward)?;
    let OptionQuote {
        strike,
        maturity: t,
        is_call,
        price,
        ..
    } = *quote;
    let df = (-r * t).exp();
    let (lower, upper) = if is_call {
        (df * (forward - strike).max(0.0), df * forward)
    } else {
        (df * (strike - forward).max(0.0), df * strike)
    };
    if !price.is_finite() || price <= lower || price >= upper {
        return Err(Error::NoImpliedVol(format!(
            "price {price} outside open arbitrage bounds ({lower}, {upper})"
        )));
    }
    let f = |v: f64| bs_price(is_call, strike, t, v, forward, r) - price;
    let (mut lo, mut hi) = (VOL_MIN, VOL_MAX);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::NoImpliedVol(format!(
            "price {price} not bracketed by vols [{VOL_MIN}, {VOL_MAX}]"
        )));
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tol = 1e-10_f64.min(1e-12 * price);
    let mut v = 0.5 * (lo + hi);
    for _ in 0..100 {
        let err = f(v);
        if err.abs() <= tol {
            return Ok(v);
        }
        if err > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let vega = bs_vega(strike, t, v, forward, r);
        let step = if vega > 0.0 { v - err / vega } else { f64::NAN };
        v = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi {
            return Ok(v);
        }
    }
    Ok(v)
}

/// Price an Asian option by feeding the asymptotic smile into Black-Scholes.
pub fn asian_price(
    smile: &SmileQuadratic,
    market: &MarketState,
    strike: f64,
    maturity: f64,
    is_call: bool,
) -> Result<OptionQuote> {
    require_positive("strike", strike)?;
    require_positive("maturity", maturity)?;
    let x = (strike / market.s0).ln();
    let vol = smile.vol_at(x);
    if !vol.is_finite() {
        return Err(invalid("smile", format!("non-finite volatility at x = {x}")));
    }
    let vol = vol.max(VOL_FLOOR);
    let forward = forward_price(market, maturity)?;
    let price = bs_price(is_call, strike, maturity, vol, forward, market.r);
    Ok(OptionQuote {
        strike,
        maturity,
        is_call,
        price,
        implied_vol: Some(vol),
    })
}

/// Whether [`asian_price`] had to floor the quadratic at `strike`.
pub fn smile_is_floored(smile: &SmileQuadratic, market: &MarketState, strike: f64) -> bool {
    smile.vol_at((strike / market.s0).ln()) < VOL_FLOOR
}
