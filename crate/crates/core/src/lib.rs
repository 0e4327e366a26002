//! Short-maturity pricing of Asian options under local-stochastic volatility.
//!
//! The asset follows `dS/S = (r-q) dt + eta(S) sqrt(V) dB` and its variance
//! `dV/V = mu(V) dt + sigma(V) dZ` with `d<B,Z> = rho dt`. The crate provides
//!
//! * [`model`]: the model family, market state and the series inputs
//!   `(eta0, eta1, eta2, sigma0, sigma1, sigma2)`;
//! * [`asymptotics`]: the rate function and implied-volatility series in
//!   log-moneyness, the optimal-path expansion and the ATM `sqrt(T)` law;
//! * [`blackscholes`]: forward price, Black-Scholes formulas, implied vol and
//!   the equivalent log-normal pricing of Asian options;
//! * [`mc`]: a reproducible, parallel Monte Carlo engine for fixed- and
//!   floating-strike Asian options;
//! * [`oracle`]: a direct numerical solver of the large-deviations
//!   variational problem used to validate the series.

pub mod asymptotics;
pub mod blackscholes;
pub mod error;
pub mod mc;
pub mod model;
pub mod oracle;
mod poly;

pub use error::{Error, Result};
pub use poly::Poly;
