//! Monte Carlo pricer for fixed- and floating-strike Asian options.
//!
//! Every path draws from its own ChaCha8 stream keyed by `(seed, path)`, and
//! all reductions run sequentially over the ordered per-path results, so the
//! output is bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::blackscholes::{forward_price, implied_vol, OptionQuote};
use crate::error::{require_positive, Error, Result};
use crate::model::{Curve, MarketState, ModelKind, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssetScheme {
    /// Multiplicative Euler step, absorbed at zero.
    Euler,
    /// Exponential step with the Itô correction.
    LogEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceScheme {
    /// Exact log-normal step; needs constant `mu` and `sigma`.
    ExactGbm,
    /// Euler with the positive part of `V` inside drift and diffusion.
    FullTruncation,
    /// Plain Euler floored at zero.
    GenericEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    LeftRectangle,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub asset_scheme: AssetScheme,
    pub variance_scheme: VarianceScheme,
    pub averaging: Averaging,
    pub antithetic: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl McConfig {
    /// 100k paths, 200 steps, trapezoid averaging, Euler asset steps and the
    /// natural variance scheme for the model kind.
    pub fn default_for(model: &ModelSpec, seed: u64) -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 200,
            seed,
            asset_scheme: AssetScheme::Euler,
            variance_scheme: default_variance_scheme(model),
            averaging: Averaging::Trapezoid,
            antithetic: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_paths must be at least 2, got {}",
                self.n_paths
            )));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }
}

pub fn default_variance_scheme(model: &ModelSpec) -> VarianceScheme {
    match model.kind {
        ModelKind::Heston => VarianceScheme::FullTruncation,
        _ if constant_variance_coefficients(model).is_some() => VarianceScheme::ExactGbm,
        _ => VarianceScheme::GenericEuler,
    }
}

fn constant_variance_coefficients(model: &ModelSpec) -> Option<(f64, f64)> {
    Some((model.mu.as_constant()?, model.sigma.as_constant()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub implied_vol: Option<f64>,
    pub n_effective: usize,
}

/// Per-path sample averages and terminal values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub average: Vec<f64>,
    pub terminal: Vec<f64>,
    pub antithetic: bool,
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = neumaier_sum(samples.iter().copied()) / n;
    let var = neumaier_sum(samples.iter().map(|s| (s - mean) * (s - mean))) / (n - 1.0);
    (mean, (var.max(0.0) / n).sqrt())
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.average.len()
    }

    pub fn is_empty(&self) -> bool {
        self.average.is_empty()
    }

    /// Discounted mean and standard error of a per-path payoff. Antithetic
    /// pairs are averaged first and count as one effective sample.
    pub fn estimate(&self, discount: f64, payoff: impl Fn(f64, f64) -> f64) -> (f64, f64, usize) {
        let raw: Vec<f64> = self
            .average
            .iter()
            .zip(&self.terminal)
            .map(|(&a, &s)| payoff(a, s))
            .collect();
        let grouped: Vec<f64> = if self.antithetic {
            raw.chunks(2)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        } else {
            raw
        };
        let (mean, se) = mean_and_stderr(&grouped);
        (discount * mean, discount * se, grouped.len())
    }

    pub fn mean_average(&self) -> f64 {
        neumaier_sum(self.average.iter().copied()) / self.len() as f64
    }

    /// Debug dump with columns `path_id,A,S_T`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,A,S_T\n");
        for (i, (a, s)) in self.average.iter().zip(&self.terminal).enumerate() {
            out.push_str(&format!("{i},{a:e},{s:e}\n"));
        }
        out
    }
}

/// Gaussian increments for one path: `(dZ, dW)` per step in units of `sqrt(dt)`.
struct PathNoise {
    rng: ChaCha8Rng,
    sign: f64,
}

impl PathNoise {
    fn new(seed: u64, path: usize, antithetic: bool) -> Self {
        let (stream, sign) = if antithetic {
            ((path / 2) as u64, if path % 2 == 0 { 1.0 } else { -1.0 })
        } else {
            (path as u64, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, sign }
    }

    fn next(&mut self) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let w: f64 = StandardNormal.sample(&mut self.rng);
        (self.sign * z, self.sign * w)
    }
}

struct Stepper<'a> {
    eta: &'a Curve,
    sigma: &'a Curve,
    mu: &'a Curve,
    rho: f64,
    rho_bar: f64,
    drift: f64,
    dt: f64,
    sqrt_dt: f64,
    gbm: (f64, f64),
    config: &'a McConfig,
}

impl Stepper<'_> {
    fn run(&self, s0: f64, v0: f64, mut noise: PathNoise) -> (f64, f64) {
        let mut s = s0;
        let mut v = v0;
        let mut sum = match self.config.averaging {
            Averaging::Trapezoid => 0.5 * s0,
            Averaging::LeftRectangle => s0,
        };
        let n = self.config.n_steps;
        for i in 0..n {
            let (z, w) = noise.next();
            let dz = self.sqrt_dt * z;
            let db = self.rho * dz + self.rho_bar * self.sqrt_dt * w;
            let vp = v.max(0.0);
            s = match self.config.asset_scheme {
                AssetScheme::Euler => {
                    if s > 0.0 {
                        let vol = self.eta.value(s) * vp.sqrt();
                        (s * (1.0 + self.drift * self.dt + vol * db)).max(0.0)
                    } else {
                        0.0
                    }
                }
                AssetScheme::LogEuler => {
                    let vol = self.eta.value(s) * vp.sqrt();
                    s * ((self.drift - 0.5 * vol * vol) * self.dt + vol * db).exp()
                }
            };
            v = match self.config.variance_scheme {
                VarianceScheme::ExactGbm => {
                    let (m, sg) = self.gbm;
                    v * ((m - 0.5 * sg * sg) * self.dt + sg * dz).exp()
                }
                VarianceScheme::FullTruncation => {
                    v + self.mu.times_level(vp) * self.dt + self.sigma.times_level(vp) * dz
                }
                VarianceScheme::GenericEuler => {
                    (v + self.mu.times_level(v) * self.dt + self.sigma.times_level(v) * dz)
                        .max(0.0)
                }
            };
            let weight = match self.config.averaging {
                Averaging::Trapezoid if i + 1 == n => 0.5,
                Averaging::LeftRectangle if i + 1 == n => 0.0,
                _ => 1.0,
            };
            sum += weight * s;
        }
        (sum / n as f64, s)
    }
}

/// Simulate `config.n_paths` paths and return their averages and terminal values.
pub fn simulate_batch(
    model: &ModelSpec,
    market: &MarketState,
    maturity: f64,
    config: &McConfig,
) -> Result<PathSample> {
    config.validate()?;
    require_positive("maturity", maturity)?;
    let gbm = match config.variance_scheme {
        VarianceScheme::ExactGbm => constant_variance_coefficients(model).ok_or_else(|| {
            Error::InvalidConfig(
                "exact-gbm variance scheme needs constant mu and sigma".into(),
            )
        })?,
        _ => (0.0, 0.0),
    };
    let dt = maturity / config.n_steps as f64;
    let stepper = Stepper {
        eta: &model.eta,
        sigma: &model.sigma,
        mu: &model.mu,
        rho: model.rho,
        rho_bar: (1.0 - model.rho * model.rho).max(0.0).sqrt(),
        drift: market.r - market.q,
        dt,
        sqrt_dt: dt.sqrt(),
        gbm,
        config,
    };
    let simulate = || -> Vec<(f64, f64)> {
        (0..config.n_paths)
            .into_par_iter()
            .map(|p| {
                stepper.run(
                    market.s0,
                    market.v0,
                    PathNoise::new(config.seed, p, config.antithetic),
                )
            })
            .collect()
    };
    let results = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(simulate),
        None => simulate(),
    };
    let (average, terminal) = results.into_iter().unzip();
    Ok(PathSample {
        average,
        terminal,
        antithetic: config.antithetic,
    })
}

/// Fixed-strike estimate from an existing sample; `implied_vol` is filled
/// when the price lies strictly inside the Black-Scholes bounds.
pub fn estimate_fixed(
    sample: &PathSample,
    market: &MarketState,
    strike: f64,
    maturity: f64,
    is_call: bool,
) -> Result<McEstimate> {
    require_positive("strike", strike)?;
    require_positive("maturity", maturity)?;
    let discount = (-market.r * maturity).exp();
    let (price, std_error, n_effective) = sample.estimate(discount, |a, _| {
        if is_call {
            (a - strike).max(0.0)
        } else {
            (strike - a).max(0.0)
        }
    });
    let forward = forward_price(market, maturity)?;
    let quote = OptionQuote {
        strike,
        maturity,
        is_call,
        price,
        implied_vol: None,
    };
    let implied_vol = if price > 0.0 {
        implied_vol(&quote, forward, market.r).ok()
    } else {
        None
    };
    Ok(McEstimate {
        price,
        std_error,
        implied_vol,
        n_effective,
    })
}

pub fn estimate_floating(
    sample: &PathSample,
    market: &MarketState,
    kappa: f64,
    maturity: f64,
    is_call: bool,
) -> Result<McEstimate> {
    require_positive("kappa", kappa)?;
    require_positive("maturity", maturity)?;
    let discount = (-market.r * maturity).exp();
    let (price, std_error, n_effective) = sample.estimate(discount, |a, s| {
        if is_call {
            (kappa * s - a).max(0.0)
        } else {
            (a - kappa * s).max(0.0)
        }
    });
    Ok(McEstimate {
        price,
        std_error,
        implied_vol: None,
        n_effective,
    })
}

pub fn price_fixed(
    model: &ModelSpec,
    market: &MarketState,
    strike: f64,
    maturity: f64,
    is_call: bool,
    config: &McConfig,
) -> Result<McEstimate> {
    require_positive("strike", strike)?;
    let sample = simulate_batch(model, market, maturity, config)?;
    estimate_fixed(&sample, market, strike, maturity, is_call)
}

pub fn price_floating(
    model: &ModelSpec,
    market: &MarketState,
    kappa: f64,
    maturity: f64,
    is_call: bool,
    config: &McConfig,
) -> Result<McEstimate> {
    require_positive("kappa", kappa)?;
    let sample = simulate_batch(model, market, maturity, config)?;
    estimate_floating(&sample, market, kappa, maturity, is_call)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_heston, make_local_vol, make_sabr};

    fn small(model: &ModelSpec, seed: u64) -> McConfig {
        McConfig {
            n_paths: 4000,
            n_steps: 50,
            ..McConfig::default_for(model, seed)
        }
    }

    #[test]
    fn defaults_per_model() {
        let sabr = make_sabr(2.0).unwrap();
        let c = McConfig::default_for(&sabr, 1);
        assert_eq!((c.n_paths, c.n_steps), (100_000, 200));
        assert_eq!(c.variance_scheme, VarianceScheme::ExactGbm);
        assert_eq!(c.asset_scheme, AssetScheme::Euler);
        assert_eq!(c.averaging, Averaging::Trapezoid);
        assert!(!c.antithetic);
        let heston = make_heston(2.0, 0.09, 0.2).unwrap();
        assert_eq!(
            McConfig::default_for(&heston, 1).variance_scheme,
            VarianceScheme::FullTruncation
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let m = make_sabr(2.0).unwrap();
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let c = McConfig {
            n_paths: 1,
            ..small(&m, 1)
        };
        assert!(matches!(simulate_batch(&m, &market, 0.1, &c), Err(Error::InvalidConfig(_))));
        let heston = make_heston(2.0, 0.09, 0.2).unwrap();
        let c = McConfig {
            variance_scheme: VarianceScheme::ExactGbm,
            ..small(&heston, 1)
        };
        assert!(simulate_batch(&heston, &market, 0.1, &c).is_err());
    }

    #[test]
    fn zero_vol_is_deterministic() {
        let m = make_local_vol(Curve::Constant(0.0));
        let flat = MarketState::new(1.3, 0.1, 0.0, 0.0).unwrap();
        let c = small(&m, 9);
        let sample = simulate_batch(&m, &flat, 0.5, &c).unwrap();
        assert!(sample.average.iter().all(|&a| (a - 1.3).abs() < 1e-15));
        let est = estimate_fixed(&sample, &flat, 1.2, 0.5, true).unwrap();
        assert!((est.price - 0.1).abs() < 1e-14);
        assert_eq!(est.std_error, 0.0);

        let drift = MarketState::new(1.0, 0.1, 0.05, 0.01).unwrap();
        let exact = forward_price(&drift, 1.0).unwrap();
        let c = McConfig {
            asset_scheme: AssetScheme::LogEuler,
            ..c
        };
        let sample = simulate_batch(&m, &drift, 1.0, &c).unwrap();
        assert!((sample.average[0] - exact).abs() < 1e-6);

        let sample = simulate_batch(&m, &flat, 1.0, &c).unwrap();
        let fl = estimate_floating(&sample, &flat, 1.2, 1.0, true).unwrap();
        assert!((fl.price - 0.2 * 1.3).abs() < 1e-14);
    }

    #[test]
    fn gbm_average_is_martingale() {
        let m = make_local_vol(Curve::Constant(1.0));
        let market = MarketState::new(1.0, 0.04, 0.0, 0.0).unwrap();
        let c = McConfig {
            asset_scheme: AssetScheme::LogEuler,
            ..small(&m, 3)
        };
        let sample = simulate_batch(&m, &market, 1.0, &c).unwrap();
        let (mean, se, _) = sample.estimate(1.0, |a, _| a);
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn increments_have_target_correlation() {
        let rho = -0.7_f64;
        let rho_bar = (1.0 - rho * rho).sqrt();
        let (mut sbz, mut sbb, mut szz) = (0.0, 0.0, 0.0);
        let (n_paths, n_steps) = (500, 200);
        for p in 0..n_paths {
            let mut noise = PathNoise::new(5, p, false);
            for _ in 0..n_steps {
                let (z, w) = noise.next();
                let b = rho * z + rho_bar * w;
                sbz += b * z;
                sbb += b * b;
                szz += z * z;
            }
        }
        let corr = sbz / (sbb * szz).sqrt();
        let n = (n_paths * n_steps) as f64;
        assert!((corr - rho).abs() < 3.0 / n.sqrt(), "{corr}");
    }

    #[test]
    fn deterministic_across_threads() {
        let m = make_sabr(2.0).unwrap().with_rho(-0.7).unwrap();
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let base = small(&m, 42);
        let one = simulate_batch(&m, &market, 1.0 / 52.0, &McConfig { threads: Some(1), ..base.clone() }).unwrap();
        let four = simulate_batch(&m, &market, 1.0 / 52.0, &McConfig { threads: Some(4), ..base.clone() }).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.to_csv(), four.to_csv());
        let other = simulate_batch(&m, &market, 1.0 / 52.0, &McConfig { seed: 43, ..base }).unwrap();
        assert_ne!(one, other);
    }

    #[test]
    fn parity_of_common_samples() {
        let m = make_heston(2.0, 0.09, 0.2).unwrap().with_rho(0.7).unwrap();
        let market = MarketState::new(1.0, 0.04, 0.03, 0.01).unwrap();
        let t = 1.0 / 12.0;
        let sample = simulate_batch(&m, &market, t, &small(&m, 11)).unwrap();
        for k in [0.9, 1.0, 1.1] {
            let c = estimate_fixed(&sample, &market, k, t, true).unwrap();
            let p = estimate_fixed(&sample, &market, k, t, false).unwrap();
            let gap = c.price - p.price - (-market.r * t).exp() * (sample.mean_average() - k);
            assert!(gap.abs() < 1e-12);
        }
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let m = make_local_vol(Curve::Constant(1.0));
        let market = MarketState::new(1.0, 0.04, 0.0, 0.0).unwrap();
        let c = McConfig {
            antithetic: true,
            asset_scheme: AssetScheme::LogEuler,
            n_steps: 1,
            ..small(&m, 8)
        };
        let sample = simulate_batch(&m, &market, 1.0, &c).unwrap();
        // one log-normal step: ln S_T of the pair is symmetric about -v/2
        let l0 = sample.terminal[0].ln() + 0.02;
        let l1 = sample.terminal[1].ln() + 0.02;
        assert!((l0 + l1).abs() < 1e-12);
        let est = estimate_fixed(&sample, &market, 1.0, 1.0, true).unwrap();
        assert_eq!(est.n_effective, 2000);
    }

    #[test]
    fn deep_otm_has_no_implied_vol() {
        let m = make_sabr(2.0).unwrap();
        let market = MarketState::new(1.0, 0.1, 0.0, 0.0).unwrap();
        let est = price_fixed(&m, &market, 10.0, 1.0 / 52.0, true, &small(&m, 1)).unwrap();
        assert_eq!(est.price, 0.0);
        assert_eq!(est.implied_vol, None);
    }
}
