//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # SABR, one week
//! model.kind = sabr
//! model.sigma = 2
//! model.rho = -0.7
//! market.s0 = 1
//! market.v0 = 0.1
//! request.x = -0.1, 0, 0.1
//! ```

use std::collections::BTreeMap;

use asian_lsv::mc::{AssetScheme, Averaging, McConfig, VarianceScheme};
use asian_lsv::model::{make_heston, make_local_vol, make_sabr, make_tanh, Curve, MarketState, ModelSpec};
use asian_lsv::oracle::OracleOptions;

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "model.kind",
    "model.rho",
    "model.sigma",
    "model.kappa",
    "model.theta",
    "model.xi",
    "model.f0",
    "model.f1",
    "model.x0",
    "market.s0",
    "market.v0",
    "market.r",
    "market.q",
    "request.x",
    "request.x_min",
    "request.x_max",
    "request.x_step",
    "request.strikes",
    "request.maturity",
    "request.side",
    "request.type",
    "mc.n_paths",
    "mc.n_steps",
    "mc.seed",
    "mc.asset_scheme",
    "mc.variance_scheme",
    "mc.averaging",
    "mc.antithetic",
    "mc.threads",
    "oracle.nodes",
    "oracle.tol_constraint",
    "oracle.tol_gradient",
    "oracle.max_outer",
    "oracle.max_inner",
    "oracle.sign",
];

/// Which option the price and mc commands report at each strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Call,
    Put,
    /// Out-of-the-money side: put below the spot, call at or above.
    Otm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", idx + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key '{key}'", idx + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key '{key}'", idx + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| config_err(format!("missing required key '{key}'")))
    }

    pub fn real(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.raw(key).map(|v| parse_real(key, v)).transpose()
    }

    fn real_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    fn required_real(&self, key: &str) -> Result<f64, CliError> {
        parse_real(key, self.require(key)?)
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| config_err(format!("'{key}' must be a non-negative integer, got '{v}'")))
            })
            .transpose()
    }

    pub fn has_section(&self, prefix: &str) -> bool {
        let dotted = format!("{prefix}.");
        self.entries.keys().any(|k| k.starts_with(&dotted))
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let kind = self.require("model.kind")?;
        let market_s0 = self.real_or("market.s0", 1.0)?;
        let model = match kind {
            "sabr" => make_sabr(self.required_real("model.sigma")?)?,
            "heston" => make_heston(
                self.required_real("model.kappa")?,
                self.required_real("model.theta")?,
                self.required_real("model.xi")?,
            )?,
            "tanh" => make_tanh(
                self.required_real("model.f0")?,
                self.required_real("model.f1")?,
                self.real_or("model.x0", 0.0)?,
                market_s0,
                self.required_real("model.sigma")?,
            )?,
            "local-vol" => return Ok(make_local_vol(self.local_vol_eta()?)),
            other => {
                return Err(config_err(format!(
                    "model.kind must be sabr, heston, tanh or local-vol, got '{other}'"
                )))
            }
        };
        Ok(model.with_rho(self.real_or("model.rho", 0.0)?)?)
    }

    /// `eta = f0 + f1 tanh(ln(S/s0) - x0)`, constant when `f1` is absent.
    pub fn local_vol_eta(&self) -> Result<Curve, CliError> {
        let f0 = self.required_real("model.f0")?;
        let f1 = self.real_or("model.f1", 0.0)?;
        let x0 = self.real_or("model.x0", 0.0)?;
        if !(f0 - f1.abs() > 0.0) {
            return Err(config_err("model.f0 must exceed |model.f1| so that eta > 0"));
        }
        Ok(if f1 == 0.0 {
            Curve::Constant(f0)
        } else {
            Curve::Tanh {
                f0,
                f1,
                x0,
                anchor: self.real_or("market.s0", 1.0)?,
            }
        })
    }

    pub fn market(&self) -> Result<MarketState, CliError> {
        Ok(MarketState::new(
            self.required_real("market.s0")?,
            self.required_real("market.v0")?,
            self.real_or("market.r", 0.0)?,
            self.real_or("market.q", 0.0)?,
        )?)
    }

    /// Log-moneyness grid from `request.x`, `request.strikes` or the
    /// `request.x_min/x_max/x_step` range.
    pub fn x_grid(&self, s0: f64) -> Result<Vec<f64>, CliError> {
        let sources = ["request.x", "request.strikes", "request.x_min"]
            .iter()
            .filter(|k| self.raw(k).is_some())
            .count();
        if sources != 1 {
            return Err(config_err(
                "give exactly one of request.x, request.strikes or request.x_min/x_max/x_step",
            ));
        }
        if let Some(list) = self.raw("request.x") {
            return parse_list("request.x", list);
        }
        if let Some(list) = self.raw("request.strikes") {
            return parse_list("request.strikes", list)?
                .into_iter()
                .map(|k| {
                    if k > 0.0 {
                        Ok((k / s0).ln())
                    } else {
                        Err(config_err(format!("strikes must be positive, got {k}")))
                    }
                })
                .collect();
        }
        let lo = self.required_real("request.x_min")?;
        let hi = self.required_real("request.x_max")?;
        let step = self.required_real("request.x_step")?;
        if !(step > 0.0) || hi < lo {
            return Err(config_err("need x_step > 0 and x_max >= x_min"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(config_err("x grid has more than 100000 points"));
        }
        Ok((0..=n).map(|i| lo + i as f64 * step).collect())
    }

    pub fn maturity(&self) -> Result<f64, CliError> {
        let t = self.required_real("request.maturity")?;
        if t > 0.0 {
            Ok(t)
        } else {
            Err(config_err(format!("request.maturity must be positive, got {t}")))
        }
    }

    pub fn side(&self, default: Side) -> Result<Side, CliError> {
        match self.raw("request.side") {
            None => Ok(default),
            Some("call") => Ok(Side::Call),
            Some("put") => Ok(Side::Put),
            Some("otm") => Ok(Side::Otm),
            Some("both") => Ok(Side::Both),
            Some(other) => Err(config_err(format!(
                "request.side must be call, put, otm or both, got '{other}'"
            ))),
        }
    }

    pub fn floating(&self) -> Result<bool, CliError> {
        match self.raw("request.type") {
            None | Some("fixed") => Ok(false),
            Some("floating") => Ok(true),
            Some(other) => Err(config_err(format!(
                "request.type must be fixed or floating, got '{other}'"
            ))),
        }
    }

    /// Monte Carlo settings; the seed is mandatory.
    pub fn mc(&self, model: &ModelSpec) -> Result<McConfig, CliError> {
        let seed = self
            .integer::<u64>("mc.seed")?
            .ok_or_else(|| config_err("mc.seed (or --seed) is required for randomized commands"))?;
        let mut cfg = McConfig::default_for(model, seed);
        if let Some(n) = self.integer("mc.n_paths")? {
            cfg.n_paths = n;
        }
        if let Some(n) = self.integer("mc.n_steps")? {
            cfg.n_steps = n;
        }
        if let Some(n) = self.integer("mc.threads")? {
            cfg.threads = Some(n);
        }
        if let Some(v) = self.raw("mc.asset_scheme") {
            cfg.asset_scheme = match v {
                "euler" => AssetScheme::Euler,
                "log-euler" => AssetScheme::LogEuler,
                _ => return Err(config_err(format!("unknown mc.asset_scheme '{v}'"))),
            };
        }
        if let Some(v) = self.raw("mc.variance_scheme") {
            cfg.variance_scheme = match v {
                "exact-gbm" => VarianceScheme::ExactGbm,
                "full-truncation" => VarianceScheme::FullTruncation,
                "euler" => VarianceScheme::GenericEuler,
                _ => return Err(config_err(format!("unknown mc.variance_scheme '{v}'"))),
            };
        }
        if let Some(v) = self.raw("mc.averaging") {
            cfg.averaging = match v {
                "trapezoid" => Averaging::Trapezoid,
                "left" => Averaging::LeftRectangle,
                _ => return Err(config_err(format!("unknown mc.averaging '{v}'"))),
            };
        }
        if let Some(v) = self.raw("mc.antithetic") {
            cfg.antithetic = match v {
                "true" => true,
                "false" => false,
                _ => return Err(config_err(format!("mc.antithetic must be true or false, got '{v}'"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn oracle(&self) -> Result<OracleOptions, CliError> {
        let mut opts = OracleOptions::default();
        if let Some(list) = self.raw("oracle.nodes") {
            opts.nodes = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| config_err(format!("oracle.nodes entries must be integers, got '{v}'")))
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.real("oracle.tol_constraint")? {
            opts.tol_constraint = v;
        }
        if let Some(v) = self.real("oracle.tol_gradient")? {
            opts.tol_gradient = v;
        }
        if let Some(n) = self.integer("oracle.max_outer")? {
            opts.max_outer = n;
        }
        if let Some(n) = self.integer("oracle.max_inner")? {
            opts.max_inner = n;
        }
        Ok(opts)
    }
}

fn parse_real(key: &str, v: &str) -> Result<f64, CliError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(config_err(format!("'{key}' must be a finite real, got '{v}'"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let out: Vec<f64> = v
        .split(',')
        .map(|s| parse_real(key, s))
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(config_err(format!("'{key}' is empty")));
    }
    Ok(out)
}
