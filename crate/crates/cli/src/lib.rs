//! Command implementations behind the `asian-lsv` binary.
//!
//! Every command takes a [`RunConfig`] and returns a [`CommandOutput`]
//! holding CSV text, warnings for stderr and a partial-failure flag. Exit
//! codes: 0 success, 2 configuration error, 3 partial numerical failure.

pub mod config;

use asian_lsv::asymptotics::{rate_at, rate_series, smile_quadratic, SmileQuadratic};
use asian_lsv::blackscholes::{asian_price, bs_vega, forward_price, smile_is_floored};
use asian_lsv::mc::{estimate_fixed, estimate_floating, simulate_batch};
use asian_lsv::model::{expansion_inputs, make_heston, make_local_vol, make_sabr, make_tanh, MarketState, ModelSpec};
use asian_lsv::oracle::{lv_rate, rho_pm_rate, solve_fixed, solve_floating, OracleSolution};

pub use config::{RunConfig, Side};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] asian_lsv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(
                asian_lsv::Error::ModelEvaluation(_)
                | asian_lsv::Error::NoImpliedVol(_)
                | asian_lsv::Error::Solver(_),
            ) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandOutput {
    pub csv: String,
    pub warnings: Vec<String>,
    pub partial_failure: bool,
}

impl CommandOutput {
    pub fn exit_code(&self) -> i32 {
        if self.partial_failure {
            3
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Fixed,
    Floating,
    RhoPm,
    LocalVol,
}

impl std::str::FromStr for OracleMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "floating" => Ok(Self::Floating),
            "rho-pm" => Ok(Self::RhoPm),
            "local-vol" => Ok(Self::LocalVol),
            _ => Err(CliError::Config(format!(
                "mode must be fixed, floating, rho-pm or local-vol, got '{s}'"
            ))),
        }
    }
}

/// `printf("%.12g")`.
pub fn fmt_g(v: f64) -> String {
    const PREC: i32 = 12;
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, v);
    let (mant, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -4 || exp >= PREC {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (PREC - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Three decimals, ties away from zero, no negative zero.
pub fn round3(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0 + 0.0;
    format!("{r:.3}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(fmt_g).unwrap_or_default()
}

fn side_is_call(side: Side, x: f64) -> bool {
    match side {
        Side::Call | Side::Both => true,
        Side::Put => false,
        Side::Otm => x >= 0.0,
    }
}

fn wide_warnings(grid: &[f64], out: &mut CommandOutput) {
    for &x in grid {
        if x.abs() > 0.3 {
            out.warnings.push(format!(
                "x = {} lies outside |x| <= 0.3 where the quadratic smile is reliable",
                fmt_g(x)
            ));
        }
    }
}

/// Rows `x,K,sigma_asym` of the quadratic smile.
pub fn cmd_smile(config: &RunConfig) -> Result<CommandOutput, CliError> {
    let model = config.model()?;
    let market = config.market()?;
    let smile = smile_quadratic(&expansion_inputs(&model, &market)?)?;
    let grid = config.x_grid(market.s0)?;
    let mut out = CommandOutput {
        csv: "x,K,sigma_asym\n".into(),
        ..Default::default()
    };
    wide_warnings(&grid, &mut out);
    for x in grid {
        out.csv.push_str(&format!(
            "{},{},{}\n",
            fmt_g(x),
            fmt_g(market.s0 * x.exp()),
            fmt_g(smile.vol_at(x))
        ));
    }
    Ok(out)
}

/// Rows `K,T,side,price_asym,sigma_asym,floored` from the smile fed into
/// Black-Scholes with the Asian forward.
pub fn cmd_price(config: &RunConfig) -> Result<CommandOutput, CliError> {
    let model = config.model()?;
    let market = config.market()?;
    let smile = smile_quadratic(&expansion_inputs(&model, &market)?)?;
    let grid = config.x_grid(market.s0)?;
    let t = config.maturity()?;
    let side = config.side(Side::Both)?;
    let mut out = CommandOutput {
        csv: "K,T,side,price_asym,sigma_asym,floored\n".into(),
        ..Default::default()
    };
    wide_warnings(&grid, &mut out);
    for x in grid {
        let k = market.s0 * x.exp();
        let sides: &[bool] = match side {
            Side::Both => &[true, false],
            _ => &[side_is_call(side, x)],
        };
        let floored = smile_is_floored(&smile, &market, k);
        if floored {
            out.warnings.push(format!("K = {}: smile floored", fmt_g(k)));
        }
        for &is_call in sides {
            let q = asian_price(&smile, &market, k, t, is_call)?;
            out.csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_g(k),
                fmt_g(t),
                if is_call { "call" } else { "put" },
                fmt_g(q.price),
                csv_opt(q.implied_vol),
                u8::from(floored)
            ));
        }
    }
    Ok(out)
}

/// Rows `x,K,price_mc,stderr,sigma_mc,sigma_asym,diff` from one common
/// batch of paths. For floating strikes `K` holds `kappa` and the vol
/// columns are empty.
pub fn cmd_mc(config: &RunConfig) -> Result<CommandOutput, CliError> {
    let model = config.model()?;
    let market = config.market()?;
    let mc = config.mc(&model)?;
    let floating = config.floating()?;
    let grid = config.x_grid(market.s0)?;
    let t = config.maturity()?;
    let side = config.side(Side::Otm)?;
    if side == Side::Both {
        return Err(CliError::Config("mc reports one side per strike; use call, put or otm".into()));
    }
    let smile = if floating {
        None
    } else {
        Some(smile_quadratic(&expansion_inputs(&model, &market)?)?)
    };
    let sample = simulate_batch(&model, &market, t, &mc)?;
    let mut out = CommandOutput {
        csv: "x,K,price_mc,stderr,sigma_mc,sigma_asym,diff\n".into(),
        ..Default::default()
    };
    for x in grid {
        let (k, est, asym) = if floating {
            // floating call pays (kappa S_T - A)^+, out of the money for kappa < 1
            let kappa = x.exp();
            let is_call = match side {
                Side::Otm => x < 0.0,
                s => side_is_call(s, x),
            };
            (kappa, estimate_floating(&sample, &market, kappa, t, is_call)?, None)
        } else {
            let k = market.s0 * x.exp();
            let est = estimate_fixed(&sample, &market, k, t, side_is_call(side, x))?;
            (k, est, smile.as_ref().map(|s: &SmileQuadratic| s.vol_at(x)))
        };
        if !floating && est.implied_vol.is_none() {
            out.partial_failure = true;
            out.warnings.push(format!("K = {}: no implied volatility for the MC price", fmt_g(k)));
        }
        let diff = est.implied_vol.zip(asym).map(|(a, b)| a - b);
        out.csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_g(x),
            fmt_g(k),
            fmt_g(est.price),
            fmt_g(est.std_error),
            csv_opt(est.implied_vol),
            csv_opt(asym),
            csv_opt(diff)
        ));
    }
    Ok(out)
}

/// Standard error of the MC implied vol, `stderr / vega`.
pub fn vol_stderr(market: &MarketState, strike: f64, maturity: f64, vol: f64, std_error: f64) -> asian_lsv::Result<f64> {
    let forward = forward_price(market, maturity)?;
    Ok(std_error / bs_vega(strike, maturity, vol, forward, market.r))
}

/// Rows `x,rate_series,rate_oracle,abs_diff,converged`.
pub fn cmd_oracle(config: &RunConfig, mode: OracleMode) -> Result<CommandOutput, CliError> {
    let model = config.model()?;
    let market = config.market()?;
    let opts = config.oracle()?;
    let grid = config.x_grid(market.s0)?;
    if grid.iter().any(|&x| x == 0.0) {
        return Err(CliError::Config(
            "x = 0 is at the money; the oracle only solves out-of-the-money problems".into(),
        ));
    }
    let sign = match config.real("oracle.sign")? {
        Some(s) if s == 1.0 || s == -1.0 => s,
        Some(s) => return Err(CliError::Config(format!("oracle.sign must be 1 or -1, got {s}"))),
        None if model.rho.abs() == 1.0 => model.rho,
        None => 1.0,
    };
    let series_model = match mode {
        OracleMode::Fixed => Some(model.clone()),
        OracleMode::Floating => None,
        OracleMode::RhoPm => Some(model.clone().with_rho(sign)?),
        OracleMode::LocalVol => Some(make_local_vol(model.eta.clone())),
    };
    let series = series_model
        .map(|m| expansion_inputs(&m, &market).and_then(|i| rate_series(&i)))
        .transpose()?;
    let mut out = CommandOutput {
        csv: "x,rate_series,rate_oracle,abs_diff,converged\n".into(),
        ..Default::default()
    };
    for x in grid {
        let k = market.s0 * x.exp();
        let sol: OracleSolution = match mode {
            OracleMode::Fixed => solve_fixed(&model, &market, k, &opts)?,
            OracleMode::Floating => solve_floating(&model, &market, x.exp(), &opts)?,
            OracleMode::RhoPm => rho_pm_rate(&model, &market, k, sign, &opts)?,
            OracleMode::LocalVol => lv_rate(&model.eta, &market, k, &opts)?,
        };
        if !sol.converged {
            out.warnings.push(format!("x = {}: oracle did not converge", fmt_g(x)));
        }
        if sol.starts_disagree() {
            out.warnings.push(format!(
                "x = {}: direct and continuation starts disagree by {}",
                fmt_g(x),
                fmt_g(sol.start_disagreement.unwrap_or(0.0))
            ));
        }
        let s = series.as_ref().map(|s| rate_at(s, x));
        out.csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_g(x),
            csv_opt(s),
            fmt_g(sol.rate),
            csv_opt(s.map(|s| (s - sol.rate).abs())),
            sol.converged
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub model: &'static str,
    pub rho: f64,
    pub smile: SmileQuadratic,
}

/// The nine reference configurations: SABR (`sigma = 2, V0 = 0.1`),
/// Heston (`kappa = 2, theta = 0.09, xi = 0.2, V0 = 0.04`) and Tanh
/// (`f0 = 1, f1 = -0.5, x0 = 0, sigma = 2, V0 = 0.1`), each at
/// `rho = -0.7, 0, 0.7` with `S0 = 1` and `r = q = 0`.
pub fn table1_rows() -> Result<Vec<Table1Row>, CliError> {
    let configs: [(&'static str, ModelSpec, f64); 3] = [
        ("SABR", make_sabr(2.0)?, 0.1),
        ("Heston", make_heston(2.0, 0.09, 0.2)?, 0.04),
        ("Tanh", make_tanh(1.0, -0.5, 0.0, 1.0, 2.0)?, 0.1),
    ];
    let mut rows = Vec::with_capacity(9);
    for (name, model, v0) in configs {
        let market = MarketState::new(1.0, v0, 0.0, 0.0)?;
        for rho in [-0.7, 0.0, 0.7] {
            let m = model.clone().with_rho(rho)?;
            rows.push(Table1Row {
                model: name,
                rho,
                smile: smile_quadratic(&expansion_inputs(&m, &market)?)?,
            });
        }
    }
    Ok(rows)
}

/// Rows `model,rho,sigma_atm,skew,convexity` rounded to three decimals.
pub fn cmd_table1() -> Result<CommandOutput, CliError> {
    let mut out = CommandOutput {
        csv: "model,rho,sigma_atm,skew,convexity\n".into(),
        ..Default::default()
    };
    for row in table1_rows()? {
        out.csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            fmt_g(row.rho),
            round3(row.smile.sigma_atm),
            round3(row.smile.skew),
            round3(row.smile.convexity)
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_format() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(0.1), "0.1");
        assert_eq!(fmt_g(-0.7), "-0.7");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(123456.0), "123456");
        assert_eq!(fmt_g(1.5e-7), "1.5e-07");
        assert_eq!(fmt_g(2.0e15), "2e+15");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(999999999999.5), "1e+12");
        assert_eq!(fmt_g((0.05f64).exp()), "1.05127109638");
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round3(0.0625), "0.063");
        assert_eq!(round3(-0.0625), "-0.063");
        assert_eq!(round3(-0.0001), "0.000");
        assert_eq!(round3(0.18257), "0.183");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model(asian_lsv::Error::Solver("x".into())).exit_code(), 3);
        assert_eq!(
            CliError::Model(asian_lsv::Error::InvalidParameter {
                name: "a",
                reason: "b".into()
            })
            .exit_code(),
            2
        );
    }

    #[test]
    fn sigma_column_is_constant_per_model() {
        let rows = table1_rows().unwrap();
        for chunk in rows.chunks(3) {
            assert_eq!(chunk[0].smile.sigma_atm, chunk[1].smile.sigma_atm);
            assert_eq!(chunk[1].smile.sigma_atm, chunk[2].smile.sigma_atm);
        }
    }
}
