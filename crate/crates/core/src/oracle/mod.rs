//! Direct numerical solution of the short-maturity variational problems.
//!
//! The rate function is the minimum of the path action subject to the
//! average-price constraint. [`solve_fixed`] handles the two-field problem
//! for `|rho| < 1`, [`rho_pm_rate`] the perfectly correlated reduction,
//! [`lv_rate`] the local-volatility limit and [`solve_floating`] the
//! floating-strike constraint. Each solve runs on a sequence of refined grids
//! and Richardson-extrapolates the rate.

mod banded;
mod jet;
mod pm;
mod quad;
mod solver;

pub use jet::Jet;
pub use quad::adaptive_simpson;

use crate::asymptotics::optimal_paths;
use crate::error::{invalid, require_positive, Error, Result};
use crate::model::{expansion_inputs, make_local_vol, Curve, MarketState, ModelSpec};
use pm::PmMap;
use solver::{
    ExpMap, GridSolution, Integrand, LocalVolIntegrand, LsvIntegrand, NodeMap, Problem,
    SolverSettings, Target, VarianceIntegrand,
};

/// Homotopy continuation threshold on `|x|`.
const HOMOTOPY_X: f64 = 0.3;
/// Start-dependence flag threshold on the rate.
const DISAGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Node counts of the refinement sequence.
    pub nodes: Vec<usize>,
    pub tol_constraint: f64,
    /// Tolerance on the stationarity residual per unit time.
    pub tol_gradient: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            nodes: vec![101, 201, 401],
            tol_constraint: 1e-8,
            tol_gradient: 1e-8,
            max_outer: 200,
            max_inner: 100,
        }
    }
}

impl OracleOptions {
    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.nodes.iter().any(|&n| n < 3) {
            return Err(Error::InvalidConfig(
                "oracle grids need at least 3 nodes each".into(),
            ));
        }
        if self.nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "oracle grids must be strictly increasing".into(),
            ));
        }
        if !(self.tol_constraint > 0.0 && self.tol_gradient > 0.0) {
            return Err(Error::InvalidConfig("oracle tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("oracle iteration caps must be positive".into()));
        }
        Ok(())
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol_constraint: self.tol_constraint,
            tol_gradient: self.tol_gradient,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
        }
    }
}

/// Log-asset and log-variance values on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePathPair {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl DiscretePathPair {
    pub fn new(g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if g.len() < 3 || g.len() != h.len() {
            return Err(invalid("paths", "g and h need equal length of at least 3"));
        }
        if g.iter().chain(&h).any(|v| !v.is_finite()) {
            return Err(invalid("paths", "entries must be finite"));
        }
        Ok(Self { g, h })
    }

    /// Sample `f(t) -> (g, h)` at `n_nodes` uniform points.
    pub fn from_fn(n_nodes: usize, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (g, h) = (0..n_nodes)
            .map(|i| f(i as f64 / (n_nodes - 1) as f64))
            .unzip();
        Self::new(g, h)
    }

    pub fn n_nodes(&self) -> usize {
        self.g.len()
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / (self.n_nodes() - 1) as f64
    }

    /// Dump with columns `t,g,h`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,g,h\n");
        for i in 0..self.n_nodes() {
            out.push_str(&format!("{:e},{:e},{:e}\n", self.t(i), self.g[i], self.h[i]));
        }
        out
    }

    fn nodes(&self) -> Vec<[f64; 2]> {
        self.g.iter().zip(&self.h).map(|(&g, &h)| [g, h]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Richardson-extrapolated minimum of the action.
    pub rate: f64,
    /// Minimizer on the finest grid.
    pub paths: DiscretePathPair,
    pub constraint_residual: f64,
    pub lagrange_lambda: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// `(n_nodes, rate)` for each grid of the refinement sequence.
    pub grid_rates: Vec<(usize, f64)>,
    /// Rate gap between the direct and the homotopy start when both ran.
    pub start_disagreement: Option<f64>,
}

impl OracleSolution {
    /// Whether the direct and continuation starts reached different minima.
    pub fn starts_disagree(&self) -> bool {
        self.start_disagreement
            .is_some_and(|d| d > DISAGREEMENT_TOL)
    }
}

struct Run {
    grids: Vec<(usize, GridSolution)>,
    rate: f64,
    iterations: usize,
    converged: bool,
}

fn run_grids(
    problem: &Problem<'_>,
    options: &OracleOptions,
    init: &dyn Fn(f64) -> [f64; 2],
    mu0: Option<f64>,
) -> Run {
    let settings = options.settings();
    let mut grids: Vec<(usize, GridSolution)> = Vec::new();
    let mut iterations = 0;
    for &n_nodes in &options.nodes {
        let n_int = n_nodes - 1;
        let (start, mu) = match grids.last() {
            Some((_, prev)) => (solver::resample(&prev.nodes, n_int), prev.multiplier),
            None => {
                let start: Vec<[f64; 2]> =
                    (0..=n_int).map(|i| init(i as f64 / n_int as f64)).collect();
                let mu = mu0.unwrap_or_else(|| problem.least_squares_multiplier(&start));
                (start, mu)
            }
        };
        let sol = problem.solve(start, mu, &settings);
        iterations += sol.iterations;
        grids.push((n_nodes, sol));
    }
    let converged = grids.iter().all(|(_, s)| s.converged);
    let rate = match grids.as_slice() {
        [.., (n1, a), (n2, b)] => {
            let ratio = ((*n2 - 1) as f64 / (*n1 - 1) as f64).powi(2);
            b.rate + (b.rate - a.rate) / (ratio - 1.0)
        }
        [(_, only)] => only.rate,
        [] => f64::NAN,
    };
    Run {
        grids,
        rate,
        iterations,
        converged,
    }
}

fn finish(run: Run, to_paths: impl Fn(&[[f64; 2]]) -> Result<DiscretePathPair>) -> Result<OracleSolution> {
    let (_, finest) = run
        .grids
        .last()
        .ok_or_else(|| Error::Solver("no grids were solved".into()))?;
    Ok(OracleSolution {
        rate: run.rate.max(0.0),
        paths: to_paths(&finest.nodes)?,
        constraint_residual: finest.constraint,
        lagrange_lambda: finest.multiplier,
        converged: run.converged,
        n_iterations: run.iterations,
        grid_rates: run
            .grids
            .iter()
            .map(|(n, s)| (*n, s.rate))
            .collect(),
        start_disagreement: None,
    })
}

fn two_field_paths(nodes: &[[f64; 2]]) -> Result<DiscretePathPair> {
    DiscretePathPair::new(
        nodes.iter().map(|n| n[0]).collect(),
        nodes.iter().map(|n| n[1]).collect(),
    )
}

fn check_rho_interior(model: &ModelSpec) -> Result<()> {
    if model.rho.abs() >= 1.0 {
        return Err(invalid(
            "rho",
            "|rho| = 1 makes the action singular; use rho_pm_rate",
        ));
    }
    if model.is_local_vol() {
        return Err(invalid("sigma", "identically zero vol-of-vol; use lv_rate"));
    }
    Ok(())
}

fn log_moneyness(market: &MarketState, strike: f64) -> Result<f64> {
    require_positive("strike", strike)?;
    let x = (strike / market.s0).ln();
    if x == 0.0 {
        return Err(invalid("strike", "at the money; the rate is zero and there is no OTM problem"));
    }
    Ok(x)
}

/// Rate function for fixed-strike Asian options, `|rho| < 1`.
pub fn solve_fixed(
    model: &ModelSpec,
    market: &MarketState,
    strike: f64,
    options: &OracleOptions,
) -> Result<OracleSolution> {
    options.validate()?;
    check_rho_interior(model)?;
    let x = log_moneyness(market, strike)?;
    let inputs = expansion_inputs(model, market)?;
    let series = optimal_paths(&inputs)?;
    let integrand = LsvIntegrand {
        eta: &model.eta,
        sigma: &model.sigma,
        rho: model.rho,
    };
    let problem = Problem {
        integrand: &integrand,
        map: &ExpMap,
        target: Target::Fixed(strike),
        start: [market.s0.ln(), market.v0.ln()],
    };
    let series = &series;
    let series_start = |x: f64| {
        move |t: f64| {
            let (g, h) = series.path_at(x, t).unwrap_or((series.log_s0, series.log_v0));
            [g, h]
        }
    };
    let direct = run_grids(&problem, options, &series_start(x), Some(series.lambda_at(x)));
    if x.abs() <= HOMOTOPY_X {
        return finish(direct, two_field_paths);
    }

    // continuation: solve at x/2 and stretch the deviation from the spot path
    let half_problem = Problem {
        target: Target::Fixed(market.s0 * (0.5 * x).exp()),
        ..problem
    };
    let half = run_grids(&half_problem, options, &series_start(0.5 * x), Some(series.lambda_at(0.5 * x)));
    let half_nodes = half.grids.last().map(|(_, s)| s.nodes.clone()).unwrap_or_default();
    let problem = Problem {
        target: Target::Fixed(strike),
        ..half_problem
    };
    let base = problem.start;
    let stretched = |t: f64| {
        let n_int = half_nodes.len().saturating_sub(1);
        let node = half_nodes
            .get((t * n_int as f64).round() as usize)
            .copied()
            .unwrap_or(base);
        [
            base[0] + 2.0 * (node[0] - base[0]),
            base[1] + 2.0 * (node[1] - base[1]),
        ]
    };
    let mu_half = half.grids.last().map(|(_, s)| s.multiplier);
    let homotopy = run_grids(&problem, options, &stretched, mu_half.map(|m| 2.0 * m));
    let gap = (direct.rate - homotopy.rate).abs();
    let pick_homotopy = match (direct.converged, homotopy.converged) {
        (true, true) => homotopy.rate < direct.rate,
        (false, true) => true,
        _ => false,
    };
    let mut sol = finish(if pick_homotopy { homotopy } else { direct }, two_field_paths)?;
    sol.start_disagreement = Some(gap);
    Ok(sol)
}

/// Rate function for floating-strike Asian options with strike multiple `kappa`.
pub fn solve_floating(
    model: &ModelSpec,
    market: &MarketState,
    kappa: f64,
    options: &OracleOptions,
) -> Result<OracleSolution> {
    options.validate()?;
    check_rho_interior(model)?;
    require_positive("kappa", kappa)?;
    let x = kappa.ln();
    if x == 0.0 {
        return Err(invalid("kappa", "kappa = 1 is at the money"));
    }
    expansion_inputs(model, market)?;
    let integrand = LsvIntegrand {
        eta: &model.eta,
        sigma: &model.sigma,
        rho: model.rho,
    };
    let start = [market.s0.ln(), market.v0.ln()];
    let problem = Problem {
        integrand: &integrand,
        map: &ExpMap,
        target: Target::Floating(kappa),
        start,
    };
    let init = |t: f64| [start[0] - 1.5 * x * t * t, start[1]];
    finish(run_grids(&problem, options, &init, None), two_field_paths)
}

/// Local-volatility rate `inf (1/2) int (g' / (eta(e^g) sqrt(V0)))^2` with
/// the variance frozen at `market.v0`.
pub fn lv_rate(
    eta: &Curve,
    market: &MarketState,
    strike: f64,
    options: &OracleOptions,
) -> Result<OracleSolution> {
    options.validate()?;
    let x = log_moneyness(market, strike)?;
    let lv = make_local_vol(eta.clone());
    let inputs = expansion_inputs(&lv, market)?;
    let series = optimal_paths(&inputs)?;
    let integrand = LocalVolIntegrand {
        eta,
        sqrt_v0: market.v0.sqrt(),
    };
    let problem = Problem {
        integrand: &integrand,
        map: &ExpMap,
        target: Target::Fixed(strike),
        start: [market.s0.ln(), 0.0],
    };
    let init = |t: f64| [series.path_at(x, t).map(|p| p.0).unwrap_or(series.log_s0), 0.0];
    let log_v0 = market.v0.ln();
    finish(
        run_grids(&problem, options, &init, Some(series.lambda_at(x))),
        |nodes| {
            DiscretePathPair::new(
                nodes.iter().map(|n| n[0]).collect(),
                vec![log_v0; nodes.len()],
            )
        },
    )
}

/// Rate function at `rho = sign` (`+1` or `-1`) through the one-field
/// variance problem with the asset slaved to the variance.
pub fn rho_pm_rate(
    model: &ModelSpec,
    market: &MarketState,
    strike: f64,
    sign: f64,
    options: &OracleOptions,
) -> Result<OracleSolution> {
    options.validate()?;
    if sign != 1.0 && sign != -1.0 {
        return Err(invalid("sign", format!("must be +1 or -1, got {sign}")));
    }
    if model.is_local_vol() {
        return Err(invalid("sigma", "identically zero vol-of-vol; the map is undefined"));
    }
    let x = log_moneyness(market, strike)?;
    let pm_model = model.clone().with_rho(sign)?;
    let inputs = expansion_inputs(&pm_model, market)?;
    let series = optimal_paths(&inputs)?;
    let map = PmMap {
        eta: &model.eta,
        sigma: &model.sigma,
        sign,
        log_s0: market.s0.ln(),
        log_v0: market.v0.ln(),
    };
    if map.phi(market.v0.ln()).is_none() {
        return Err(Error::ModelEvaluation(
            "perfect-correlation map cannot be built at the initial variance".into(),
        ));
    }
    let integrand = VarianceIntegrand {
        sigma: &model.sigma,
    };
    let problem = Problem {
        integrand: &integrand,
        map: &map,
        target: Target::Fixed(strike),
        start: [market.v0.ln(), 0.0],
    };
    let init = |t: f64| [series.path_at(x, t).map(|p| p.1).unwrap_or(series.log_v0), 0.0];
    finish(
        run_grids(&problem, options, &init, Some(series.lambda_at(x))),
        |nodes| {
            let g = nodes
                .iter()
                .map(|n| map.log_map(n[0]))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Solver("asset map failed on the solution".into()))?;
            DiscretePathPair::new(g, nodes.iter().map(|n| n[0]).collect())
        },
    )
}

fn lsv_integrand(model: &ModelSpec) -> Result<LsvIntegrand<'_>> {
    check_rho_interior(model)?;
    Ok(LsvIntegrand {
        eta: &model.eta,
        sigma: &model.sigma,
        rho: model.rho,
    })
}

/// Trapezoid quadrature of the action along `paths`, with centered
/// differences inside and second-order one-sided differences at the ends.
pub fn lambda_functional(paths: &DiscretePathPair, model: &ModelSpec) -> Result<f64> {
    let integrand = lsv_integrand(model)?;
    let n = paths.n_nodes();
    let dt = 1.0 / (n - 1) as f64;
    let deriv = |v: &[f64], i: usize| -> f64 {
        if i == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt)
        } else if i == n - 1 {
            (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dt)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * dt)
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let l = integrand
            .jet([paths.g[i], paths.h[i]], [deriv(&paths.g, i), deriv(&paths.h, i)])
            .v;
        total += w * dt * l;
    }
    if !total.is_finite() {
        return Err(Error::ModelEvaluation(
            "action is not finite along the path (vanishing vol-of-vol?)".into(),
        ));
    }
    Ok(total)
}

/// Sup-norm residuals `(r_g, r_h)` of the discrete Euler-Lagrange equations
/// at the interior nodes, consistent with the solver's discretization.
pub fn el_residual(
    paths: &DiscretePathPair,
    lagrange_lambda: f64,
    model: &ModelSpec,
) -> Result<(f64, f64)> {
    let integrand = lsv_integrand(model)?;
    let nodes = paths.nodes();
    let problem = Problem {
        integrand: &integrand,
        map: &ExpMap,
        target: Target::Fixed(0.0),
        start: nodes[0],
    };
    let r = problem
        .stationarity(&nodes, lagrange_lambda)
        .ok_or_else(|| Error::ModelEvaluation("constraint not finite along the path".into()))?;
    let interior = &r[..r.len() - 2];
    let sup = |k: usize| {
        interior
            .iter()
            .skip(k)
            .step_by(2)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    };
    Ok((sup(0), sup(1)))
}

/// Pointwise Euler-Lagrange residuals for smooth paths given as
/// `[value, first, second]` time derivatives:
/// `r_g = d/dt L_{g'} - L_g - lambda e^g`, `r_h = d/dt L_{h'} - L_h`.
pub fn el_pointwise(
    model: &ModelSpec,
    lagrange_lambda: f64,
    g: [f64; 3],
    h: [f64; 3],
) -> Result<(f64, f64)> {
    let integrand = lsv_integrand(model)?;
    let jet = integrand.jet([g[0], h[0]], [g[1], h[1]]);
    let ddt = |row: usize| {
        jet.h[row][0] * g[1] + jet.h[row][1] * h[1] + jet.h[row][2] * g[2] + jet.h[row][3] * h[2]
    };
    let rg = ddt(2) - jet.d[0] - lagrange_lambda * g[0].exp();
    let rh = ddt(3) - jet.d[1];
    if rg.is_finite() && rh.is_finite() {
        Ok((rg, rh))
    } else {
        Err(Error::ModelEvaluation("Euler-Lagrange residual not finite".into()))
    }
}
